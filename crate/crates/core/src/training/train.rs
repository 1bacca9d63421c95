use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{assemble_input, Encoder, EncoderConfig, EncoderWeights};
use crate::error::{Error, Result};
use crate::eval::ndcg_from_grades;

use super::data::{SyntheticDataset, ValidationQuery};
use super::gradcheck::accumulate;
use super::loss::LossKind;
use super::optim::{warmup_lr, AdamW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Triples (document pairs) per step.
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    pub loss: LossKind,
    /// Validation interval in steps; 0 validates only at the end.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 3e-3,
            batch_size: 16,
            warmup_fraction: 0.01,
            weight_decay: 0.01,
            loss: LossKind::RankNet,
            eval_every: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub step: usize,
    pub loss: f64,
    pub ndcg10: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Encoder<f64>,
    pub trace: Vec<TracePoint>,
    /// Per-query validation nDCG@10 of the final model.
    pub validation: Vec<f64>,
}

impl TrainOutcome {
    pub fn mean_ndcg(&self) -> f64 {
        mean(&self.validation)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Per-query nDCG@10 of `model` on validation queries.
pub fn evaluate(model: &Encoder<f64>, queries: &[ValidationQuery]) -> Result<Vec<f64>> {
    queries
        .par_iter()
        .map(|q| {
            let mut scored = q
                .docs
                .iter()
                .zip(&q.grades)
                .map(|(d, &g)| {
                    let seq = assemble_input(&q.query, d, model.config.max_positions)?;
                    Ok((model.score(&seq)?, g))
                })
                .collect::<Result<Vec<_>>>()?;
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            let ranked: Vec<u32> = scored.iter().map(|&(_, g)| g).collect();
            Ok(ndcg_from_grades(&ranked, &q.grades, 10))
        })
        .collect()
}

/// Trains a freshly initialised encoder (seeded by `train.seed`) on the
/// synthetic triples with AdamW and linear warm-up.
pub fn train_toy(config: EncoderConfig, data: &SyntheticDataset, train: &TrainConfig) -> Result<TrainOutcome> {
    if data.train.is_empty() || train.batch_size == 0 {
        return Err(Error::InvalidConfig("training needs triples and a positive batch size".into()));
    }
    if train.steps == 0 || !(train.lr.is_finite() && train.lr > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need steps > 0 and a positive finite lr, got {} and {}",
            train.steps, train.lr
        )));
    }
    let mut model = Encoder::<f64>::new(config, train.seed)?;
    let mut opt = AdamW::new(&model.weights, train.weight_decay);
    let warmup = (train.steps as f64 * train.warmup_fraction).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut cursor = order.len();
    let mut trace = Vec::with_capacity(train.steps);
    for step in 0..train.steps {
        let mut batch = Vec::with_capacity(train.batch_size);
        while batch.len() < train.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        // fixed reduction order regardless of sampling order
        batch.sort_unstable();
        let parts: Vec<(f64, EncoderWeights<f64>)> = batch
            .par_iter()
            .map(|&i| {
                let mut g = EncoderWeights::zeros(&model.config);
                let l = accumulate(&model, std::slice::from_ref(&data.train[i]), train.loss, &mut g)?;
                Ok((l, g))
            })
            .collect::<Result<_>>()?;
        let mut grads = EncoderWeights::zeros(&model.config);
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l;
            for (acc, part) in grads.tensors_mut().into_iter().zip(g.named()) {
                acc.add_assign(part.1);
            }
        }
        let n = batch.len() as f64;
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        for t in grads.tensors_mut() {
            t.scale(1.0 / n);
        }
        opt.step(&mut model.weights, &grads, warmup_lr(train.lr, step, warmup));
        let ndcg10 = if train.eval_every > 0 && (step + 1) % train.eval_every == 0 {
            Some(mean(&evaluate(&model, &data.validation)?))
        } else {
            None
        };
        log::debug!("step {step}: loss {loss:.5}");
        trace.push(TracePoint { step, loss, ndcg10 });
    }
    let validation = evaluate(&model, &data.validation)?;
    Ok(TrainOutcome { model, trace, validation })
}

/// Writes `step,loss,ndcg10` rows; steps without validation leave the
/// last column empty.
pub fn write_trace_csv(trace: &[TracePoint], mut out: impl Write) -> Result<()> {
    writeln!(out, "step,loss,ndcg10")?;
    for p in trace {
        match p.ndcg10 {
            Some(n) => writeln!(out, "{},{},{}", p.step, p.loss, n)?,
            None => writeln!(out, "{},{},", p.step, p.loss)?,
        }
    }
    Ok(())
}
