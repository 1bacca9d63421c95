use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{assemble_input, Encoder, EncoderWeights};
use crate::error::{Error, Result};

use super::data::Triple;
use super::loss::LossKind;

/// Mean pairwise loss of `batch` and its gradient.
pub fn batch_loss_and_grads(
    model: &Encoder<f64>,
    batch: &[Triple],
    loss: LossKind,
) -> Result<(f64, EncoderWeights<f64>)> {
    let mut grads = EncoderWeights::zeros(&model.config);
    let total = accumulate(model, batch, loss, &mut grads)?;
    let n = batch.len().max(1) as f64;
    for t in grads.tensors_mut() {
        t.scale(1.0 / n);
    }
    Ok((total / n, grads))
}

/// Adds the summed gradient of `batch` into `grads`; returns the summed loss.
pub(crate) fn accumulate(
    model: &Encoder<f64>,
    batch: &[Triple],
    loss: LossKind,
    grads: &mut EncoderWeights<f64>,
) -> Result<f64> {
    let max = model.config.max_positions;
    let mut total = 0.0;
    for t in batch {
        let (sp, trace_p) = model.score_traced(&assemble_input(&t.query, &t.positive, max)?)?;
        let (sn, trace_n) = model.score_traced(&assemble_input(&t.query, &t.negative, max)?)?;
        let (l, d) = loss.eval(sp, sn, t.teacher)?;
        total += l;
        model.backward(&trace_p, d, grads)?;
        model.backward(&trace_n, -d, grads)?;
    }
    Ok(total)
}

fn batch_loss(model: &Encoder<f64>, batch: &[Triple], loss: LossKind) -> Result<f64> {
    let max = model.config.max_positions;
    let mut total = 0.0;
    for t in batch {
        let sp = model.score(&assemble_input(&t.query, &t.positive, max)?)?;
        let sn = model.score(&assemble_input(&t.query, &t.negative, max)?)?;
        total += loss.eval(sp, sn, t.teacher)?.0;
    }
    Ok(total / batch.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a − n| / max(|a|, |n|, floor)` over checked parameters.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter attaining the maximum, as `tensor[index]`.
    pub worst: String,
}

/// Compares back-propagated gradients of the mean batch loss with central
/// differences at step `eps` on at least `samples` parameters, spread over
/// every tensor. Embedding tables are sampled only on rows the batch uses.
pub fn grad_check(
    model: &Encoder<f64>,
    batch: &[Triple],
    loss: LossKind,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    const FLOOR: f64 = 1e-6;
    let (l0, grads) = batch_loss_and_grads(model, batch, loss)?;
    if !l0.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used_tokens: Vec<usize> = batch
        .iter()
        .flat_map(|t| t.query.iter().chain(&t.positive).chain(&t.negative))
        .map(|&id| id as usize)
        .chain([crate::encoder::CLS as usize, crate::encoder::SEP as usize])
        .collect();
    used_tokens.sort_unstable();
    used_tokens.dedup();
    let max_len = batch.iter().map(|t| t.query.len() + t.positive.len().max(t.negative.len()) + 3).max().unwrap_or(0);

    let names: Vec<String> = grads.named().into_iter().map(|(n, _)| n).collect();
    let per_tensor = samples.div_ceil(names.len());
    let mut probe = model.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, checked: 0, worst: String::new() };
    for (ti, name) in names.iter().enumerate() {
        let (rows, cols) = grads.named()[ti].1.shape();
        let candidate_rows: Vec<usize> = match name.as_str() {
            "token_embedding" => used_tokens.clone(),
            "position_embedding" => (0..max_len.min(rows)).collect(),
            _ => (0..rows).collect(),
        };
        let pool = candidate_rows.len() * cols;
        for pick in sample(&mut rng, pool, per_tensor.min(pool)) {
            let idx = candidate_rows[pick / cols] * cols + pick % cols;
            let analytic = grads.named()[ti].1.as_slice()[idx];
            let original = model.weights.named()[ti].1.as_slice()[idx];
            probe.weights.tensors_mut()[ti].as_mut_slice()[idx] = original + eps;
            let up = batch_loss(&probe, batch, loss)?;
            probe.weights.tensors_mut()[ti].as_mut_slice()[idx] = original - eps;
            let down = batch_loss(&probe, batch, loss)?;
            probe.weights.tensors_mut()[ti].as_mut_slice()[idx] = original;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            let numeric = (up - down) / (2.0 * eps);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("{name}[{idx}]");
            }
        }
    }
    Ok(report)
}
