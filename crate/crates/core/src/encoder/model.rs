use crate::attention::{AttentionOptions, AttentionPattern, AttentionPlan, Group, SegmentScores, SubsequencePartition};
use crate::error::{dim_err, Error, Result};
use crate::matrix::{DenseMatrix, MatRef};
use crate::scalar::Scalar;

use super::config::EncoderConfig;
use super::layers::{gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, NormCache};
use super::tokens::TokenSequence;
use super::weights::{interpolate_positions, EncoderWeights, LayerWeights};

/// Segment index of every position: 0 for `[CLS]` and the query group,
/// 1 for the document group.
fn segments(partition: &SubsequencePartition) -> impl Iterator<Item = usize> + '_ {
    (0..partition.seq_len()).map(|p| usize::from(partition.group_of(p) == Some(Group::Document)))
}

/// Token plus positional plus segment embedding of `seq`.
pub fn embed<T: Scalar>(seq: &TokenSequence, weights: &EncoderWeights<T>) -> Result<DenseMatrix<T>> {
    let ids = &seq.ids;
    if seq.partition.seq_len() != ids.len() {
        return Err(dim_err("embed", "partition does not cover the token sequence"));
    }
    let vocab = weights.token_embedding.rows();
    let positions = weights.position_embedding.rows();
    if ids.len() > positions {
        return Err(Error::InvalidConfig(format!("sequence of {} tokens exceeds {positions} positions", ids.len())));
    }
    let mut x = DenseMatrix::zeros(ids.len(), weights.token_embedding.cols());
    for ((p, &id), seg) in ids.iter().enumerate().zip(segments(&seq.partition)) {
        if id as usize >= vocab {
            return Err(Error::TokenOutOfRange { id, vocab });
        }
        let tok = weights.token_embedding.row(id as usize);
        let pos = weights.position_embedding.row(p);
        let seg = weights.segment_embedding.row(seg);
        for (((o, &a), &b), &c) in x.row_mut(p).iter_mut().zip(tok).zip(pos).zip(seg) {
            *o = a + b + c;
        }
    }
    Ok(x)
}

fn head_view<'a, T>(m: &'a DenseMatrix<T>, cols: &std::ops::Range<usize>) -> MatRef<'a, T> {
    m.view().col_range(cols.clone())
}

/// Intermediate values of one layer, kept for the backward pass.
#[derive(Debug)]
struct LayerCache<T> {
    input: DenseMatrix<T>,
    q: DenseMatrix<T>,
    k: DenseMatrix<T>,
    v: DenseMatrix<T>,
    probs: Vec<Vec<SegmentScores<T>>>,
    heads_out: DenseMatrix<T>,
    norm1: NormCache<T>,
    hidden: DenseMatrix<T>,
    pre_act: DenseMatrix<T>,
    act: DenseMatrix<T>,
    norm2: NormCache<T>,
}

fn attention_options<T: Scalar>(config: &EncoderConfig) -> AttentionOptions<T> {
    AttentionOptions { padding: config.padding, path: config.kernel, ..AttentionOptions::for_dim(config.head_dim()) }
}

fn layer_forward_impl<T: Scalar>(
    x: DenseMatrix<T>,
    plan: &AttentionPlan,
    w: &LayerWeights<T>,
    config: &EncoderConfig,
    keep: bool,
) -> Result<(DenseMatrix<T>, Option<LayerCache<T>>)> {
    let path = config.kernel;
    let opts = attention_options::<T>(config);
    let dh = config.head_dim();
    let q = linear(x.view(), &w.wq, &w.bq, path)?;
    let k = linear(x.view(), &w.wk, &w.bk, path)?;
    let v = linear(x.view(), &w.wv, &w.bv, path)?;
    let mut heads_out = DenseMatrix::zeros(x.rows(), config.embed_dim);
    let mut probs = Vec::new();
    for head in 0..config.heads {
        let cols = head * dh..(head + 1) * dh;
        let (out, p) = plan.forward(
            q.view().col_range(cols.clone()),
            k.view().col_range(cols.clone()),
            v.view().col_range(cols.clone()),
            &opts,
        )?;
        for i in 0..out.rows() {
            heads_out.row_mut(i)[cols.clone()].copy_from_slice(out.row(i));
        }
        if keep {
            probs.push(p);
        }
    }
    let mut residual = linear(heads_out.view(), &w.wo, &w.bo, path)?;
    residual.add_assign(&x);
    let (hidden, norm1) = layer_norm(&residual, &w.ln1_gamma, &w.ln1_beta);
    drop(residual);
    let pre_act = linear(hidden.view(), &w.w1, &w.b1, path)?;
    let mut act = pre_act.clone();
    act.as_mut_slice().iter_mut().for_each(|a| *a = gelu(*a));
    let mut residual = linear(act.view(), &w.w2, &w.b2, path)?;
    residual.add_assign(&hidden);
    let (out, norm2) = layer_norm(&residual, &w.ln2_gamma, &w.ln2_beta);
    let cache = keep.then(|| LayerCache { input: x, q, k, v, probs, heads_out, norm1, hidden, pre_act, act, norm2 });
    Ok((out, cache))
}

/// One post-norm transformer layer: multi-head attention under `pattern`,
/// residual and norm, then a GELU feed-forward block, residual and norm.
pub fn layer_forward<T: Scalar>(
    x: &DenseMatrix<T>,
    partition: &SubsequencePartition,
    pattern: &AttentionPattern,
    weights: &LayerWeights<T>,
    config: &EncoderConfig,
) -> Result<DenseMatrix<T>> {
    if x.rows() != partition.seq_len() || x.cols() != config.embed_dim {
        return Err(dim_err("layer_forward", format!("input {:?} for {} tokens", x.shape(), partition.seq_len())));
    }
    let plan = AttentionPlan::build(pattern, partition)?;
    let (out, _) = layer_forward_impl(x.clone(), &plan, weights, config, false)?;
    if !out.is_finite() {
        return Err(Error::NonFinite { layer: 0 });
    }
    Ok(out)
}

/// Last-layer hidden states (`s × h`) for `seq`.
pub fn encoder_forward<T: Scalar>(
    seq: &TokenSequence,
    config: &EncoderConfig,
    weights: &EncoderWeights<T>,
) -> Result<DenseMatrix<T>> {
    run(seq, config, weights, false).map(|(out, _, _)| out)
}

fn run<T: Scalar>(
    seq: &TokenSequence,
    config: &EncoderConfig,
    weights: &EncoderWeights<T>,
    keep: bool,
) -> Result<(DenseMatrix<T>, Vec<LayerCache<T>>, AttentionPlan)> {
    // one plan per pass, shared by every layer and head
    let plan = AttentionPlan::build(&config.pattern, &seq.partition)?;
    let mut x = embed(seq, weights)?;
    let mut caches = Vec::new();
    for (l, w) in weights.layers.iter().enumerate() {
        let (out, cache) = layer_forward_impl(x, &plan, w, config, keep)?;
        if !out.is_finite() {
            return Err(Error::NonFinite { layer: l });
        }
        caches.extend(cache);
        x = out;
    }
    Ok((x, caches, plan))
}

/// Linear map of the `[CLS]` row: `O[0] · w + b`.
pub fn relevance_score<T: Scalar>(last_layer: &DenseMatrix<T>, head_weight: &DenseMatrix<T>, head_bias: T) -> T {
    let cls = last_layer.row(0);
    cls.iter().enumerate().fold(head_bias, |acc, (j, &x)| acc + x * head_weight.get(j, 0))
}

/// Everything needed to back-propagate one scored pair.
#[derive(Debug)]
pub struct ForwardTrace<T> {
    ids: Vec<u32>,
    partition: SubsequencePartition,
    plan: AttentionPlan,
    layers: Vec<LayerCache<T>>,
    output: DenseMatrix<T>,
}

impl<T> ForwardTrace<T> {
    pub fn output(&self) -> &DenseMatrix<T> {
        &self.output
    }
}

/// An encoder configuration together with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub config: EncoderConfig,
    pub weights: EncoderWeights<T>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new(mut config: EncoderConfig, seed: u64) -> Result<Self> {
        config.precision = T::PRECISION;
        let weights = EncoderWeights::init(&config, seed)?;
        Ok(Self { config, weights })
    }

    pub fn from_parts(mut config: EncoderConfig, weights: EncoderWeights<T>) -> Result<Self> {
        config.precision = T::PRECISION;
        config.validate()?;
        weights.check(&config)?;
        Ok(Self { config, weights })
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<DenseMatrix<T>> {
        encoder_forward(seq, &self.config, &self.weights)
    }

    pub fn score(&self, seq: &TokenSequence) -> Result<T> {
        let out = self.forward(seq)?;
        Ok(relevance_score(&out, &self.weights.head_weight, self.weights.head_bias.get(0, 0)))
    }

    /// Scores `seq`, keeping intermediates for [`Encoder::backward`].
    pub fn score_traced(&self, seq: &TokenSequence) -> Result<(T, ForwardTrace<T>)> {
        let (output, layers, plan) = run(seq, &self.config, &self.weights, true)?;
        let score = relevance_score(&output, &self.weights.head_weight, self.weights.head_bias.get(0, 0));
        Ok((score, ForwardTrace { ids: seq.ids.clone(), partition: seq.partition.clone(), plan, layers, output }))
    }

    /// Adds `d_score · ∂score/∂θ` to `grads`.
    pub fn backward(&self, trace: &ForwardTrace<T>, d_score: T, grads: &mut EncoderWeights<T>) -> Result<()> {
        let w = &self.weights;
        let h = self.config.embed_dim;
        for (j, &x) in trace.output.row(0).iter().enumerate() {
            grads.head_weight.row_mut(j)[0] += d_score * x;
        }
        grads.head_bias.row_mut(0)[0] += d_score;
        let mut grad = DenseMatrix::zeros(trace.output.rows(), h);
        for (j, g) in grad.row_mut(0).iter_mut().enumerate() {
            *g = d_score * w.head_weight.get(j, 0);
        }
        for ((cache, lw), lg) in trace.layers.iter().zip(&w.layers).zip(&mut grads.layers).rev() {
            grad = self.layer_backward(grad, cache, &trace.plan, lw, lg)?;
        }
        for ((p, &id), seg) in trace.ids.iter().enumerate().zip(segments(&trace.partition)) {
            for (j, &g) in grad.row(p).iter().enumerate() {
                grads.token_embedding.row_mut(id as usize)[j] += g;
                grads.position_embedding.row_mut(p)[j] += g;
                grads.segment_embedding.row_mut(seg)[j] += g;
            }
        }
        Ok(())
    }

    fn layer_backward(
        &self,
        grad_out: DenseMatrix<T>,
        c: &LayerCache<T>,
        plan: &AttentionPlan,
        w: &LayerWeights<T>,
        g: &mut LayerWeights<T>,
    ) -> Result<DenseMatrix<T>> {
        let config = &self.config;
        let grad_r2 = layer_norm_backward(&grad_out, &c.norm2, &w.ln2_gamma, &mut g.ln2_gamma, &mut g.ln2_beta);
        let mut grad_act = linear_backward(grad_r2.view(), c.act.view(), &w.w2, &mut g.w2, &mut g.b2)?;
        for (d, &x) in grad_act.as_mut_slice().iter_mut().zip(c.pre_act.as_slice()) {
            *d *= gelu_grad(x);
        }
        let mut grad_hidden = linear_backward(grad_act.view(), c.hidden.view(), &w.w1, &mut g.w1, &mut g.b1)?;
        grad_hidden.add_assign(&grad_r2);
        let grad_r1 = layer_norm_backward(&grad_hidden, &c.norm1, &w.ln1_gamma, &mut g.ln1_gamma, &mut g.ln1_beta);
        let grad_heads = linear_backward(grad_r1.view(), c.heads_out.view(), &w.wo, &mut g.wo, &mut g.bo)?;

        let s = c.input.rows();
        let dh = config.head_dim();
        let opts = attention_options::<T>(config);
        let zeros = || DenseMatrix::zeros(s, config.embed_dim);
        let (mut gq, mut gk, mut gv) = (zeros(), zeros(), zeros());
        for (head, probs) in c.probs.iter().enumerate() {
            let cols = head * dh..(head + 1) * dh;
            let (dq, dk, dv) = plan.backward(
                head_view(&grad_heads, &cols),
                head_view(&c.q, &cols),
                head_view(&c.k, &cols),
                head_view(&c.v, &cols),
                probs,
                &opts,
            )?;
            for i in 0..s {
                gq.row_mut(i)[cols.clone()].copy_from_slice(dq.row(i));
                gk.row_mut(i)[cols.clone()].copy_from_slice(dk.row(i));
                gv.row_mut(i)[cols.clone()].copy_from_slice(dv.row(i));
            }
        }
        let mut grad_in = grad_r1;
        grad_in.add_assign(&linear_backward(gq.view(), c.input.view(), &w.wq, &mut g.wq, &mut g.bq)?);
        grad_in.add_assign(&linear_backward(gk.view(), c.input.view(), &w.wk, &mut g.wk, &mut g.bk)?);
        grad_in.add_assign(&linear_backward(gv.view(), c.input.view(), &w.wv, &mut g.wv, &mut g.bv)?);
        Ok(grad_in)
    }

    /// Replaces the positional table by a linear resampling to `new_max`
    /// rows and updates the config.
    pub fn interpolate_positions(&mut self, new_max: usize) -> Result<()> {
        self.weights.position_embedding = interpolate_positions(&self.weights.position_embedding, new_max)?;
        self.config.max_positions = new_max;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Encoder<U> {
        let config = EncoderConfig { precision: U::PRECISION, ..self.config.clone() };
        Encoder { config, weights: self.weights.cast() }
    }
}
