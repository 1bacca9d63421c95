use std::sync::Arc;

use crate::band::{band_pv_backward, band_pv_with, band_qk_backward, band_qk_with};
use crate::error::{dim_err, Result};
use crate::matrix::{matmul, matmul_a_bt, matmul_a_bt_in, matmul_at_b, DenseMatrix, KernelPath, MatRef};
use crate::memtrack::{MemCategory, TrackedVec};
use crate::scalar::Scalar;

use super::pattern::Window;
use super::segments::{segment_softmax, segment_softmax_backward, Padding, Segment, SegmentScores};

/// How a source attends to one target group.
#[derive(Debug, Clone)]
pub enum TargetKind {
    Full,
    Band(usize),
    /// Full scores with a row-major `source × target` mask (`true` = allowed).
    Masked(Arc<TrackedVec<bool>>),
}

impl From<Window> for TargetKind {
    fn from(w: Window) -> Self {
        match w {
            Window::Full => TargetKind::Full,
            Window::Local(w) => TargetKind::Band(w),
        }
    }
}

/// One `(K_i, V_i, w_i)` entry of the target tuple.
#[derive(Debug, Clone)]
pub struct Target<'a, T> {
    pub keys: MatRef<'a, T>,
    pub values: MatRef<'a, T>,
    pub kind: TargetKind,
}

impl<'a, T> Target<'a, T> {
    pub fn new(keys: MatRef<'a, T>, values: MatRef<'a, T>, window: Window) -> Self {
        Self { keys, values, kind: window.into() }
    }
}

/// Execution knobs shared by every attention call in a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct AttentionOptions<T> {
    /// Scores are divided by this before the softmax (√d).
    pub scale: T,
    pub padding: Padding,
    pub path: KernelPath,
}

impl<T: Scalar> AttentionOptions<T> {
    /// `scale = √dim`, excluded padding, tiled kernels.
    pub fn for_dim(dim: usize) -> Self {
        Self { scale: T::from_usize(dim).expect("dim fits").sqrt(), padding: Padding::Exclude, path: KernelPath::Tiled }
    }
}

fn check_targets<T>(q: &MatRef<'_, T>, targets: &[Target<'_, T>]) -> Result<()> {
    if targets.is_empty() {
        return Err(dim_err("windowed_cross_attention", "empty target tuple"));
    }
    for (i, t) in targets.iter().enumerate() {
        if t.keys.cols() != q.cols() || t.keys.rows() != t.values.rows() || t.values.cols() != targets[0].values.cols()
        {
            return Err(dim_err(
                "windowed_cross_attention",
                format!(
                    "target {i}: Q is {}x{}, K is {}x{}, V is {}x{}",
                    q.rows(),
                    q.cols(),
                    t.keys.rows(),
                    t.keys.cols(),
                    t.values.rows(),
                    t.values.cols()
                ),
            ));
        }
        if let TargetKind::Masked(m) = &t.kind {
            if m.len() != q.rows() * t.keys.rows() {
                return Err(dim_err("windowed_cross_attention", format!("target {i}: mask size {}", m.len())));
            }
        }
    }
    Ok(())
}

/// Raw scores `[A₁, …, A_j]` of `q` against each target.
pub fn attention_scores<T: Scalar>(
    q: MatRef<'_, T>,
    targets: &[Target<'_, T>],
    path: KernelPath,
) -> Result<SegmentScores<T>> {
    check_targets(&q, targets)?;
    let segments = targets
        .iter()
        .map(|t| {
            Ok(match &t.kind {
                TargetKind::Full => {
                    Segment::Dense { scores: matmul_a_bt_in(q, t.keys, path, MemCategory::Attention)?, mask: None }
                }
                TargetKind::Masked(m) => Segment::Dense {
                    scores: matmul_a_bt_in(q, t.keys, path, MemCategory::Attention)?,
                    mask: Some(m.clone()),
                },
                TargetKind::Band(w) => Segment::Band(band_qk_with(q, t.keys, *w, path)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SegmentScores::new(segments)
}

/// `Σᵢ Pᵢ ⊙_{wᵢ} Vᵢ`.
pub fn weighted_values<T: Scalar>(
    probs: &SegmentScores<T>,
    targets: &[Target<'_, T>],
    path: KernelPath,
) -> Result<DenseMatrix<T>> {
    let mut out: Option<DenseMatrix<T>> = None;
    for (seg, t) in probs.segments().iter().zip(targets) {
        let part = match seg {
            Segment::Dense { scores, .. } => matmul(scores.view(), t.values, path)?,
            Segment::Band(b) => band_pv_with(b, t.values, path)?,
        };
        match out.as_mut() {
            None => out = Some(part),
            Some(o) => o.add_assign(&part),
        }
    }
    out.ok_or_else(|| dim_err("weighted_values", "no segments"))
}

/// Generalized windowed cross-attention, also returning the probabilities.
pub fn cross_attention_cached<T: Scalar>(
    q: MatRef<'_, T>,
    targets: &[Target<'_, T>],
    opts: &AttentionOptions<T>,
) -> Result<(DenseMatrix<T>, SegmentScores<T>)> {
    let scores = attention_scores(q, targets, opts.path)?;
    let probs = segment_softmax(scores, opts.scale, opts.padding)?;
    let out = weighted_values(&probs, targets, opts.path)?;
    Ok((out, probs))
}

/// `Attention_𝒲(Q, 𝒦, 𝒱) = Σᵢ Pᵢ ⊙_{wᵢ} Vᵢ` with
/// `[P₁, …, P_j] = softmax([Q ⊡_{w₁} K₁, …, Q ⊡_{w_j} K_j] / scale)`.
pub fn windowed_cross_attention<T: Scalar>(
    q: MatRef<'_, T>,
    targets: &[Target<'_, T>],
    opts: &AttentionOptions<T>,
) -> Result<DenseMatrix<T>> {
    cross_attention_cached(q, targets, opts).map(|(out, _)| out)
}

/// Standard scaled dot-product attention, `softmax(QKᵀ/√h) V`.
pub fn full_attention<T: Scalar>(q: MatRef<'_, T>, k: MatRef<'_, T>, v: MatRef<'_, T>) -> Result<DenseMatrix<T>> {
    let opts = AttentionOptions::for_dim(q.cols());
    windowed_cross_attention(q, &[Target::new(k, v, Window::Full)], &opts)
}

/// Gradients of one cross-attention call.
#[derive(Debug)]
pub struct CrossAttentionGrads<T> {
    pub query: DenseMatrix<T>,
    /// `(∂K_i, ∂V_i)` per target, in tuple order.
    pub targets: Vec<(DenseMatrix<T>, DenseMatrix<T>)>,
}

/// Backward of [`cross_attention_cached`] given `∂L/∂O`.
pub fn cross_attention_backward<T: Scalar>(
    grad_out: MatRef<'_, T>,
    q: MatRef<'_, T>,
    targets: &[Target<'_, T>],
    probs: &SegmentScores<T>,
    opts: &AttentionOptions<T>,
) -> Result<CrossAttentionGrads<T>> {
    check_targets(&q, targets)?;
    if grad_out.rows() != q.rows() || probs.rows() != q.rows() {
        return Err(dim_err("cross_attention_backward", "row count mismatch"));
    }
    // ∂P and ∂V per segment
    let mut grad_values = Vec::with_capacity(targets.len());
    let mut grad_prob_segments = Vec::with_capacity(targets.len());
    for (seg, t) in probs.segments().iter().zip(targets) {
        match seg {
            Segment::Dense { scores, mask } => {
                let gp = matmul_a_bt(grad_out, t.values, KernelPath::Tiled)?;
                grad_values.push(matmul_at_b(scores.view(), grad_out)?);
                grad_prob_segments.push(Segment::Dense { scores: gp, mask: mask.clone() });
            }
            Segment::Band(b) => {
                let (gp, gv) = band_pv_backward(grad_out, b, t.values)?;
                grad_values.push(gv);
                grad_prob_segments.push(Segment::Band(gp));
            }
        }
    }
    let mut grad_scores = SegmentScores::new(grad_prob_segments)?;
    segment_softmax_backward(probs, &mut grad_scores, opts.scale);

    let mut grad_q = DenseMatrix::zeros(q.rows(), q.cols());
    let mut grads = Vec::with_capacity(targets.len());
    for ((seg, t), gv) in grad_scores.into_segments().into_iter().zip(targets).zip(grad_values) {
        let gk = match seg {
            Segment::Dense { scores: ga, .. } => {
                grad_q.add_assign(&matmul(ga.view(), t.keys, KernelPath::Tiled)?);
                matmul_at_b(ga.view(), q)?
            }
            Segment::Band(ga) => {
                let (gq, gk) = band_qk_backward(&ga, q, t.keys)?;
                grad_q.add_assign(&gq);
                gk
            }
        };
        grads.push((gk, gv));
    }
    Ok(CrossAttentionGrads { query: grad_q, targets: grads })
}
