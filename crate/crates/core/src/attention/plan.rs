//! Lowering of an [`AttentionPattern`] over a concrete partition into a list
//! of cross-attention blocks, and their execution for one head.
//!
//! A plan is built once per forward pass and reused by every layer and
//! head. Executing it materialises the scores of every block before any
//! softmax, so the live attention buffers of one head peak at exactly
//! [`AttentionPlan::score_slots`] scalars.

use std::ops::Range;
use std::sync::Arc;

use crate::error::Result;
use crate::matrix::{DenseMatrix, MatRef};
use crate::memtrack::{MemCategory, TrackedVec};
use crate::scalar::Scalar;

use super::cross::{attention_scores, cross_attention_backward, weighted_values, AttentionOptions, Target, TargetKind};
use super::pattern::{AttentionPattern, Group, SubsequencePartition, Window};
use super::segments::{segment_softmax, SegmentScores};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowSet {
    Range(Range<usize>),
    Gather(Vec<usize>),
}

impl RowSet {
    pub fn len(&self) -> usize {
        match self {
            RowSet::Range(r) => r.len(),
            RowSet::Gather(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn position(&self, local: usize) -> usize {
        match self {
            RowSet::Range(r) => r.start + local,
            RowSet::Gather(v) => v[local],
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanTarget {
    pub rows: RowSet,
    pub kind: TargetKind,
}

impl PlanTarget {
    fn width(&self) -> usize {
        match self.kind {
            TargetKind::Band(w) => 2 * w + 1,
            TargetKind::Full | TargetKind::Masked(_) => self.rows.len(),
        }
    }
}

/// One cross-attention call: `source` rows attend to `targets`.
#[derive(Debug, Clone)]
pub struct Block {
    pub source: RowSet,
    pub targets: Vec<PlanTarget>,
    /// Source-local rows whose output another block produces.
    pub overridden: Option<Vec<bool>>,
}

#[derive(Debug, Clone)]
pub struct AttentionPlan {
    seq_len: usize,
    blocks: Vec<Block>,
}

enum Rows<'a, T> {
    View(MatRef<'a, T>),
    Owned(DenseMatrix<T>),
}

impl<T: Scalar> Rows<'_, T> {
    fn view(&self) -> MatRef<'_, T> {
        match self {
            Rows::View(v) => *v,
            Rows::Owned(m) => m.view(),
        }
    }
}

fn select<'a, T: Scalar>(m: MatRef<'a, T>, rows: &RowSet) -> Rows<'a, T> {
    match rows {
        RowSet::Range(r) => Rows::View(m.row_range(r.clone())),
        RowSet::Gather(idx) => {
            let mut out = DenseMatrix::zeros(idx.len(), m.cols());
            for (i, &p) in idx.iter().enumerate() {
                out.row_mut(i).copy_from_slice(m.row(p));
            }
            Rows::Owned(out)
        }
    }
}

impl AttentionPlan {
    pub fn build(pattern: &AttentionPattern, partition: &SubsequencePartition) -> Result<Self> {
        pattern.validate(partition)?;
        let doc = partition.range(Group::Document);
        let globals_rel = pattern.global_positions(partition)?;
        let globals_abs: Vec<usize> = globals_rel.iter().map(|g| doc.start + g).collect();

        let mut blocks = Vec::new();
        for source in Group::ALL {
            let src_range = partition.range(source);
            if src_range.is_empty() {
                continue;
            }
            let mut targets: Vec<PlanTarget> = pattern
                .targets(source)
                .iter()
                .map(|t| PlanTarget { rows: RowSet::Range(partition.range(t.group)), kind: t.window.into() })
                .collect();
            let mut overridden = None;
            if !globals_abs.is_empty() {
                let doc_window = pattern.window(source, Group::Document);
                if doc_window != Some(Window::Full) {
                    // global document tokens not already reachable through the window
                    let mut mask = Vec::with_capacity(src_range.len() * globals_rel.len());
                    for r in 0..src_range.len() {
                        for &g in &globals_rel {
                            mask.push(!doc_window.is_some_and(|w| w.covers(r, g)));
                        }
                    }
                    targets.push(PlanTarget {
                        rows: RowSet::Gather(globals_abs.clone()),
                        kind: TargetKind::Masked(Arc::new(TrackedVec::from_vec(mask, MemCategory::Activation))),
                    });
                }
                if source == Group::Document {
                    let mut flags = vec![false; src_range.len()];
                    for &g in &globals_rel {
                        flags[g] = true;
                    }
                    overridden = Some(flags);
                }
            }
            blocks.push(Block { source: RowSet::Range(src_range), targets, overridden });
        }
        if !globals_abs.is_empty() {
            let targets = Group::ALL
                .into_iter()
                .filter(|&g| partition.len(g) > 0)
                .map(|g| PlanTarget { rows: RowSet::Range(partition.range(g)), kind: TargetKind::Full })
                .collect();
            blocks.push(Block { source: RowSet::Gather(globals_abs), targets, overridden: None });
        }
        Ok(Self { seq_len: partition.seq_len(), blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Attention score slots live at once while executing one head.
    pub fn score_slots(&self) -> usize {
        self.blocks.iter().map(|b| b.targets.iter().map(|t| b.source.len() * t.width()).sum::<usize>()).sum()
    }

    /// Runs one head. `q`, `k`, `v` are `seq_len × d`. Returns the
    /// `seq_len × d` output and, per block, the attention probabilities.
    pub fn forward<T: Scalar>(
        &self,
        q: MatRef<'_, T>,
        k: MatRef<'_, T>,
        v: MatRef<'_, T>,
        opts: &AttentionOptions<T>,
    ) -> Result<(DenseMatrix<T>, Vec<SegmentScores<T>>)> {
        let sources: Vec<Rows<'_, T>> = self.blocks.iter().map(|b| select(q, &b.source)).collect();
        let kv: Vec<Vec<(Rows<'_, T>, Rows<'_, T>)>> = self
            .blocks
            .iter()
            .map(|b| b.targets.iter().map(|t| (select(k, &t.rows), select(v, &t.rows))).collect())
            .collect();
        let target_lists: Vec<Vec<Target<'_, T>>> = self
            .blocks
            .iter()
            .zip(&kv)
            .map(|(b, pairs)| {
                b.targets
                    .iter()
                    .zip(pairs)
                    .map(|(t, (kr, vr))| Target { keys: kr.view(), values: vr.view(), kind: t.kind.clone() })
                    .collect()
            })
            .collect();

        let mut probs = Vec::with_capacity(self.blocks.len());
        for (src, targets) in sources.iter().zip(&target_lists) {
            probs.push(attention_scores(src.view(), targets, opts.path)?);
        }
        let probs =
            probs.into_iter().map(|s| segment_softmax(s, opts.scale, opts.padding)).collect::<Result<Vec<_>>>()?;

        let mut out = DenseMatrix::zeros(self.seq_len, q.cols());
        for ((block, p), targets) in self.blocks.iter().zip(&probs).zip(&target_lists) {
            let part = weighted_values(p, targets, opts.path)?;
            for r in 0..block.source.len() {
                if block.overridden.as_ref().is_some_and(|o| o[r]) {
                    continue;
                }
                out.row_mut(block.source.position(r)).copy_from_slice(part.row(r));
            }
        }
        Ok((out, probs))
    }

    /// Backward of [`AttentionPlan::forward`]: `(∂Q, ∂K, ∂V)`.
    pub fn backward<T: Scalar>(
        &self,
        grad_out: MatRef<'_, T>,
        q: MatRef<'_, T>,
        k: MatRef<'_, T>,
        v: MatRef<'_, T>,
        probs: &[SegmentScores<T>],
        opts: &AttentionOptions<T>,
    ) -> Result<(DenseMatrix<T>, DenseMatrix<T>, DenseMatrix<T>)> {
        let d = q.cols();
        let mut gq = DenseMatrix::zeros(self.seq_len, d);
        let mut gk = DenseMatrix::zeros(self.seq_len, d);
        let mut gv = DenseMatrix::zeros(self.seq_len, d);
        for (block, p) in self.blocks.iter().zip(probs) {
            let src = select(q, &block.source);
            let mut g_block = DenseMatrix::zeros(block.source.len(), d);
            for r in 0..block.source.len() {
                if !block.overridden.as_ref().is_some_and(|o| o[r]) {
                    g_block.row_mut(r).copy_from_slice(grad_out.row(block.source.position(r)));
                }
            }
            let kv: Vec<(Rows<'_, T>, Rows<'_, T>)> =
                block.targets.iter().map(|t| (select(k, &t.rows), select(v, &t.rows))).collect();
            let targets: Vec<Target<'_, T>> = block
                .targets
                .iter()
                .zip(&kv)
                .map(|(t, (kr, vr))| Target { keys: kr.view(), values: vr.view(), kind: t.kind.clone() })
                .collect();
            let grads = cross_attention_backward(g_block.view(), src.view(), &targets, p, opts)?;
            scatter_add(&mut gq, &block.source, &grads.query);
            for (t, (dk, dv)) in block.targets.iter().zip(&grads.targets) {
                scatter_add(&mut gk, &t.rows, dk);
                scatter_add(&mut gv, &t.rows, dv);
            }
        }
        Ok((gq, gk, gv))
    }
}

fn scatter_add<T: Scalar>(dst: &mut DenseMatrix<T>, rows: &RowSet, src: &DenseMatrix<T>) {
    for r in 0..rows.len() {
        let p = rows.position(r);
        for (a, &b) in dst.row_mut(p).iter_mut().zip(src.row(r)) {
            *a += b;
        }
    }
}

/// Applies `pattern` to single-head `q`, `k`, `v` (each `s × d`, rows in
/// sequence order) and returns `(O_c, O_q, O_d)`.
pub fn apply_pattern<T: Scalar>(
    partition: &SubsequencePartition,
    q: MatRef<'_, T>,
    k: MatRef<'_, T>,
    v: MatRef<'_, T>,
    pattern: &AttentionPattern,
    opts: &AttentionOptions<T>,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>, DenseMatrix<T>)> {
    if q.rows() != partition.seq_len() || k.rows() != partition.seq_len() || v.rows() != partition.seq_len() {
        return Err(crate::error::dim_err(
            "apply_pattern",
            format!(
                "partition covers {} rows, got Q/K/V with {}/{}/{}",
                partition.seq_len(),
                q.rows(),
                k.rows(),
                v.rows()
            ),
        ));
    }
    let plan = AttentionPlan::build(pattern, partition)?;
    let (out, _) = plan.forward(q, k, v, opts)?;
    let part = |g: Group| DenseMatrix::from_view(out.view().row_range(partition.range(g)));
    Ok((part(Group::Cls), part(Group::Query), part(Group::Document)))
}
