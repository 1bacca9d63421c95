//! Closed-form multiply-add counts of one encoder forward pass.
//!
//! The counts match what the naive kernel path executes: band segments are
//! charged for all `2w+1` slots including padding, dense and masked
//! segments for every `source × target` pair, and the `[CLS]` head is not
//! counted.

use crate::attention::{AttentionPattern, AttentionPlan, SubsequencePartition, TargetKind, Window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopCount {
    /// Q, K, V and output projections.
    pub projections: u64,
    pub feed_forward: u64,
    /// Score and weighted-value products summed over heads.
    pub attention: u64,
    /// Some band segment is at least as wide as its target group, so the
    /// windowed kernel does no less work than a dense one.
    pub edge_case: bool,
}

impl FlopCount {
    pub fn total(&self) -> u64 {
        self.projections + self.feed_forward + self.attention
    }
}

/// Multiply-adds of one score product `Q ⊡ Kᵀ` (equivalently `P ⊙ V`) for
/// `source_len` rows against a `target_len`-row segment with head size `h`.
pub fn segment_macs(source_len: usize, target_len: usize, window: Window, h: usize) -> u64 {
    let width = match window {
        Window::Full => target_len,
        Window::Local(w) => 2 * w + 1,
    };
    (source_len * width * h) as u64
}

/// Whether a `w`-window over a `target_len`-row segment costs at least as
/// much as dense attention over it.
pub fn window_exceeds_segment(target_len: usize, w: usize) -> bool {
    2 * w + 1 >= target_len
}

/// Forward-pass multiply-adds for `pattern` over `partition` in a
/// `layers`-deep encoder of width `embed_dim`, `heads` heads and
/// feed-forward width `ff_dim`.
pub fn flop_count(
    pattern: &AttentionPattern,
    partition: &SubsequencePartition,
    embed_dim: usize,
    heads: usize,
    ff_dim: usize,
    layers: usize,
) -> Result<FlopCount> {
    if heads == 0 || embed_dim % heads != 0 {
        return Err(Error::InvalidConfig(format!("width {embed_dim} does not split into {heads} heads")));
    }
    let plan = AttentionPlan::build(pattern, partition)?;
    let dh = embed_dim / heads;
    let mut per_head = 0u64;
    let mut edge_case = false;
    for block in plan.blocks() {
        for t in &block.targets {
            let window = match t.kind {
                TargetKind::Band(w) => {
                    edge_case |= window_exceeds_segment(t.rows.len(), w);
                    Window::Local(w)
                }
                TargetKind::Full | TargetKind::Masked(_) => Window::Full,
            };
            // scores and weighted values
            per_head += 2 * segment_macs(block.source.len(), t.rows.len(), window, dh);
        }
    }
    let (s, h, l) = (partition.seq_len() as u64, embed_dim as u64, layers as u64);
    Ok(FlopCount {
        projections: l * 4 * s * h * h,
        feed_forward: l * 2 * s * h * ff_dim as u64,
        attention: l * heads as u64 * per_head,
        edge_case,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::PatternKind;

    #[test]
    fn dense_score_cost_is_s_squared_h() {
        let p = SubsequencePartition::for_lengths(5, 20);
        let s = p.seq_len() as u64;
        let c = flop_count(&AttentionPattern::full(), &p, 8, 1, 16, 1).unwrap();
        assert_eq!(c.attention, 2 * s * s * 8);
        assert!(!c.edge_case);
    }

    #[test]
    fn windowed_segment_is_linear_in_length() {
        assert_eq!(segment_macs(100, 100, Window::Local(4), 16), 100 * 9 * 16);
        assert_eq!(segment_macs(200, 200, Window::Local(4), 16), 2 * segment_macs(100, 100, Window::Local(4), 16));
        assert_eq!(segment_macs(200, 200, Window::Full, 16), 4 * segment_macs(100, 100, Window::Full, 16));
    }

    #[test]
    fn oversized_window_is_flagged() {
        let p = SubsequencePartition::for_lengths(4, 6);
        let small =
            flop_count(&AttentionPattern::preset(PatternKind::Sparse, Window::Local(1)), &p, 8, 2, 8, 1).unwrap();
        let big = flop_count(&AttentionPattern::preset(PatternKind::Sparse, Window::Local(6)), &p, 8, 2, 8, 1).unwrap();
        let dense = flop_count(&AttentionPattern::preset(PatternKind::Sparse, Window::Full), &p, 8, 2, 8, 1).unwrap();
        assert!(!small.edge_case && big.edge_case);
        assert!(big.attention >= dense.attention);
        assert!(small.attention < dense.attention);
    }

    #[test]
    fn heads_must_divide_width() {
        let p = SubsequencePartition::for_lengths(2, 2);
        assert!(flop_count(&AttentionPattern::full(), &p, 10, 3, 8, 1).is_err());
    }
}
