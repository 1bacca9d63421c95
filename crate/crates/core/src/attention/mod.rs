//! Windowed cross-attention and group-level attention patterns.

mod cross;
mod pattern;
mod plan;
mod segments;

pub use cross::{
    attention_scores, cross_attention_backward, cross_attention_cached, full_attention, weighted_values,
    windowed_cross_attention, AttentionOptions, CrossAttentionGrads, Target, TargetKind,
};
pub use pattern::{
    AttentionPattern, GlobalTokens, Group, PatternKind, SubsequencePartition, TargetSpec, Window, QDS_GLOBAL_STRIDE,
};
pub use plan::{apply_pattern, AttentionPlan, Block, PlanTarget, RowSet};
pub use segments::{segment_softmax, Padding, Segment, SegmentScores};
