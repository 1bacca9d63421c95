//! Windowed band-matrix attention and sparse asymmetric cross-encoders.
//!
//! The crate is organised bottom-up:
//!
//! * [`band`]: `Q ⊡_w Kᵀ` / `P ⊙_w V` products over `s × (2w+1)` band
//!   storage, their adjoints, and a dense masked oracle.
//! * [`attention`]: windowed cross-attention over tuples of key/value
//!   groups with a segment-concatenated softmax, and the Full / Longformer /
//!   QDS / Sparse patterns over `[CLS]`, query and document groups.
//! * [`encoder`]: a BERT-style encoder stack driven by an attention pattern,
//!   with a `[CLS]` relevance head.
//! * [`training`]: pairwise losses, AdamW, gradient checking and a
//!   synthetic term-overlap task.
//! * [`bench`]: random-input efficiency measurement, FLOP model, reports.
//! * [`eval`]: nDCG@k, paired TOST, TREC run/qrels IO and re-ranking.

pub mod attention;
pub mod band;
pub mod bench;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod instrument;
pub mod matrix;
pub mod memtrack;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, KernelPath, MatRef};
pub use scalar::{Precision, Scalar};
