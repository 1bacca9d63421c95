//! Space-efficient banded products for windowed attention.

mod kernels;
pub mod oracle;
mod storage;

pub use kernels::{band_pv, band_pv_backward, band_pv_with, band_qk, band_qk_backward, band_qk_with};
pub use oracle::{band_to_dense, band_to_masked, dense_band_oracle, Entry, MaskedMatrix};
pub use storage::{band_width, BandMatrix};
