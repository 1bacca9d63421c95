//! Dense reference forms of band matrices.

use crate::error::{dim_err, Result};
use crate::matrix::{DenseMatrix, MatRef};
use crate::scalar::Scalar;

use super::storage::BandMatrix;

/// One entry of a [`MaskedMatrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entry<T> {
    Value(T),
    /// Outside the band. Carries no number, so it cannot leak into arithmetic.
    Masked,
}

impl<T: Copy> Entry<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Entry::Value(v) => Some(v),
            Entry::Masked => None,
        }
    }
}

/// Dense matrix whose entries may be masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Entry<T>>,
}

impl<T: Scalar> MaskedMatrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Entry<T> {
        self.data[i * self.cols + j]
    }

    pub fn masked_count(&self) -> usize {
        self.data.iter().filter(|e| matches!(e, Entry::Masked)).count()
    }

    /// Replaces masked entries with `fill`.
    pub fn fill_masked(&self, fill: T) -> DenseMatrix<T> {
        DenseMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).value().unwrap_or(fill))
    }
}

/// Full `Q · Kᵀ` with entries where `|col − row| > w` masked.
///
/// Computed with a plain sequential triple loop, independently of the band
/// kernels it is used to check.
pub fn dense_band_oracle<T: Scalar>(q: MatRef<'_, T>, k: MatRef<'_, T>, window: usize) -> Result<MaskedMatrix<T>> {
    if q.cols() != k.cols() {
        return Err(dim_err("dense_band_oracle", format!("Q has {} columns, K has {}", q.cols(), k.cols())));
    }
    let (rows, cols) = (q.rows(), k.rows());
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for t in 0..cols {
            if i.abs_diff(t) > window {
                data.push(Entry::Masked);
            } else {
                let mut acc = T::zero();
                for l in 0..q.cols() {
                    acc += q.get(i, l) * k.get(t, l);
                }
                data.push(Entry::Value(acc));
            }
        }
    }
    Ok(MaskedMatrix { rows, cols, data })
}

/// Expands a band to `rows × target_cols`: entry `(i, i + j − w)` receives
/// slot `(i, j)` for every valid slot; all other entries receive `fill`.
pub fn band_to_dense<T: Scalar>(band: &BandMatrix<T>, target_cols: usize, fill: T) -> DenseMatrix<T> {
    let mut out = DenseMatrix::from_fn(band.rows(), target_cols, |_, _| fill);
    for i in 0..band.rows() {
        for j in band.valid_range(i) {
            let t = i + j - band.window();
            if t < target_cols {
                out.set(i, t, band.get(i, j));
            }
        }
    }
    out
}

/// Like [`band_to_dense`] but marks out-of-band entries as [`Entry::Masked`].
pub fn band_to_masked<T: Scalar>(band: &BandMatrix<T>, target_cols: usize) -> MaskedMatrix<T> {
    let mut data = vec![Entry::Masked; band.rows() * target_cols];
    for i in 0..band.rows() {
        for j in band.valid_range(i) {
            let t = i + j - band.window();
            if t < target_cols {
                data[i * target_cols + t] = Entry::Value(band.get(i, j));
            }
        }
    }
    MaskedMatrix { rows: band.rows(), cols: target_cols, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::band_qk;

    #[test]
    fn identity_window_zero_is_diagonal() {
        let q = DenseMatrix::<f64>::identity(4);
        let m = dense_band_oracle(q.view(), q.view(), 0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    assert_eq!(m.get(i, j), Entry::Value(1.0));
                } else {
                    assert_eq!(m.get(i, j), Entry::Masked);
                }
            }
        }
    }

    #[test]
    fn wide_window_has_no_sentinels() {
        let q = DenseMatrix::<f64>::from_fn(5, 2, |i, j| (i + 2 * j) as f64);
        let m = dense_band_oracle(q.view(), q.view(), 4).unwrap();
        assert_eq!(m.masked_count(), 0);
    }

    #[test]
    fn window_zero_band_of_ones_expands_to_identity() {
        let b = BandMatrix::from_fn(4, 4, 0, |_, _| 1.0).unwrap();
        assert_eq!(band_to_dense(&b, 4, 0.0), DenseMatrix::identity(4));
    }

    #[test]
    fn expansion_matches_index_enumeration() {
        // brute force: enumerate every (i, j) slot and place it by the index rule
        let (rows, target, w) = (5usize, 7usize, 2usize);
        let b = BandMatrix::from_fn(rows, target, w, |i, t| (100 * i + t) as f64).unwrap();
        let d = band_to_dense(&b, target, -1.0);
        for i in 0..rows {
            for t in 0..target {
                let mut expect = -1.0;
                for j in 0..2 * w + 1 {
                    if i as i64 + j as i64 - w as i64 == t as i64 {
                        expect = (100 * i + t) as f64;
                    }
                }
                assert_eq!(d.get(i, t), expect);
            }
        }
    }

    #[test]
    fn both_paths_agree_after_filling_sentinels() {
        let q = DenseMatrix::<f64>::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let k = DenseMatrix::<f64>::from_fn(6, 3, |i, j| ((i * 2 + j * 5) % 7) as f64 - 3.0);
        let band = band_qk(q.view(), k.view(), 1).unwrap();
        let oracle = dense_band_oracle(q.view(), k.view(), 1).unwrap();
        assert_eq!(band_to_dense(&band, 6, 0.0), oracle.fill_masked(0.0));
        assert_eq!(band_to_masked(&band, 6), oracle);
    }
}
