use std::ops::Range;

use crate::error::{dim_err, Error, Result};
use crate::matrix::DenseMatrix;
use crate::memtrack::{MemCategory, TrackedVec};
use crate::scalar::Scalar;

/// Space-efficient band storage: `rows × (2w+1)` scalars.
///
/// Slot `(i, j)` holds the interaction of source row `i` with target row
/// `t = i + j − w` (zero-based). A slot is valid iff `0 ≤ t < target_len`;
/// invalid slots always hold zero. The validity mask is stored explicitly
/// next to the data.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix<T> {
    rows: usize,
    target_len: usize,
    window: usize,
    data: TrackedVec<T>,
    valid: TrackedVec<bool>,
}

/// `2w + 1`, or an error if it does not fit in `usize`.
pub fn band_width(window: usize) -> Result<usize> {
    window.checked_mul(2).and_then(|x| x.checked_add(1)).ok_or(Error::WindowOverflow { window })
}

impl<T: Scalar> BandMatrix<T> {
    /// All-zero band for `rows` source rows against `target_len` target rows.
    pub fn zeros(rows: usize, target_len: usize, window: usize) -> Result<Self> {
        let width = band_width(window)?;
        let len = rows.checked_mul(width).ok_or(Error::WindowOverflow { window })?;
        let mut valid = Vec::with_capacity(len);
        for i in 0..rows {
            for j in 0..width {
                valid.push(target_index(i, j, window, target_len).is_some());
            }
        }
        Ok(Self {
            rows,
            target_len,
            window,
            data: TrackedVec::filled(len, T::zero(), MemCategory::Attention),
            valid: TrackedVec::from_vec(valid, MemCategory::Activation),
        })
    }

    /// Builds a band from `f(i, t)` evaluated at every valid slot.
    pub fn from_fn(
        rows: usize,
        target_len: usize,
        window: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self> {
        let mut band = Self::zeros(rows, target_len, window)?;
        for i in 0..rows {
            for j in band.valid_range(i) {
                let t = i + j - window;
                band.set(i, j, f(i, t));
            }
        }
        Ok(band)
    }

    /// Extracts the band of a dense `rows × target_len` matrix.
    pub fn from_dense(dense: &DenseMatrix<T>, window: usize) -> Result<Self> {
        Self::from_fn(dense.rows(), dense.cols(), window, |i, t| dense.get(i, t))
    }

    /// Overwrites a slot. Writes to invalid slots are ignored so the
    /// zero-padding invariant cannot be broken.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        let idx = i * self.width() + j;
        if self.valid[idx] {
            self.data[idx] = value;
        }
    }

    pub fn map_valid(&mut self, mut f: impl FnMut(T) -> T) {
        for (x, &v) in self.data.iter_mut().zip(self.valid.iter()) {
            if v {
                *x = f(*x);
            }
        }
    }

    /// Entries restricted to the narrower window `narrow ≤ w`, as a band of
    /// that window.
    pub fn restrict(&self, narrow: usize) -> Result<Self> {
        if narrow > self.window {
            return Err(dim_err("BandMatrix::restrict", format!("window {narrow} wider than {}", self.window)));
        }
        Self::from_fn(self.rows, self.target_len, narrow, |i, t| self.get(i, t + self.window - i))
    }
}

impl<T> BandMatrix<T> {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn target_len(&self) -> usize {
        self.target_len
    }

    #[inline]
    pub fn window(&self) -> usize {
        self.window
    }

    /// `2w + 1`.
    #[inline]
    pub fn width(&self) -> usize {
        2 * self.window + 1
    }

    /// Number of scalar slots allocated (`rows × (2w+1)`).
    pub fn slots(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T
    where
        T: Copy,
    {
        self.data[i * self.width() + j]
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[i * self.width() + j]
    }

    /// Target row addressed by slot `(i, j)`, if it exists.
    #[inline]
    pub fn target(&self, i: usize, j: usize) -> Option<usize> {
        target_index(i, j, self.window, self.target_len)
    }

    /// The contiguous range of valid slot columns in row `i`.
    #[inline]
    pub fn valid_range(&self, i: usize) -> Range<usize> {
        valid_columns(i, self.window, self.target_len)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.width();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Mutable access to the raw slots, invalid ones included. Callers must
    /// keep invalid slots at zero.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<T>()
    }
}

#[inline]
pub(crate) fn target_index(i: usize, j: usize, window: usize, target_len: usize) -> Option<usize> {
    let t = (i + j).checked_sub(window)?;
    (t < target_len).then_some(t)
}

#[inline]
pub(crate) fn valid_columns(i: usize, window: usize, target_len: usize) -> Range<usize> {
    // t = i + j - w ∈ [0, target_len)  ⇔  j ∈ [w - i, target_len + w - i)
    let lo = window.saturating_sub(i);
    let hi = (target_len + window).saturating_sub(i).min(2 * window + 1);
    lo..hi.max(lo)
}
