//! Row-major dense matrices, strided views, and the dense products used by
//! the encoder.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::instrument;
use crate::memtrack::{MemCategory, TrackedVec};
use crate::scalar::Scalar;

/// Which implementation of a product to run.
///
/// `Naive` is the literal triple loop: single-threaded, sequential
/// accumulation, and multiply-adds counted through [`crate::instrument`].
/// `Tiled` processes row tiles in parallel with multi-accumulator inner
/// products. Each output element is produced by exactly one task with a
/// fixed summation order, so results are reproducible run to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelPath {
    Naive,
    #[default]
    Tiled,
}

/// Rows per parallel task in the tiled kernels.
pub(crate) const ROW_TILE: usize = 32;

/// Row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: TrackedVec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::zeros_in(rows, cols, MemCategory::Activation)
    }

    pub fn zeros_in(rows: usize, cols: usize, category: MemCategory) -> Self {
        Self { rows, cols, data: TrackedVec::filled(rows * cols, T::zero(), category) }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::from_vec_in(rows, cols, data, MemCategory::Activation)
    }

    pub fn from_vec_in(rows: usize, cols: usize, data: Vec<T>, category: MemCategory) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err(
                "DenseMatrix::from_vec",
                format!("{} elements for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Self { rows, cols, data: TrackedVec::from_vec(data, category) })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data: TrackedVec::from_vec(data, MemCategory::Activation) }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    /// Copies a view into a fresh matrix.
    pub fn from_view(view: MatRef<'_, T>) -> Self {
        let mut out = Self::zeros(view.rows, view.cols);
        for i in 0..view.rows {
            out.row_mut(i).copy_from_slice(view.row(i));
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> DenseMatrix<U> {
        let data = self.data.iter().map(|&x| U::from_f64_lossy(x.to_f64_lossy())).collect();
        DenseMatrix { rows: self.rows, cols: self.cols, data: TrackedVec::from_vec(data, self.category()) }
    }

    fn category(&self) -> MemCategory {
        self.data.category().unwrap_or(MemCategory::Activation)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `true` when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: T) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(other.data.iter()).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    /// Sum over rows, giving one value per column.
    pub fn column_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for (o, &x) in out.iter_mut().zip(self.row(i)) {
                *o += x;
            }
        }
        out
    }
}

impl<T> DenseMatrix<T> {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T
    where
        T: Copy,
    {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    pub fn view(&self) -> MatRef<'_, T> {
        MatRef { data: &self.data, rows: self.rows, cols: self.cols, stride: self.cols }
    }

    /// Size of the backing buffer in bytes.
    pub fn bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<T>()
    }
}

/// Borrowed, possibly strided, row-major matrix view.
///
/// Row `i` occupies `data[i * stride .. i * stride + cols]`. Row ranges of a
/// matrix and column ranges (a single attention head) are both zero-copy.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    stride: usize,
}

impl<'a, T> MatRef<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize, stride: usize) -> Self {
        assert!(cols <= stride || rows <= 1, "stride shorter than row");
        assert!(rows == 0 || (rows - 1) * stride + cols <= data.len(), "view exceeds buffer");
        Self { data, rows, cols, stride }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [T] {
        let start = i * self.stride;
        &self.data[start..start + self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T
    where
        T: Copy,
    {
        self.data[i * self.stride + j]
    }

    pub fn row_range(&self, range: Range<usize>) -> MatRef<'a, T> {
        assert!(range.end <= self.rows);
        let len = range.end - range.start;
        if len == 0 {
            return MatRef { data: &self.data[..0], rows: 0, cols: self.cols, stride: self.stride };
        }
        let start = range.start * self.stride;
        MatRef { data: &self.data[start..], rows: len, cols: self.cols, stride: self.stride }
    }

    pub fn col_range(&self, range: Range<usize>) -> MatRef<'a, T> {
        assert!(range.end <= self.cols);
        let data = if self.rows == 0 { &self.data[..0] } else { &self.data[range.start..] };
        MatRef { data, rows: self.rows, cols: range.end - range.start, stride: self.stride }
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let x = &a[c * 8..c * 8 + 8];
        let y = &b[c * 8..c * 8 + 8];
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for k in chunks * 8..a.len() {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Runs `f(row_index, out_row)` for every row of `out`, in parallel row tiles
/// when `parallel` is set.
pub(crate) fn for_each_row<T: Scalar>(out: &mut [T], cols: usize, parallel: bool, f: impl Fn(usize, &mut [T]) + Sync) {
    if cols == 0 {
        return;
    }
    if parallel {
        out.par_chunks_mut(ROW_TILE * cols).enumerate().for_each(|(tile, chunk)| {
            for (r, row) in chunk.chunks_mut(cols).enumerate() {
                f(tile * ROW_TILE + r, row);
            }
        });
    } else {
        for (i, row) in out.chunks_mut(cols).enumerate() {
            f(i, row);
        }
    }
}

/// `A · B` for `A: n×k`, `B: k×m`.
pub fn matmul<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>, path: KernelPath) -> Result<DenseMatrix<T>> {
    if a.cols() != b.rows() {
        return Err(dim_err("matmul", format!("{}x{} times {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    match path {
        KernelPath::Naive => {
            let mut count = 0u64;
            for i in 0..a.rows() {
                for j in 0..b.cols() {
                    let mut acc = T::zero();
                    for l in 0..a.cols() {
                        acc += a.get(i, l) * b.get(l, j);
                        count += 1;
                    }
                    out.set(i, j, acc);
                }
            }
            instrument::add_macs(count);
        }
        KernelPath::Tiled => {
            let cols = b.cols();
            for_each_row(out.as_mut_slice(), cols, true, |i, row| {
                for (l, &x) in a.row(i).iter().enumerate() {
                    axpy(x, b.row(l), row);
                }
            });
        }
    }
    Ok(out)
}

/// `A · Bᵀ` for `A: n×k`, `B: m×k`.
pub fn matmul_a_bt<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>, path: KernelPath) -> Result<DenseMatrix<T>> {
    matmul_a_bt_in(a, b, path, MemCategory::Activation)
}

pub(crate) fn matmul_a_bt_in<T: Scalar>(
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    path: KernelPath,
    category: MemCategory,
) -> Result<DenseMatrix<T>> {
    if a.cols() != b.cols() {
        return Err(dim_err("matmul_a_bt", format!("{}x{} times ({}x{})^T", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    let mut out = DenseMatrix::zeros_in(a.rows(), b.rows(), category);
    match path {
        KernelPath::Naive => {
            let mut count = 0u64;
            for i in 0..a.rows() {
                for j in 0..b.rows() {
                    let mut acc = T::zero();
                    for l in 0..a.cols() {
                        acc += a.get(i, l) * b.get(j, l);
                        count += 1;
                    }
                    out.set(i, j, acc);
                }
            }
            instrument::add_macs(count);
        }
        KernelPath::Tiled => {
            let cols = b.rows();
            for_each_row(out.as_mut_slice(), cols, true, |i, row| {
                let ai = a.row(i);
                for (j, o) in row.iter_mut().enumerate() {
                    *o = dot(ai, b.row(j));
                }
            });
        }
    }
    Ok(out)
}

/// `Aᵀ · B` for `A: n×k`, `B: n×m`. Used for weight gradients; always tiled.
pub fn matmul_at_b<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>) -> Result<DenseMatrix<T>> {
    if a.rows() != b.rows() {
        return Err(dim_err("matmul_at_b", format!("({}x{})^T times {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    let mut out = DenseMatrix::zeros(a.cols(), b.cols());
    let cols = b.cols();
    for_each_row(out.as_mut_slice(), cols, true, |k, row| {
        for n in 0..a.rows() {
            axpy(a.get(n, k), b.row(n), row);
        }
    });
    Ok(out)
}
