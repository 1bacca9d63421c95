//! Dense building blocks of a transformer layer and their adjoints.

use crate::error::Result;
use crate::matrix::{matmul, matmul_a_bt, matmul_at_b, DenseMatrix, KernelPath, MatRef};
use crate::scalar::Scalar;

pub(crate) const LN_EPS: f64 = 1e-12;

/// `xW + b` with `b` broadcast over rows.
pub(crate) fn linear<T: Scalar>(
    x: MatRef<'_, T>,
    w: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    path: KernelPath,
) -> Result<DenseMatrix<T>> {
    let mut y = matmul(x, w.view(), path)?;
    let bias = b.row(0);
    for i in 0..y.rows() {
        for (o, &bj) in y.row_mut(i).iter_mut().zip(bias) {
            *o += bj;
        }
    }
    Ok(y)
}

/// Backward of [`linear`]: accumulates `∂W`, `∂b` and returns `∂x`.
pub(crate) fn linear_backward<T: Scalar>(
    grad_y: MatRef<'_, T>,
    x: MatRef<'_, T>,
    w: &DenseMatrix<T>,
    grad_w: &mut DenseMatrix<T>,
    grad_b: &mut DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    grad_w.add_assign(&matmul_at_b(x, grad_y)?);
    for i in 0..grad_y.rows() {
        for (g, &d) in grad_b.row_mut(0).iter_mut().zip(grad_y.row(i)) {
            *g += d;
        }
    }
    matmul_a_bt(grad_y, w.view(), KernelPath::Tiled)
}

/// Per-row normalisation state kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct NormCache<T> {
    pub normalized: DenseMatrix<T>,
    pub inv_std: Vec<T>,
}

/// Row-wise layer normalisation `γ ⊙ (x − μ)/√(σ² + ε) + β`.
pub(crate) fn layer_norm<T: Scalar>(
    x: &DenseMatrix<T>,
    gamma: &DenseMatrix<T>,
    beta: &DenseMatrix<T>,
) -> (DenseMatrix<T>, NormCache<T>) {
    let n = T::from_usize(x.cols()).expect("width fits");
    let eps = T::from_f64_lossy(LN_EPS);
    let mut normalized = DenseMatrix::zeros(x.rows(), x.cols());
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        inv_std.push(inv);
        for (j, &v) in row.iter().enumerate() {
            let z = (v - mean) * inv;
            normalized.set(i, j, z);
            out.set(i, j, z * gamma.get(0, j) + beta.get(0, j));
        }
    }
    (out, NormCache { normalized, inv_std })
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    grad_y: &DenseMatrix<T>,
    cache: &NormCache<T>,
    gamma: &DenseMatrix<T>,
    grad_gamma: &mut DenseMatrix<T>,
    grad_beta: &mut DenseMatrix<T>,
) -> DenseMatrix<T> {
    let cols = grad_y.cols();
    let n = T::from_usize(cols).expect("width fits");
    let mut grad_x = DenseMatrix::zeros(grad_y.rows(), cols);
    let mut gz = vec![T::zero(); cols];
    for i in 0..grad_y.rows() {
        let z = cache.normalized.row(i);
        let dy = grad_y.row(i);
        let (mut sum, mut dot) = (T::zero(), T::zero());
        for j in 0..cols {
            gz[j] = dy[j] * gamma.get(0, j);
            sum += gz[j];
            dot += gz[j] * z[j];
            grad_gamma.row_mut(0)[j] += dy[j] * z[j];
            grad_beta.row_mut(0)[j] += dy[j];
        }
        let scale = cache.inv_std[i] / n;
        for (j, g) in grad_x.row_mut(i).iter_mut().enumerate() {
            *g = scale * (n * gz[j] - sum - z[j] * dot);
        }
    }
    grad_x
}

const GELU_C: f64 = 0.7978845608028654; // √(2/π)
const GELU_A: f64 = 0.044715;

/// Tanh approximation of the Gaussian error linear unit.
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let (c, a, half) = (T::from_f64_lossy(GELU_C), T::from_f64_lossy(GELU_A), T::from_f64_lossy(0.5));
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let (c, a, half) = (T::from_f64_lossy(GELU_C), T::from_f64_lossy(GELU_A), T::from_f64_lossy(0.5));
    let t = (c * (x + a * x * x * x)).tanh();
    let three = T::from_f64_lossy(3.0);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}
