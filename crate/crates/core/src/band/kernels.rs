//! Windowed products `Q ⊡_w Kᵀ → A` and `P ⊙_w V → O`, with adjoints.
//!
//! Row `i` of the source is aligned with row `i` of the target, and slot `j`
//! addresses target row `i + j − w`. Source and target lengths may differ.
//!
//! The naive path evaluates the zero-padded formula literally, so it
//! performs exactly `rows · (2w+1) · h` multiply-adds per product. The tiled
//! path visits only valid slots. Backward passes are tiled: `gradQ` is
//! reduced per source row and `gradK`/`gradV` per target row (gather form),
//! each in increasing source-row order, so results are bit-reproducible.

use crate::error::{dim_err, Result};
use crate::instrument;
use crate::matrix::{axpy, dot, for_each_row, DenseMatrix, KernelPath, MatRef};
use crate::scalar::Scalar;

use super::storage::{band_width, BandMatrix};

/// `Q ⊡_w Kᵀ` on the default (tiled) path.
pub fn band_qk<T: Scalar>(q: MatRef<'_, T>, k: MatRef<'_, T>, window: usize) -> Result<BandMatrix<T>> {
    band_qk_with(q, k, window, KernelPath::Tiled)
}

pub fn band_qk_with<T: Scalar>(
    q: MatRef<'_, T>,
    k: MatRef<'_, T>,
    window: usize,
    path: KernelPath,
) -> Result<BandMatrix<T>> {
    if q.cols() != k.cols() {
        return Err(dim_err("band_qk", format!("Q has {} columns, K has {}", q.cols(), k.cols())));
    }
    let width = band_width(window)?;
    let mut band = BandMatrix::zeros(q.rows(), k.rows(), window)?;
    let target_len = k.rows();
    let h = q.cols();
    match path {
        KernelPath::Naive => {
            let zero_row = vec![T::zero(); h];
            let mut count = 0u64;
            for i in 0..q.rows() {
                for j in 0..width {
                    let key = match band.target(i, j) {
                        Some(t) => k.row(t),
                        None => &zero_row[..],
                    };
                    let mut acc = T::zero();
                    for (l, &kl) in key.iter().enumerate() {
                        acc += q.get(i, l) * kl;
                        count += 1;
                    }
                    band.set(i, j, acc);
                }
            }
            instrument::add_macs(count);
        }
        KernelPath::Tiled => {
            for_each_row(band.as_mut_slice(), width, true, |i, row| {
                let qi = q.row(i);
                for j in super::storage::valid_columns(i, window, target_len) {
                    row[j] = dot(qi, k.row(i + j - window));
                }
            });
        }
    }
    Ok(band)
}

/// `P ⊙_w V` on the default (tiled) path.
pub fn band_pv<T: Scalar>(p: &BandMatrix<T>, v: MatRef<'_, T>) -> Result<DenseMatrix<T>> {
    band_pv_with(p, v, KernelPath::Tiled)
}

pub fn band_pv_with<T: Scalar>(p: &BandMatrix<T>, v: MatRef<'_, T>, path: KernelPath) -> Result<DenseMatrix<T>> {
    if v.rows() != p.target_len() {
        return Err(dim_err("band_pv", format!("band addresses {} target rows, V has {}", p.target_len(), v.rows())));
    }
    let h = v.cols();
    let window = p.window();
    let mut out = DenseMatrix::zeros(p.rows(), h);
    match path {
        KernelPath::Naive => {
            let zero_row = vec![T::zero(); h];
            let mut count = 0u64;
            for i in 0..p.rows() {
                for l in 0..h {
                    let mut acc = T::zero();
                    for j in 0..p.width() {
                        let value = match p.target(i, j) {
                            Some(t) => v.row(t),
                            None => &zero_row[..],
                        };
                        acc += p.get(i, j) * value[l];
                        count += 1;
                    }
                    out.set(i, l, acc);
                }
            }
            instrument::add_macs(count);
        }
        KernelPath::Tiled => {
            for_each_row(out.as_mut_slice(), h, true, |i, row| {
                let pi = p.row(i);
                for j in p.valid_range(i) {
                    axpy(pi[j], v.row(i + j - window), row);
                }
            });
        }
    }
    Ok(out)
}

/// Adjoint of [`band_qk`]: returns `(∂L/∂Q, ∂L/∂K)` given `∂L/∂A`.
pub fn band_qk_backward<T: Scalar>(
    grad_a: &BandMatrix<T>,
    q: MatRef<'_, T>,
    k: MatRef<'_, T>,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    if grad_a.rows() != q.rows() || grad_a.target_len() != k.rows() || q.cols() != k.cols() {
        return Err(dim_err(
            "band_qk_backward",
            format!(
                "grad band {}x{} (w={}), Q {}x{}, K {}x{}",
                grad_a.rows(),
                grad_a.target_len(),
                grad_a.window(),
                q.rows(),
                q.cols(),
                k.rows(),
                k.cols()
            ),
        ));
    }
    let w = grad_a.window();
    let h = q.cols();
    let mut grad_q = DenseMatrix::zeros(q.rows(), h);
    for_each_row(grad_q.as_mut_slice(), h, true, |i, row| {
        let g = grad_a.row(i);
        for j in grad_a.valid_range(i) {
            axpy(g[j], k.row(i + j - w), row);
        }
    });
    let mut grad_k = DenseMatrix::zeros(k.rows(), h);
    let sources = q.rows();
    for_each_row(grad_k.as_mut_slice(), h, true, |t, row| {
        // sources i with i + j - w = t, i.e. i ∈ [t - w, t + w]
        let lo = t.saturating_sub(w);
        let hi = (t + w + 1).min(sources);
        for i in lo..hi {
            let j = t + w - i;
            axpy(grad_a.get(i, j), q.row(i), row);
        }
    });
    Ok((grad_q, grad_k))
}

/// Adjoint of [`band_pv`]: returns `(∂L/∂P, ∂L/∂V)` given `∂L/∂O`.
/// Invalid slots of `∂L/∂P` are zero.
pub fn band_pv_backward<T: Scalar>(
    grad_o: MatRef<'_, T>,
    p: &BandMatrix<T>,
    v: MatRef<'_, T>,
) -> Result<(BandMatrix<T>, DenseMatrix<T>)> {
    if grad_o.rows() != p.rows() || v.rows() != p.target_len() || grad_o.cols() != v.cols() {
        return Err(dim_err(
            "band_pv_backward",
            format!(
                "gradO {}x{}, band {}x{} (w={}), V {}x{}",
                grad_o.rows(),
                grad_o.cols(),
                p.rows(),
                p.target_len(),
                p.window(),
                v.rows(),
                v.cols()
            ),
        ));
    }
    let w = p.window();
    let width = p.width();
    let target_len = p.target_len();
    let mut grad_p = BandMatrix::zeros(p.rows(), target_len, w)?;
    for_each_row(grad_p.as_mut_slice(), width, true, |i, row| {
        let go = grad_o.row(i);
        for j in super::storage::valid_columns(i, w, target_len) {
            row[j] = dot(go, v.row(i + j - w));
        }
    });
    let h = v.cols();
    let sources = p.rows();
    let mut grad_v = DenseMatrix::zeros(target_len, h);
    for_each_row(grad_v.as_mut_slice(), h, true, |t, row| {
        let lo = t.saturating_sub(w);
        let hi = (t + w + 1).min(sources);
        for i in lo..hi {
            let j = t + w - i;
            axpy(p.get(i, j), grad_o.row(i), row);
        }
    });
    Ok((grad_p, grad_v))
}
