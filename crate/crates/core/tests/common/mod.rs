//! Independent dense references shared by the integration tests.
//!
//! Everything here works on plain `Vec<f64>` loops and builds attention
//! masks by enumerating token pairs, without touching the band kernels or
//! the attention planner.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_ce::attention::{PatternKind, Window};
use sparse_ce::DenseMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Largest entrywise error, relative to the larger magnitude of each pair
/// with an absolute floor of 1.
pub fn max_rel_diff(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Token-pair mask for `[CLS] q₁…q_m [SEP] d₁…d_n [SEP]`, enumerated pair by
/// pair. `stride` sets the QDS global-token spacing.
pub fn pattern_mask(kind: PatternKind, window: Window, m: usize, n: usize, stride: usize) -> Vec<Vec<bool>> {
    let s = m + n + 3;
    let doc_start = m + 2;
    let is_query = |p: usize| (1..doc_start).contains(&p);
    let is_doc = |p: usize| p >= doc_start;
    let is_global = |p: usize| {
        kind == PatternKind::Qds && is_doc(p) && {
            let rel = p - doc_start;
            rel < n && (rel + 1) % stride == 0
        }
    };
    let near = |a: usize, b: usize| match window {
        Window::Full => true,
        Window::Local(w) => a.abs_diff(b) <= w,
    };
    let mut mask = vec![vec![false; s]; s];
    for (i, row) in mask.iter_mut().enumerate() {
        for (t, cell) in row.iter_mut().enumerate() {
            *cell = match kind {
                PatternKind::Full => true,
                PatternKind::Longformer | PatternKind::Qds => {
                    if is_global(i) || is_global(t) || !is_doc(i) || !is_doc(t) {
                        true
                    } else {
                        near(i, t)
                    }
                }
                PatternKind::Sparse => {
                    if i == 0 {
                        true
                    } else if is_query(i) {
                        is_query(t)
                    } else if is_doc(t) {
                        near(i, t)
                    } else {
                        true
                    }
                }
            };
        }
    }
    mask
}

/// `softmax(QKᵀ/scale + M) V` with `M ∈ {0, −∞}`.
pub fn masked_attention(
    q: &DenseMatrix<f64>,
    k: &DenseMatrix<f64>,
    v: &DenseMatrix<f64>,
    mask: &[Vec<bool>],
    scale: f64,
) -> DenseMatrix<f64> {
    let (s, t) = (q.rows(), k.rows());
    let mut out = DenseMatrix::zeros(s, v.cols());
    for (i, allowed) in mask.iter().enumerate().take(s) {
        let logits: Vec<f64> = (0..t)
            .map(|j| {
                if allowed[j] {
                    (0..q.cols()).map(|l| q.get(i, l) * k.get(j, l)).sum::<f64>() / scale
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = e.iter().sum();
        for l in 0..v.cols() {
            out.set(i, l, (0..t).map(|j| e[j] / z * v.get(j, l)).sum());
        }
    }
    out
}

fn affine(x: &DenseMatrix<f64>, w: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(x.rows(), w.cols(), |i, j| {
        b.get(0, j) + (0..x.cols()).map(|l| x.get(i, l) * w.get(l, j)).sum::<f64>()
    })
}

fn norm(x: &DenseMatrix<f64>, g: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    let n = x.cols() as f64;
    DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
        let mean = x.row(i).iter().sum::<f64>() / n;
        let var = x.row(i).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (x.get(i, j) - mean) / (var + 1e-12).sqrt() * g.get(0, j) + b.get(0, j)
    })
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn columns(x: &DenseMatrix<f64>, from: usize, to: usize) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(x.rows(), to - from, |i, j| x.get(i, from + j))
}

/// Dense encoder with an explicit `{0, −∞}` attention mask, written from
/// scratch: embeddings, then per layer masked multi-head attention,
/// residual + norm, GELU feed-forward, residual + norm.
pub fn dense_encoder(
    seq: &sparse_ce::encoder::TokenSequence,
    weights: &sparse_ce::encoder::EncoderWeights<f64>,
    heads: usize,
    mask: &[Vec<bool>],
) -> DenseMatrix<f64> {
    let h = weights.token_embedding.cols();
    let dh = h / heads;
    let ids = &seq.ids;
    let doc = seq.partition.range(sparse_ce::attention::Group::Document);
    let mut x = DenseMatrix::from_fn(ids.len(), h, |p, j| {
        let segment = usize::from(doc.contains(&p));
        weights.token_embedding.get(ids[p] as usize, j)
            + weights.position_embedding.get(p, j)
            + weights.segment_embedding.get(segment, j)
    });
    for w in &weights.layers {
        let q = affine(&x, &w.wq, &w.bq);
        let k = affine(&x, &w.wk, &w.bk);
        let v = affine(&x, &w.wv, &w.bv);
        let mut concat = DenseMatrix::zeros(x.rows(), h);
        for head in 0..heads {
            let (a, b) = (head * dh, (head + 1) * dh);
            let o =
                masked_attention(&columns(&q, a, b), &columns(&k, a, b), &columns(&v, a, b), mask, (dh as f64).sqrt());
            for i in 0..x.rows() {
                for j in 0..dh {
                    concat.set(i, a + j, o.get(i, j));
                }
            }
        }
        let mut r1 = affine(&concat, &w.wo, &w.bo);
        r1.add_assign(&x);
        let y1 = norm(&r1, &w.ln1_gamma, &w.ln1_beta);
        let mut f = affine(&y1, &w.w1, &w.b1);
        f.as_mut_slice().iter_mut().for_each(|z| *z = gelu(*z));
        let mut r2 = affine(&f, &w.w2, &w.b2);
        r2.add_assign(&y1);
        x = norm(&r2, &w.ln2_gamma, &w.ln2_beta);
    }
    x
}
