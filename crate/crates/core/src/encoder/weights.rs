use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::memtrack::MemCategory;
use crate::scalar::Scalar;

use super::config::EncoderConfig;

/// Parameters of one transformer layer. Linear maps are stored
/// `in × out` (`y = xW + b`); biases and norm parameters are `1 × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub wq: DenseMatrix<T>,
    pub bq: DenseMatrix<T>,
    pub wk: DenseMatrix<T>,
    pub bk: DenseMatrix<T>,
    pub wv: DenseMatrix<T>,
    pub bv: DenseMatrix<T>,
    pub wo: DenseMatrix<T>,
    pub bo: DenseMatrix<T>,
    pub ln1_gamma: DenseMatrix<T>,
    pub ln1_beta: DenseMatrix<T>,
    pub w1: DenseMatrix<T>,
    pub b1: DenseMatrix<T>,
    pub w2: DenseMatrix<T>,
    pub b2: DenseMatrix<T>,
    pub ln2_gamma: DenseMatrix<T>,
    pub ln2_beta: DenseMatrix<T>,
}

const LAYER_TENSORS: [&str; 16] = [
    "wq",
    "bq",
    "wk",
    "bk",
    "wv",
    "bv",
    "wo",
    "bo",
    "ln1_gamma",
    "ln1_beta",
    "w1",
    "b1",
    "w2",
    "b2",
    "ln2_gamma",
    "ln2_beta",
];

impl<T: Scalar> LayerWeights<T> {
    fn tensors(&self) -> [&DenseMatrix<T>; 16] {
        [
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.ln2_gamma,
            &self.ln2_beta,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut DenseMatrix<T>; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
        ]
    }

    fn zeros(h: usize, ff: usize) -> Self {
        let z = |r, c| DenseMatrix::zeros_in(r, c, MemCategory::Weights);
        Self {
            wq: z(h, h),
            bq: z(1, h),
            wk: z(h, h),
            bk: z(1, h),
            wv: z(h, h),
            bv: z(1, h),
            wo: z(h, h),
            bo: z(1, h),
            ln1_gamma: z(1, h),
            ln1_beta: z(1, h),
            w1: z(h, ff),
            b1: z(1, ff),
            w2: z(ff, h),
            b2: z(1, h),
            ln2_gamma: z(1, h),
            ln2_beta: z(1, h),
        }
    }
}

/// All encoder parameters, including the embeddings and the relevance head.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights<T> {
    /// `vocab_size × h`
    pub token_embedding: DenseMatrix<T>,
    /// `max_positions × h`
    pub position_embedding: DenseMatrix<T>,
    /// `2 × h`: row 0 for `[CLS]` and the query, row 1 for the document.
    pub segment_embedding: DenseMatrix<T>,
    pub layers: Vec<LayerWeights<T>>,
    /// `h × 1`
    pub head_weight: DenseMatrix<T>,
    /// `1 × 1`
    pub head_bias: DenseMatrix<T>,
}

/// Position and segment tables start small next to the `±1` token table so
/// that token identity dominates the first layer's attention.
const POSITION_BOUND: f64 = 0.1;

fn uniform<T: Scalar>(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> DenseMatrix<T> {
    let mut m = DenseMatrix::zeros_in(rows, cols, MemCategory::Weights);
    for x in m.as_mut_slice() {
        *x = T::from_f64_lossy(rng.random_range(-bound..=bound));
    }
    m
}

impl<T: Scalar> EncoderWeights<T> {
    /// Zero tensors shaped for `config` (also the gradient accumulator layout).
    pub fn zeros(config: &EncoderConfig) -> Self {
        let h = config.embed_dim;
        let z = |r, c| DenseMatrix::zeros_in(r, c, MemCategory::Weights);
        Self {
            token_embedding: z(config.vocab_size, h),
            position_embedding: z(config.max_positions, h),
            segment_embedding: z(2, h),
            layers: (0..config.layers).map(|_| LayerWeights::zeros(h, config.ff_dim)).collect(),
            head_weight: z(h, 1),
            head_bias: z(1, 1),
        }
    }

    /// Seeded initialisation: linear maps uniform in `±1/√fan_in`, biases
    /// zero, norm gains one, token embeddings uniform in `±1`, position and
    /// segment embeddings uniform in `±0.1`.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, ff) = (config.embed_dim, config.ff_dim);
        let mut w = Self::zeros(config);
        w.token_embedding = uniform(config.vocab_size, h, 1.0, &mut rng);
        w.position_embedding = uniform(config.max_positions, h, POSITION_BOUND, &mut rng);
        w.segment_embedding = uniform(2, h, POSITION_BOUND, &mut rng);
        let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        for layer in &mut w.layers {
            layer.wq = uniform(h, h, bound(h), &mut rng);
            layer.wk = uniform(h, h, bound(h), &mut rng);
            layer.wv = uniform(h, h, bound(h), &mut rng);
            layer.wo = uniform(h, h, bound(h), &mut rng);
            layer.w1 = uniform(h, ff, bound(h), &mut rng);
            layer.w2 = uniform(ff, h, bound(ff), &mut rng);
            layer.ln1_gamma.fill(T::one());
            layer.ln2_gamma.fill(T::one());
        }
        w.head_weight = uniform(h, 1, bound(h), &mut rng);
        Ok(w)
    }

    /// `(name, tensor)` pairs in a fixed order.
    pub fn named(&self) -> Vec<(String, &DenseMatrix<T>)> {
        let mut out = vec![
            ("token_embedding".to_string(), &self.token_embedding),
            ("position_embedding".to_string(), &self.position_embedding),
            ("segment_embedding".to_string(), &self.segment_embedding),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            out.extend(LAYER_TENSORS.iter().zip(layer.tensors()).map(|(n, t)| (format!("layers.{l}.{n}"), t)));
        }
        out.push(("head_weight".to_string(), &self.head_weight));
        out.push(("head_bias".to_string(), &self.head_bias));
        out
    }

    /// Tensors in the same order as [`EncoderWeights::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix<T>> {
        let mut out = vec![&mut self.token_embedding, &mut self.position_embedding, &mut self.segment_embedding];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.rows() * t.cols()).sum()
    }

    pub fn bytes(&self) -> usize {
        self.named().iter().map(|(_, t)| t.bytes()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> EncoderWeights<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let t = l.tensors();
                LayerWeights {
                    wq: t[0].cast(),
                    bq: t[1].cast(),
                    wk: t[2].cast(),
                    bk: t[3].cast(),
                    wv: t[4].cast(),
                    bv: t[5].cast(),
                    wo: t[6].cast(),
                    bo: t[7].cast(),
                    ln1_gamma: t[8].cast(),
                    ln1_beta: t[9].cast(),
                    w1: t[10].cast(),
                    b1: t[11].cast(),
                    w2: t[12].cast(),
                    b2: t[13].cast(),
                    ln2_gamma: t[14].cast(),
                    ln2_beta: t[15].cast(),
                }
            })
            .collect();
        EncoderWeights {
            token_embedding: self.token_embedding.cast(),
            position_embedding: self.position_embedding.cast(),
            segment_embedding: self.segment_embedding.cast(),
            layers,
            head_weight: self.head_weight.cast(),
            head_bias: self.head_bias.cast(),
        }
    }

    /// Checks tensor shapes against `config`.
    pub fn check(&self, config: &EncoderConfig) -> Result<()> {
        let expected = Self::zeros(config);
        let (a, b) = (self.named(), expected.named());
        if a.len() != b.len() {
            return Err(Error::InvalidConfig(format!("{} tensors, config implies {}", a.len(), b.len())));
        }
        for ((name, t), (_, e)) in a.iter().zip(&b) {
            if t.shape() != e.shape() {
                return Err(Error::InvalidConfig(format!("{name} is {:?}, expected {:?}", t.shape(), e.shape())));
            }
        }
        Ok(())
    }
}

/// Resamples a `old_max × h` positional table to `new_max` rows. Row `p` is
/// the linear blend of the two old rows around `p·(old_max−1)/(new_max−1)`.
pub fn interpolate_positions<T: Scalar>(table: &DenseMatrix<T>, new_max: usize) -> Result<DenseMatrix<T>> {
    let old_max = table.rows();
    if new_max < 2 || old_max < 2 {
        return Err(Error::InvalidConfig(format!("cannot interpolate {old_max} positions to {new_max}")));
    }
    let mut out = DenseMatrix::zeros_in(new_max, table.cols(), MemCategory::Weights);
    let ratio = (old_max - 1) as f64 / (new_max - 1) as f64;
    for p in 0..new_max {
        // exact endpoints, and the identity when the sizes agree
        let x = if p == new_max - 1 { (old_max - 1) as f64 } else { p as f64 * ratio };
        let lo = (x.floor() as usize).min(old_max - 1);
        let hi = (lo + 1).min(old_max - 1);
        let frac = T::from_f64_lossy(x - lo as f64);
        let one = T::one();
        for (j, o) in out.row_mut(p).iter_mut().enumerate() {
            *o = (one - frac) * table.get(lo, j) + frac * table.get(hi, j);
        }
    }
    Ok(out)
}
