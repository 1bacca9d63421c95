//! Efficiency measurement on random inputs: per-document latency, tracked
//! peak memory, a closed-form multiply-add model and report rendering.

mod flops;
mod measure;
mod report;

pub use flops::{flop_count, segment_macs, window_exceeds_segment, FlopCount};
pub use measure::{measure, run_bench, BenchRecord};
pub use report::{emit_report, Baseline, ReportFormat, CSV_HEADER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionPattern, PatternKind, Window};
use crate::encoder::{assemble_input, Encoder, EncoderConfig, TokenSequence, FIRST_WORD};
use crate::error::{Error, Result};
use crate::scalar::{Precision, Scalar};

/// Document lengths of the default sweep: `2^k − 10` for `k = 6..=12`
/// plus 164, so that with a 10-token query `s` is a power of two plus 3.
pub const DEFAULT_DOC_LENS: [usize; 8] = [54, 118, 164, 246, 502, 1014, 2038, 4086];

/// Largest batch a spec may request.
pub const MAX_BATCH: usize = 100;

/// Shape of the randomly initialised model being timed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchModel {
    pub layers: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Positions of the initial table; longer inputs are interpolated.
    pub max_positions: usize,
    pub vocab_size: usize,
}

impl Default for BenchModel {
    fn default() -> Self {
        Self { layers: 2, embed_dim: 64, heads: 2, ff_dim: 256, max_positions: 512, vocab_size: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub pattern: PatternKind,
    /// Document window; ignored by the full pattern.
    pub window: Window,
    pub query_len: usize,
    pub doc_lens: Vec<usize>,
    pub batch_size: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub precision: Precision,
    pub seed: u64,
    pub model: BenchModel,
    /// Tracked-byte budget per measurement; exceeding it records OOM.
    pub memory_limit: Option<usize>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            pattern: PatternKind::Sparse,
            window: Window::Local(4),
            query_len: 10,
            doc_lens: DEFAULT_DOC_LENS.to_vec(),
            batch_size: 8,
            repetitions: 5,
            warmup: 2,
            precision: Precision::F32,
            seed: 0,
            model: BenchModel::default(),
            memory_limit: None,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.query_len == 0 {
            return bad("query length must be at least 1".into());
        }
        if self.doc_lens.is_empty() || self.doc_lens.contains(&0) {
            return bad("document lengths must be non-empty and at least 1".into());
        }
        if !(1..=MAX_BATCH).contains(&self.batch_size) {
            return bad(format!("batch size {} outside 1..={MAX_BATCH}", self.batch_size));
        }
        if self.repetitions < 3 {
            return bad(format!("{} repetitions, need at least 3", self.repetitions));
        }
        self.encoder_config(self.query_len + 3)?.validate()
    }

    pub fn attention_pattern(&self) -> AttentionPattern {
        match self.pattern {
            PatternKind::Full => AttentionPattern::full(),
            kind => AttentionPattern::preset(kind, self.window),
        }
    }

    /// Window label used in reports (`inf` for the full pattern).
    pub fn window_label(&self) -> Window {
        match self.pattern {
            PatternKind::Full => Window::Full,
            _ => self.window,
        }
    }

    /// Encoder configuration able to hold sequences of `seq_len` tokens.
    pub fn encoder_config(&self, seq_len: usize) -> Result<EncoderConfig> {
        let m = &self.model;
        let mut config = EncoderConfig::new(
            m.layers,
            m.embed_dim,
            m.heads,
            m.ff_dim,
            m.max_positions.max(seq_len),
            m.vocab_size,
            self.attention_pattern(),
        );
        config.precision = self.precision;
        config.validate()?;
        Ok(config)
    }

    /// Longest sequence of the sweep: `query_len + max(doc_len) + 3`.
    pub fn max_seq_len(&self) -> usize {
        self.query_len + self.doc_lens.iter().copied().max().unwrap_or(0) + 3
    }
}

/// `batch_size` sequences `[CLS] q [SEP] d [SEP]` with uniform random word
/// ids, a `query_len`-token query and a `doc_len`-token document.
pub fn gen_random_batch(spec: &BenchSpec, doc_len: usize, seed: u64) -> Result<Vec<TokenSequence>> {
    let vocab = spec.model.vocab_size as u32;
    if vocab <= FIRST_WORD {
        return Err(Error::InvalidConfig(format!("vocabulary of {vocab} holds no words")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut word = || rng.random_range(FIRST_WORD..vocab);
    (0..spec.batch_size)
        .map(|_| {
            let query: Vec<u32> = (0..spec.query_len).map(|_| word()).collect();
            let doc: Vec<u32> = (0..doc_len).map(|_| word()).collect();
            assemble_input(&query, &doc, spec.query_len + doc_len + 3)
        })
        .collect()
}

/// Seeded model for `spec`, with positions interpolated up to the longest
/// sequence of the sweep when it exceeds the initial table.
pub fn bench_model<T: Scalar>(spec: &BenchSpec) -> Result<Encoder<T>> {
    let mut config = spec.encoder_config(0)?;
    config.max_positions = spec.model.max_positions;
    let mut model = Encoder::new(config, spec.seed)?;
    let s = spec.max_seq_len();
    if s > spec.model.max_positions {
        model.interpolate_positions(s)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_length_is_query_plus_doc_plus_three() {
        let spec = BenchSpec { batch_size: 3, ..BenchSpec::default() };
        for (n, s) in [(164, 177), (4086, 4099)] {
            let batch = gen_random_batch(&spec, n, 1).unwrap();
            assert_eq!(batch.len(), 3);
            assert!(batch.iter().all(|b| b.len() == s && b.query_len() == 10 && b.doc_len() == n));
        }
    }

    #[test]
    fn qds_marks_every_thirtieth_document_token() {
        let spec = BenchSpec { pattern: PatternKind::Qds, query_len: 10, batch_size: 1, ..BenchSpec::default() };
        let batch = gen_random_batch(&spec, 120, 1).unwrap();
        let globals = spec.attention_pattern().global_positions(&batch[0].partition).unwrap();
        assert_eq!(globals, vec![29, 59, 89, 119]);
    }

    #[test]
    fn batches_are_seeded() {
        let spec = BenchSpec { batch_size: 2, ..BenchSpec::default() };
        assert_eq!(gen_random_batch(&spec, 30, 5).unwrap(), gen_random_batch(&spec, 30, 5).unwrap());
        assert_ne!(gen_random_batch(&spec, 30, 5).unwrap(), gen_random_batch(&spec, 30, 6).unwrap());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let ok = BenchSpec::default();
        assert!(ok.validate().is_ok());
        for bad in [
            BenchSpec { repetitions: 2, ..ok.clone() },
            BenchSpec { batch_size: 101, ..ok.clone() },
            BenchSpec { batch_size: 0, ..ok.clone() },
            BenchSpec { doc_lens: vec![10, 0], ..ok.clone() },
            BenchSpec { doc_lens: vec![], ..ok.clone() },
            BenchSpec { query_len: 0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))), "{bad:?}");
        }
    }

    #[test]
    fn model_covers_longest_sequence() {
        let spec = BenchSpec {
            doc_lens: vec![54, 600],
            model: BenchModel { max_positions: 64, ..BenchModel::default() },
            ..BenchSpec::default()
        };
        let model = bench_model::<f32>(&spec).unwrap();
        assert_eq!(model.weights.position_embedding.rows(), 613);
    }
}
