//! Synthetic term-overlap ranking task.
//!
//! A query is a set of distinct vocabulary terms. Training triples pair a
//! positive document that contains every query term with a negative that
//! contains none; both are padded with distractor terms. Validation
//! candidates contain exactly `o` query terms and are graded `o`.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::AttentionPattern;
use crate::encoder::{EncoderConfig, Vocab, FIRST_WORD};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub vocab_words: usize,
    pub query_terms: usize,
    pub doc_len: usize,
    pub train_triples: usize,
    pub validation_queries: usize,
    /// Validation candidates per overlap grade `0..=query_terms`.
    pub candidates_per_grade: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            vocab_words: 16,
            query_terms: 2,
            doc_len: 6,
            train_triples: 32_000,
            validation_queries: 60,
            candidates_per_grade: 5,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.query_terms == 0 || self.doc_len < self.query_terms {
            return Err(Error::InvalidConfig(format!(
                "documents of {} tokens cannot hold {} query terms",
                self.doc_len, self.query_terms
            )));
        }
        if self.vocab_words < 2 * self.query_terms {
            return Err(Error::InvalidConfig(format!("{} words are too few for distractors", self.vocab_words)));
        }
        Ok(())
    }

    /// Size of the id space a model needs (special tokens included).
    pub fn vocab_size(&self) -> usize {
        self.vocab_words + FIRST_WORD as usize
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::synthetic(self.vocab_words)
    }

    /// Longest input `[CLS] q [SEP] d [SEP]` of the task.
    pub fn max_seq_len(&self) -> usize {
        self.query_terms + self.doc_len + 3
    }

    /// Default toy model for this task: 2 layers of width 16 with 2 heads
    /// and a feed-forward width of 32.
    pub fn encoder_config(&self, pattern: AttentionPattern) -> EncoderConfig {
        EncoderConfig::new(2, 16, 4, 32, self.max_seq_len(), self.vocab_size(), pattern)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub query: Vec<u32>,
    pub positive: Vec<u32>,
    pub negative: Vec<u32>,
    /// Teacher scores `(t⁺, t⁻)`; here the overlap counts.
    pub teacher: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationQuery {
    pub query: Vec<u32>,
    pub docs: Vec<Vec<u32>>,
    pub grades: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: TaskSpec,
    pub train: Vec<Triple>,
    pub validation: Vec<ValidationQuery>,
}

struct Sampler<'a> {
    spec: &'a TaskSpec,
    rng: ChaCha8Rng,
}

impl Sampler<'_> {
    fn query(&mut self) -> Vec<u32> {
        let words: Vec<u32> = (0..self.spec.vocab_words as u32).map(|w| w + FIRST_WORD).collect();
        words.choose_multiple(&mut self.rng, self.spec.query_terms).copied().collect()
    }

    /// Document holding the first `overlap` query terms once each, the rest
    /// drawn from non-query words.
    fn doc(&mut self, query: &[u32], overlap: usize) -> Vec<u32> {
        let mut doc: Vec<u32> = query[..overlap].to_vec();
        while doc.len() < self.spec.doc_len {
            let w = self.rng.random_range(0..self.spec.vocab_words as u32) + FIRST_WORD;
            if !query.contains(&w) {
                doc.push(w);
            }
        }
        doc.shuffle(&mut self.rng);
        doc
    }
}

impl SyntheticDataset {
    pub fn generate(spec: &TaskSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut s = Sampler { spec, rng: ChaCha8Rng::seed_from_u64(seed) };
        let k = spec.query_terms;
        let train = (0..spec.train_triples)
            .map(|_| {
                let query = s.query();
                let positive = s.doc(&query, k);
                let negative = s.doc(&query, 0);
                Triple { query, positive, negative, teacher: Some((k as f64, 0.0)) }
            })
            .collect();
        let validation = (0..spec.validation_queries)
            .map(|_| {
                let query = s.query();
                let mut docs = Vec::new();
                let mut grades = Vec::new();
                for overlap in 0..=k {
                    for _ in 0..spec.candidates_per_grade {
                        let mut q = query.clone();
                        q.shuffle(&mut s.rng);
                        docs.push(s.doc(&q, overlap));
                        grades.push(overlap as u32);
                    }
                }
                ValidationQuery { query, docs, grades }
            })
            .collect();
        Ok(Self { spec: spec.clone(), train, validation })
    }
}

/// Number of distinct query terms occurring in `doc`.
pub fn term_overlap(query: &[u32], doc: &[u32]) -> usize {
    query.iter().filter(|t| doc.contains(t)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grades_equal_overlap() {
        let spec = TaskSpec { train_triples: 20, validation_queries: 5, ..TaskSpec::default() };
        let data = SyntheticDataset::generate(&spec, 1).unwrap();
        for t in &data.train {
            assert_eq!(term_overlap(&t.query, &t.positive), spec.query_terms);
            assert_eq!(term_overlap(&t.query, &t.negative), 0);
            assert_eq!(t.positive.len(), spec.doc_len);
        }
        for v in &data.validation {
            assert_eq!(v.docs.len(), (spec.query_terms + 1) * spec.candidates_per_grade);
            for (d, &g) in v.docs.iter().zip(&v.grades) {
                assert_eq!(term_overlap(&v.query, d), g as usize);
            }
        }
        assert_eq!(data, SyntheticDataset::generate(&spec, 1).unwrap());
    }
}
