use std::collections::HashMap;

use crate::attention::SubsequencePartition;
use crate::error::{Error, Result};

pub const CLS: u32 = 0;
pub const SEP: u32 = 1;
pub const UNK: u32 = 2;
/// First id available to ordinary words.
pub const FIRST_WORD: u32 = 3;

/// `[CLS] q₁…q_m [SEP] d₁…d_n [SEP]` with its group partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub partition: SubsequencePartition,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn query_len(&self) -> usize {
        self.partition.len(crate::attention::Group::Query) - 1
    }

    pub fn doc_len(&self) -> usize {
        self.partition.len(crate::attention::Group::Document) - 1
    }
}

/// Builds the cross-encoder input for one query-document pair. Documents
/// are cut from the tail until the sequence fits `max_positions`; queries
/// are never truncated.
pub fn assemble_input(query: &[u32], doc: &[u32], max_positions: usize) -> Result<TokenSequence> {
    if query.is_empty() {
        return Err(Error::InvalidConfig("query must contain at least one token".into()));
    }
    let fixed = query.len() + 3;
    if fixed > max_positions {
        return Err(Error::InvalidConfig(format!(
            "query of {} tokens does not fit in {max_positions} positions",
            query.len()
        )));
    }
    let doc = &doc[..doc.len().min(max_positions - fixed)];
    let mut ids = Vec::with_capacity(fixed + doc.len());
    ids.push(CLS);
    ids.extend_from_slice(query);
    ids.push(SEP);
    ids.extend_from_slice(doc);
    ids.push(SEP);
    Ok(TokenSequence { ids, partition: SubsequencePartition::for_lengths(query.len(), doc.len()) })
}

/// Whitespace tokenizer over a fixed word list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,

    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new(words: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), FIRST_WORD + i as u32)).collect();
        Self { words, index }
    }

    /// Words `t0 … t{n-1}`, as used by the synthetic datasets.
    pub fn synthetic(words: usize) -> Self {
        Self::new((0..words).map(|i| format!("t{i}")))
    }

    /// Total id space including the special tokens.
    pub fn size(&self) -> usize {
        self.words.len() + FIRST_WORD as usize
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: u32) -> &str {
        match id {
            CLS => "[CLS]",
            SEP => "[SEP]",
            UNK => "[UNK]",
            _ => self.words.get((id - FIRST_WORD) as usize).map_or("[UNK]", String::as_str),
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }
}
