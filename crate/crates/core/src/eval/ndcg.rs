use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// One line of a TREC run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

/// Ranked documents per query, in rank order.
pub type Run = BTreeMap<String, Vec<RunEntry>>;

/// Graded judgments: query id → doc id → grade.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    grades: HashMap<String, HashMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.grades.entry(query_id.into()).or_default().insert(doc_id.into(), grade);
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.grades.get(query_id).and_then(|q| q.get(doc_id)).copied().unwrap_or(0)
    }

    pub fn query(&self, query_id: &str) -> Option<&HashMap<String, u32>> {
        self.grades.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// DCG of `grades` (in rank order) cut at `k`, gain `2^rel − 1`,
/// discount `log₂(rank + 1)`.
pub fn dcg_at_k(grades: &[u32], k: usize) -> f64 {
    grades.iter().take(k).enumerate().map(|(i, &g)| ((1u64 << g.min(63)) - 1) as f64 / ((i + 2) as f64).log2()).sum()
}

/// nDCG@k of one ranking. `judged` holds every grade known for the query
/// and defines the ideal ordering. Zero when nothing is relevant.
pub fn ndcg_from_grades(ranked: &[u32], judged: &[u32], k: usize) -> f64 {
    let mut ideal = judged.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg_at_k(&ideal, k);
    if idcg == 0.0 {
        0.0
    } else {
        dcg_at_k(ranked, k) / idcg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdcgReport {
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

/// nDCG@k for every query of `run`. Queries without judgments score 0 and
/// are logged.
pub fn ndcg_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<NdcgReport> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut per_query = BTreeMap::new();
    for (qid, entries) in run {
        let score = match qrels.query(qid) {
            None => {
                log::warn!("query {qid} has no relevance judgments; scoring 0");
                0.0
            }
            Some(judged) => {
                let mut ranked: Vec<&RunEntry> = entries.iter().collect();
                ranked.sort_by_key(|e| e.rank);
                let grades: Vec<u32> = ranked.iter().map(|e| qrels.grade(qid, &e.doc_id)).collect();
                let all: Vec<u32> = judged.values().copied().collect();
                ndcg_from_grades(&grades, &all, k)
            }
        };
        per_query.insert(qid.clone(), score);
    }
    let mean = if per_query.is_empty() { 0.0 } else { per_query.values().sum::<f64>() / per_query.len() as f64 };
    Ok(NdcgReport { per_query, mean })
}
