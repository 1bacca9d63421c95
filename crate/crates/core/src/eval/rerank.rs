use crate::encoder::{assemble_input, Encoder};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ndcg::RunEntry;

/// Scores every candidate against `query`, sorts by descending score (ties
/// keep candidate order) and returns the first `top_k` as a run.
///
/// A candidate whose scoring fails is logged and ranked last with score −∞.
pub fn rerank<T: Scalar>(
    model: &Encoder<T>,
    query_id: &str,
    query: &[u32],
    candidates: &[(String, Vec<u32>)],
    top_k: usize,
) -> Result<Vec<RunEntry>> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig(format!("query {query_id} has no candidates")));
    }
    let max = model.config.max_positions;
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, (doc_id, doc))| {
            let score = assemble_input(query, doc, max).and_then(|seq| model.score(&seq));
            match score {
                Ok(s) => (i, s.to_f64_lossy()),
                Err(e) => {
                    log::warn!("scoring {query_id}/{doc_id} failed: {e}");
                    (i, f64::NEG_INFINITY)
                }
            }
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(scored
        .into_iter()
        .take(top_k)
        .enumerate()
        .map(|(rank, (i, score))| RunEntry {
            query_id: query_id.to_string(),
            doc_id: candidates[i].0.clone(),
            rank: rank + 1,
            score,
        })
        .collect())
}
