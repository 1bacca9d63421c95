//! Ranking metrics, equivalence testing and re-ranking.

mod ndcg;
mod rerank;
mod tost;
mod trec;

pub use ndcg::{dcg_at_k, ndcg_at_k, ndcg_from_grades, NdcgReport, Qrels, Run, RunEntry};
pub use rerank::rerank;
pub use tost::{incomplete_beta, ln_gamma, paired_tost, student_t_cdf, TostResult};
pub use trec::{read_qrels, read_run, write_qrels, write_run};
