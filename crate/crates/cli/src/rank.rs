use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use sparse_ce::encoder::{load_model, Encoder, Vocab, FIRST_WORD};
use sparse_ce::eval::{ndcg_at_k, paired_tost, rerank as rerank_query, write_run, Run};
use sparse_ce::{Precision, Scalar};

use crate::io::{load_qrels, load_run, read_tsv, read_vocab};
use crate::Output;

#[derive(Debug, Args)]
pub struct RerankArgs {
    /// Model manifest written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// `qid<TAB>query text` per line.
    #[arg(long)]
    queries: PathBuf,
    /// `docid<TAB>document text` per line.
    #[arg(long)]
    docs: PathBuf,
    /// TREC run listing the candidates of each query.
    #[arg(long)]
    candidates: PathBuf,
    /// One word per line; defaults to the synthetic words `t0, t1, …`.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    top_k: usize,
    #[arg(long, default_value = "sparse-ce")]
    tag: String,
    #[arg(long, default_value = "f64")]
    precision: Precision,
    /// Report nDCG@10 of the re-ranked run against these judgments on stderr.
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

fn rerank_all<T: Scalar>(args: &RerankArgs, vocab: Option<Vocab>) -> Result<Run> {
    let model: Encoder<T> =
        load_model(&args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let vocab = vocab.unwrap_or_else(|| Vocab::synthetic(model.config.vocab_size.saturating_sub(FIRST_WORD as usize)));
    if vocab.size() > model.config.vocab_size {
        bail!("vocabulary has {} ids, the model only {}", vocab.size(), model.config.vocab_size);
    }
    let queries = read_tsv(&args.queries)?;
    let docs = read_tsv(&args.docs)?;
    let candidates = load_run(&args.candidates)?;
    let mut run = Run::new();
    for (qid, entries) in &candidates {
        let Some(text) = queries.get(qid) else {
            bail!("query `{qid}` of the candidate run is missing from {}", args.queries.display());
        };
        let pairs = entries
            .iter()
            .map(|e| match docs.get(&e.doc_id) {
                Some(d) => Ok((e.doc_id.clone(), vocab.tokenize(d))),
                None => bail!("document `{}` is missing from {}", e.doc_id, args.docs.display()),
            })
            .collect::<Result<Vec<_>>>()?;
        run.insert(qid.clone(), rerank_query(&model, qid, &vocab.tokenize(text), &pairs, args.top_k)?);
    }
    Ok(run)
}

pub fn rerank(args: RerankArgs) -> Result<()> {
    let vocab = args.vocab.as_deref().map(read_vocab).transpose()?;
    let run = match args.precision {
        Precision::F32 => rerank_all::<f32>(&args, vocab)?,
        Precision::F64 => rerank_all::<f64>(&args, vocab)?,
    };
    if let Some(path) = &args.qrels {
        let report = ndcg_at_k(&run, &load_qrels(path)?, 10)?;
        eprintln!("nDCG@10 {:.4} over {} queries", report.mean, report.per_query.len());
    }
    args.output.write(&write_run(&run, &args.tag))
}

#[derive(Debug, Args)]
pub struct TostArgs {
    /// First run (TREC format).
    #[arg(long)]
    run_a: PathBuf,
    /// Second run, paired with the first by query id.
    #[arg(long)]
    run_b: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Equivalence margin on the mean nDCG difference.
    #[arg(long, default_value_t = 0.02)]
    bound: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

pub fn tost(args: TostArgs) -> Result<()> {
    let qrels = load_qrels(&args.qrels)?;
    let a = ndcg_at_k(&load_run(&args.run_a)?, &qrels, args.k)?;
    let b = ndcg_at_k(&load_run(&args.run_b)?, &qrels, args.k)?;
    let shared: Vec<&String> = a.per_query.keys().filter(|q| b.per_query.contains_key(*q)).collect();
    let dropped = a.per_query.len() + b.per_query.len() - 2 * shared.len();
    if dropped > 0 {
        log::warn!("{dropped} queries appear in only one run and are ignored");
    }
    let xs: Vec<f64> = shared.iter().map(|q| a.per_query[*q]).collect();
    let ys: Vec<f64> = shared.iter().map(|q| b.per_query[*q]).collect();
    let r = paired_tost(&xs, &ys, args.bound, args.alpha)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("queries      {}", xs.len());
    println!("nDCG@{:<7} a {:.4}  b {:.4}", args.k, mean(&xs), mean(&ys));
    println!("mean diff    {:+.4} (bound ±{})", r.mean_diff, args.bound);
    println!("lower test   t = {:.4}  p = {:.3e}", r.t_lower, r.p_lower);
    println!("upper test   t = {:.4}  p = {:.3e}", r.t_upper, r.p_upper);
    println!("df           {}", r.df);
    println!("equivalent   {} at alpha {}", if r.equivalent { "yes" } else { "no" }, args.alpha);
    Ok(())
}
