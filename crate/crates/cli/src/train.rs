use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparse_ce::attention::{AttentionPattern, PatternKind, Window};
use sparse_ce::encoder::{save_model, EncoderConfig, FIRST_WORD};
use sparse_ce::eval::{write_qrels, write_run, Qrels, Run, RunEntry};
use sparse_ce::training::{train_toy, write_trace_csv, LossKind, SyntheticDataset, TaskSpec, TrainConfig};

/// Shape of the synthetic task; shared by `train` and `synth` so that the
/// same seed yields the same validation queries.
#[derive(Debug, Clone, Args)]
pub struct TaskArgs {
    #[arg(long, default_value_t = TaskSpec::default().vocab_words)]
    vocab_words: usize,
    #[arg(long, default_value_t = TaskSpec::default().query_terms)]
    query_terms: usize,
    #[arg(long, default_value_t = TaskSpec::default().doc_len)]
    doc_len: usize,
    #[arg(long, default_value_t = TaskSpec::default().train_triples)]
    train_triples: usize,
    #[arg(long, default_value_t = TaskSpec::default().validation_queries)]
    validation_queries: usize,
    /// Data seed.
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
}

impl TaskArgs {
    fn spec(&self) -> TaskSpec {
        TaskSpec {
            vocab_words: self.vocab_words,
            query_terms: self.query_terms,
            doc_len: self.doc_len,
            train_triples: self.train_triples,
            validation_queries: self.validation_queries,
            ..TaskSpec::default()
        }
    }

    fn dataset(&self) -> Result<SyntheticDataset> {
        Ok(SyntheticDataset::generate(&self.spec(), self.data_seed)?)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "sparse")]
    pattern: PatternKind,
    /// Document window (integer or `inf`); ignored by `full`.
    #[arg(long, default_value = "4")]
    window: Window,
    #[arg(long, default_value_t = TrainConfig::default().steps)]
    steps: usize,
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    lr: f64,
    /// Triples per step.
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch: usize,
    /// `ranknet` or `margin-mse`.
    #[arg(long, default_value_t = TrainConfig::default().loss)]
    loss: LossKind,
    /// Validation interval in steps.
    #[arg(long, default_value_t = TrainConfig::default().eval_every)]
    eval_every: usize,
    /// Initialisation and shuffling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 32)]
    ff: usize,
    #[command(flatten)]
    task: TaskArgs,
    /// CSV trace (`step,loss,ndcg10`).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Where to save the trained model (TOML manifest plus a `.bin` blob).
    #[arg(long)]
    model: Option<PathBuf>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let data = args.task.dataset()?;
    let spec = &data.spec;
    let pattern = match args.pattern {
        PatternKind::Full => AttentionPattern::full(),
        kind => AttentionPattern::preset(kind, args.window),
    };
    let config =
        EncoderConfig::new(args.layers, args.dim, args.heads, args.ff, spec.max_seq_len(), spec.vocab_size(), pattern);
    let train = TrainConfig {
        steps: args.steps,
        lr: args.lr,
        batch_size: args.batch,
        loss: args.loss,
        eval_every: args.eval_every,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let outcome = train_toy(config, &data, &train)?;
    for p in &outcome.trace {
        if let Some(n) = p.ndcg10 {
            log::info!("step {:>5}  loss {:.4}  nDCG@10 {n:.4}", p.step, p.loss);
        }
    }
    if let Some(path) = &args.trace {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_trace_csv(&outcome.trace, BufWriter::new(file))?;
    }
    if let Some(path) = &args.model {
        save_model(&outcome.model, path).with_context(|| format!("saving model to {}", path.display()))?;
    }
    let last = outcome.trace.last().map_or(f64::NAN, |p| p.loss);
    println!(
        "final loss {last:.4}, validation nDCG@10 {:.4} over {} queries",
        outcome.mean_ndcg(),
        outcome.validation.len()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    task: TaskArgs,
    /// Seed of the candidate-order shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Writes `vocab.txt`, `queries.tsv`, `docs.tsv`, `candidates.run` (in
/// shuffled order) and `qrels.txt` for the validation queries.
pub fn synth(args: SynthArgs) -> Result<()> {
    let data = args.task.dataset()?;
    let vocab = data.spec.vocab();
    let text = |ids: &[u32]| ids.iter().map(|&i| vocab.word(i)).collect::<Vec<_>>().join(" ");
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (mut queries, mut docs) = (String::new(), String::new());
    let mut qrels = Qrels::new();
    let mut run = Run::new();
    for (qi, v) in data.validation.iter().enumerate() {
        let qid = format!("q{qi}");
        writeln!(queries, "{qid}\t{}", text(&v.query))?;
        let mut order: Vec<usize> = (0..v.docs.len()).collect();
        order.shuffle(&mut rng);
        let mut entries = Vec::with_capacity(order.len());
        for (rank, &d) in order.iter().enumerate() {
            let doc_id = format!("{qid}d{d}");
            writeln!(docs, "{doc_id}\t{}", text(&v.docs[d]))?;
            qrels.insert(qid.clone(), doc_id.clone(), v.grades[d]);
            entries.push(RunEntry { query_id: qid.clone(), doc_id, rank: rank + 1, score: -(rank as f64) });
        }
        run.insert(qid, entries);
    }
    let words: String =
        (0..data.spec.vocab_words).map(|i| format!("{}\n", vocab.word(i as u32 + FIRST_WORD))).collect();
    let write = |name: &str, body: &str| {
        let path = args.out.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
    };
    write("vocab.txt", &words)?;
    write("queries.tsv", &queries)?;
    write("docs.tsv", &docs)?;
    write("candidates.run", &write_run(&run, "shuffled"))?;
    write("qrels.txt", &write_qrels(&qrels))?;
    println!(
        "{} queries, {} candidates each, written to {}",
        data.validation.len(),
        data.validation.first().map_or(0, |v| v.docs.len()),
        args.out.display()
    );
    Ok(())
}
