use anyhow::{bail, Context, Result};
use clap::Args;
use sparse_ce::attention::{PatternKind, Window};
use sparse_ce::bench::{emit_report, run_bench, Baseline, BenchSpec, ReportFormat, DEFAULT_DOC_LENS};
use sparse_ce::Precision;

use crate::Output;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Attention patterns to measure (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "sparse")]
    pattern: Vec<PatternKind>,
    /// Document windows (comma-separated integers or `inf`); ignored by `full`.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    window: Vec<Window>,
    #[arg(long, default_value_t = 10)]
    query_len: usize,
    /// Document lengths (comma-separated).
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DOC_LENS)]
    doc_lens: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Timed repetitions per cell (at least 3).
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Discarded warm-up passes per cell.
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value = "f32")]
    precision: Precision,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `csv` or `md`.
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    /// Row that relative columns refer to, e.g. `longformer/64`; measured
    /// even when not among the requested patterns.
    #[arg(long)]
    baseline: Option<Baseline>,
    /// Tracked-byte budget per cell; cells above it are reported as OOM.
    #[arg(long)]
    memory_limit: Option<usize>,
    #[command(flatten)]
    output: Output,
}

/// `(pattern, window)` cells to measure, deduplicated, in request order.
fn cells(args: &BenchArgs) -> Vec<(PatternKind, Window)> {
    let mut out = Vec::new();
    for &p in &args.pattern {
        for &w in &args.window {
            let w = if p == PatternKind::Full { Window::Full } else { w };
            if !out.contains(&(p, w)) {
                out.push((p, w));
            }
        }
    }
    if let Some(b) = args.baseline {
        if !out.contains(&(b.pattern, b.window)) {
            out.insert(0, (b.pattern, b.window));
        }
    }
    out
}

pub fn run(args: BenchArgs) -> Result<()> {
    if args.pattern.is_empty() || args.window.is_empty() {
        bail!("at least one pattern and one window are required");
    }
    let base = BenchSpec {
        query_len: args.query_len,
        doc_lens: args.doc_lens.clone(),
        batch_size: args.batch,
        repetitions: args.reps,
        warmup: args.warmup,
        precision: args.precision,
        seed: args.seed,
        memory_limit: args.memory_limit,
        ..BenchSpec::default()
    };
    let specs: Vec<BenchSpec> =
        cells(&args).into_iter().map(|(pattern, window)| BenchSpec { pattern, window, ..base.clone() }).collect();
    for spec in &specs {
        spec.validate().with_context(|| format!("invalid benchmark {}/{}", spec.pattern, spec.window))?;
    }
    let mut records = Vec::new();
    for spec in &specs {
        records.extend(run_bench(spec).with_context(|| format!("benchmark {}/{}", spec.pattern, spec.window))?);
    }
    args.output.write(&emit_report(&records, args.format, args.baseline)?)
}
