use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, Once};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{PatternKind, Window};
use crate::encoder::{Encoder, TokenSequence};
use crate::error::{Error, Result};
use crate::memtrack::{self, BudgetExceeded, MemCategory, MemTracker};
use crate::scalar::{Precision, Scalar};

use super::flops::flop_count;
use super::{bench_model, gen_random_batch, BenchSpec};

/// One measured cell. `None` fields mark an out-of-memory cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub pattern: PatternKind,
    pub window: Window,
    pub query_len: usize,
    pub doc_len: usize,
    pub batch: usize,
    pub precision: Precision,
    pub threads: usize,
    /// Median wall time per document in seconds.
    pub time_per_doc: Option<f64>,
    /// Sample standard deviation of the per-document time across repetitions.
    pub time_stddev: Option<f64>,
    /// Model weights plus the tracked high-water mark of one forward pass.
    pub peak_bytes: Option<usize>,
    /// High-water mark of attention score buffers alone.
    pub attention_bytes: Option<usize>,
    pub weight_bytes: usize,
    /// Multiply-adds of one forward pass for one document.
    pub flops: u64,
    pub edge_case: bool,
}

impl BenchRecord {
    pub fn is_oom(&self) -> bool {
        self.peak_bytes.is_none()
    }
}

fn silence_budget_panics() {
    static HOOK: Once = Once::new();
    HOOK.call_once(|| {
        let previous = panic::take_hook();
        panic::set_hook(Box::new(move |info| {
            if info.payload().downcast_ref::<BudgetExceeded>().is_none() {
                previous(info);
            }
        }));
    });
}

struct MemoryPeak {
    total: usize,
    attention: usize,
}

/// Runs the batch sequentially under a tracker; `Ok(None)` when the
/// tracker's budget was exceeded.
fn memory_pass<T: Scalar>(
    model: &Encoder<T>,
    batch: &[TokenSequence],
    limit: Option<usize>,
) -> Result<Option<MemoryPeak>> {
    silence_budget_panics();
    let tracker = limit.map_or_else(MemTracker::new, MemTracker::with_limit);
    let run = panic::catch_unwind(AssertUnwindSafe(|| {
        memtrack::scoped(Some(Arc::clone(&tracker)), || batch.iter().try_for_each(|seq| model.forward(seq).map(drop)))
    }));
    match run {
        Ok(result) => {
            result?;
            Ok(Some(MemoryPeak {
                total: tracker.total().peak,
                attention: tracker.category(MemCategory::Attention).peak,
            }))
        }
        Err(payload) if payload.is::<BudgetExceeded>() => Ok(None),
        Err(payload) => panic::resume_unwind(payload),
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn stddev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Measures `model` on `batch`: one tracked sequential pass for memory,
/// then `spec.warmup` discarded and `spec.repetitions` timed passes with
/// the batch spread over the thread pool.
pub fn measure<T: Scalar>(model: &Encoder<T>, batch: &[TokenSequence], spec: &BenchSpec) -> Result<BenchRecord> {
    let first = batch.first().ok_or_else(|| Error::InvalidConfig("empty batch".into()))?;
    if spec.repetitions < 3 {
        return Err(Error::InvalidConfig(format!("{} repetitions, need at least 3", spec.repetitions)));
    }
    let c = &model.config;
    let flops = flop_count(&c.pattern, &first.partition, c.embed_dim, c.heads, c.ff_dim, c.layers)?;
    let weight_bytes = model.weights.bytes();
    let mut record = BenchRecord {
        pattern: spec.pattern,
        window: spec.window_label(),
        query_len: first.query_len(),
        doc_len: first.doc_len(),
        batch: batch.len(),
        precision: T::PRECISION,
        threads: rayon::current_num_threads(),
        time_per_doc: None,
        time_stddev: None,
        peak_bytes: None,
        attention_bytes: None,
        weight_bytes,
        flops: flops.total(),
        edge_case: flops.edge_case,
    };
    let Some(peak) = memory_pass(model, batch, spec.memory_limit)? else {
        log::warn!("{} w={} doc_len={}: memory budget exceeded", record.pattern, record.window, record.doc_len);
        return Ok(record);
    };
    record.peak_bytes = Some(weight_bytes + peak.total);
    record.attention_bytes = Some(peak.attention);

    let pass = || -> Result<f64> {
        let start = Instant::now();
        batch.par_iter().try_for_each(|seq| model.forward(seq).map(drop))?;
        Ok(start.elapsed().as_secs_f64() / batch.len() as f64)
    };
    for _ in 0..spec.warmup {
        pass()?;
    }
    let mut times = (0..spec.repetitions).map(|_| pass()).collect::<Result<Vec<_>>>()?;
    times.sort_by(f64::total_cmp);
    record.time_per_doc = Some(median(&times));
    record.time_stddev = Some(stddev(&times));
    Ok(record)
}

fn sweep<T: Scalar>(spec: &BenchSpec) -> Result<Vec<BenchRecord>> {
    let model = bench_model::<T>(spec)?;
    spec.doc_lens
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let batch = gen_random_batch(spec, n, spec.seed.wrapping_add(i as u64 + 1))?;
            let record = measure(&model, &batch, spec)?;
            log::info!("{} w={} doc_len={} done", record.pattern, record.window, n);
            Ok(record)
        })
        .collect()
}

/// Measures every document length of `spec` at its precision.
pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRecord>> {
    spec.validate()?;
    match spec.precision {
        Precision::F32 => sweep::<f32>(spec),
        Precision::F64 => sweep::<f64>(spec),
    }
}
