use std::fmt::Write as _;
use std::str::FromStr;

use crate::attention::{PatternKind, Window};
use crate::error::{Error, Result};

use super::measure::BenchRecord;

/// Leading CSV columns, in this order; `attention_bytes` and `threads`
/// follow them.
pub const CSV_HEADER: &str = "pattern,w,query_len,doc_len,batch,time_per_doc_s,peak_bytes,flops";

const OOM: &str = "OOM";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Unknown { what: "report format", value: s.to_string() }),
        }
    }
}

/// Row against which relative differences are reported, e.g. `longformer/64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Baseline {
    pub pattern: PatternKind,
    pub window: Window,
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (p, w) = s.split_once('/').unwrap_or((s, "inf"));
        let pattern: PatternKind = p.parse()?;
        let window = if pattern == PatternKind::Full { Window::Full } else { w.parse()? };
        Ok(Self { pattern, window })
    }
}

impl Baseline {
    fn matches(&self, r: &BenchRecord) -> bool {
        r.pattern == self.pattern && r.window == self.window
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| OOM.to_string(), |x| x.to_string())
}

fn csv(records: &[BenchRecord]) -> String {
    let mut out = format!("{CSV_HEADER},attention_bytes,threads\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.pattern,
            r.window,
            r.query_len,
            r.doc_len,
            r.batch,
            opt(r.time_per_doc.map(|t| format!("{t:.6e}"))),
            opt(r.peak_bytes),
            r.flops,
            opt(r.attention_bytes),
            r.threads
        );
    }
    out
}

/// `(x − base) / base` as a signed whole percentage.
fn relative(x: Option<f64>, base: Option<f64>) -> String {
    match (x, base) {
        (Some(x), Some(b)) if b > 0.0 => format!(" ({:+.0}%)", 100.0 * (x - b) / b),
        _ => String::new(),
    }
}

fn markdown(records: &[BenchRecord], baseline: Option<Baseline>) -> String {
    let header = ["pattern", "w", "doc_len", "batch", "time/doc (ms)", "peak (MiB)", "attention (MiB)", "MMACs"];
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let base = baseline.and_then(|b| records.iter().find(|x| b.matches(x) && x.doc_len == r.doc_len));
        let ms = r.time_per_doc.map(|t| t * 1e3);
        let mib = |b: Option<usize>| b.map(|b| b as f64 / (1024.0 * 1024.0));
        let cell = |v: Option<f64>, b: Option<f64>, prec: usize| match v {
            Some(v) => format!("{v:.prec$}{}", relative(Some(v), b)),
            None => OOM.to_string(),
        };
        let mmacs = r.flops as f64 / 1e6;
        rows.push([
            r.pattern.to_string(),
            r.window.to_string(),
            r.doc_len.to_string(),
            r.batch.to_string(),
            cell(ms, base.and_then(|b| b.time_per_doc.map(|t| t * 1e3)), 3),
            cell(mib(r.peak_bytes), base.and_then(|b| mib(b.peak_bytes)), 2),
            cell(mib(r.attention_bytes), base.and_then(|b| mib(b.attention_bytes)), 2),
            format!("{mmacs:.1}{}", relative(Some(mmacs), base.map(|b| b.flops as f64 / 1e6))),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[&str]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(&header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&line(&rule.iter().map(String::as_str).collect::<Vec<_>>()));
    for r in &rows {
        out.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    if let Some(r) = records.first() {
        let _ = write!(out, "\nthreads: {}, precision: {}", r.threads, r.precision);
        if let Some(b) = baseline {
            let _ = write!(out, ", baseline: {}/{}", b.pattern, b.window);
        }
        out.push('\n');
    }
    out
}

/// Renders `records` as CSV or as an aligned markdown table with
/// differences relative to the `baseline` row of the same document length.
pub fn emit_report(records: &[BenchRecord], format: ReportFormat, baseline: Option<Baseline>) -> Result<String> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no records to report".into()));
    }
    Ok(match format {
        ReportFormat::Csv => csv(records),
        ReportFormat::Markdown => markdown(records, baseline),
    })
}
