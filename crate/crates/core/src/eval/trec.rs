//! TREC run (`qid Q0 docid rank score tag`) and qrels (`qid 0 docid rel`)
//! text formats.

use std::fmt::Write as _;
use std::io::BufRead;

use crate::error::{Error, Result};

use super::ndcg::{Qrels, Run, RunEntry};

fn fields(line: &str, n: usize, lineno: usize, what: &str) -> Result<Vec<String>> {
    let parts: Vec<String> = line.split_whitespace().map(str::to_string).collect();
    if parts.len() != n {
        return Err(Error::Parse { line: lineno, msg: format!("{what} lines have {n} fields, found {}", parts.len()) });
    }
    Ok(parts)
}

pub fn read_run(reader: impl BufRead) -> Result<Run> {
    let mut run = Run::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(&line, 6, i + 1, "run")?;
        let rank = f[3].parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad rank `{}`", f[3]) })?;
        let score = f[4].parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad score `{}`", f[4]) })?;
        run.entry(f[0].clone()).or_default().push(RunEntry {
            query_id: f[0].clone(),
            doc_id: f[2].clone(),
            rank,
            score,
        });
    }
    for entries in run.values_mut() {
        entries.sort_by_key(|e| e.rank);
    }
    Ok(run)
}

pub fn write_run(run: &Run, tag: &str) -> String {
    let mut out = String::new();
    for entries in run.values() {
        for e in entries {
            writeln!(out, "{} Q0 {} {} {} {tag}", e.query_id, e.doc_id, e.rank, e.score).expect("writing to a String");
        }
    }
    out
}

pub fn read_qrels(reader: impl BufRead) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f = fields(&line, 4, i + 1, "qrels")?;
        let grade: i64 =
            f[3].parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad grade `{}`", f[3]) })?;
        // negative grades (e.g. spam labels) count as non-relevant
        qrels.insert(f[0].clone(), f[2].clone(), grade.max(0) as u32);
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &Qrels) -> String {
    let mut qids: Vec<&str> = qrels.query_ids().collect();
    qids.sort_unstable();
    let mut out = String::new();
    for qid in qids {
        let judged = qrels.query(qid).expect("listed query");
        let mut docs: Vec<(&String, &u32)> = judged.iter().collect();
        docs.sort();
        for (doc, grade) in docs {
            writeln!(out, "{qid} 0 {doc} {grade}").expect("writing to a String");
        }
    }
    out
}
