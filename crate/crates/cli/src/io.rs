use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context, Result};
use sparse_ce::encoder::Vocab;
use sparse_ce::eval::{read_qrels, read_run, Qrels, Run};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

/// `id<TAB>text` lines; blank lines are skipped.
pub fn read_tsv(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, text)) = line.split_once('\t') else {
            bail!("{}:{}: expected `id<TAB>text`", path.display(), n + 1);
        };
        if out.insert(id.to_string(), text.to_string()).is_some() {
            bail!("{}:{}: duplicate id `{id}`", path.display(), n + 1);
        }
    }
    Ok(out)
}

/// One word per line.
pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let words: Vec<String> = open(path)?
        .lines()
        .map(|l| l.map(|w| w.trim().to_string()))
        .filter(|w| !matches!(w, Ok(w) if w.is_empty()))
        .collect::<Result<_, _>>()?;
    Ok(Vocab::new(words))
}

pub fn load_run(path: &Path) -> Result<Run> {
    read_run(open(path)?).with_context(|| format!("reading run {}", path.display()))
}

pub fn load_qrels(path: &Path) -> Result<Qrels> {
    read_qrels(open(path)?).with_context(|| format!("reading qrels {}", path.display()))
}
