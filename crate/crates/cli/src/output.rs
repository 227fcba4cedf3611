use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Run metadata attached to every JSON output. Nothing here depends on the
/// clock or the worker count, so equal configurations give equal bytes.
#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub budget: u64,
    pub system_hash: Option<String>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a Meta,
    result: &'a T,
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output dir {}", dir.display()))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, meta: &Meta, result: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(&Envelope { meta, result })?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// CSV with an optional leading `# key=value,...` metadata line.
pub fn write_csv<R: Serialize>(dir: &Path, name: &str, comment: Option<&str>, rows: &[R]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    if let Some(c) = comment {
        writeln!(file, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(path)
}
