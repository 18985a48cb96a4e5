//! Manifest CSV: one mixture per row.
//!
//! ```text
//! id,sources,delays,sir_db,t60,seed,duration
//! m00,synth:0;synth:1,2;-3,0,0.0,0,1.0
//! m01,a.wav;b.wav,0;4,5,0.3,1,
//! ```
//!
//! `sources` and `delays` are `;`-separated lists. Source paths are
//! resolved against the manifest's directory; `synth:<seed>` generates a
//! synthetic source of `duration` seconds (default 1).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mbnsep_core::simulate::MixSpec;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
struct Row {
    id: String,
    sources: String,
    delays: String,
    sir_db: f64,
    t60: f64,
    seed: u64,
    #[serde(default)]
    duration: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub id: String,
    pub sources: Vec<String>,
    pub delays: Vec<i32>,
    pub sir_db: f64,
    pub t60: f64,
    pub seed: u64,
    pub duration: f64,
    pub base: PathBuf,
}

impl Entry {
    pub fn spec(&self, sample_rate: u32) -> MixSpec {
        MixSpec {
            sources: self.sources.clone(),
            sir_db: self.sir_db,
            delays: self.delays.clone(),
            t60: self.t60,
            seed: self.seed,
            sample_rate,
        }
    }

    /// Filesystem path of a non-synthetic source locator.
    pub fn resolve(&self, source: &str) -> PathBuf {
        let p = Path::new(source);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

pub fn read(path: &Path) -> Result<Vec<Entry>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("{}: cannot open manifest", path.display()))?;
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), line + 1))?;
        let ctx = || format!("{}: entry {:?}", path.display(), row.id);
        if row.id.is_empty() || row.id.contains(['/', '\\']) || row.id == "." || row.id == ".." {
            bail!("{}: invalid id {:?}", ctx(), row.id);
        }
        let sources: Vec<String> = row.sources.split(';').map(|s| s.trim().to_string()).collect();
        let delays = row
            .delays
            .split(';')
            .map(|d| d.trim().parse::<i32>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}: delays {:?}", ctx(), row.delays))?;
        let duration = row.duration.unwrap_or(1.0);
        if !(duration.is_finite() && duration > 0.0) {
            bail!("{}: duration must be positive", ctx());
        }
        if out.iter().any(|e: &Entry| e.id == row.id) {
            bail!("{}: duplicate id", ctx());
        }
        out.push(Entry {
            id: row.id,
            sources,
            delays,
            sir_db: row.sir_db,
            t60: row.t60,
            seed: row.seed,
            duration,
            base: base.clone(),
        });
    }
    if out.is_empty() {
        bail!("{}: manifest lists no mixtures", path.display());
    }
    Ok(out)
}
