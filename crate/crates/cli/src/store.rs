//! File layout of a mixture directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mbnsep_core::features::FeatureTensor;
use mbnsep_core::tensor::Tensor;
use ndarray::Array3;

pub const MIXTURE: &str = "mixture.wav";
pub const MIX_SPEC: &str = "mix.toml";
pub const FEATURES: &str = "features.mbnt";
pub const EMBEDDINGS: &str = "embeddings.mbnt";
pub const LABELS: &str = "labels.mbnt";
pub const MVECTORS: &str = "mvectors.mbnt";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

pub fn reference(dir: &Path, s: usize) -> PathBuf {
    dir.join(format!("ref_{s}.wav"))
}

pub fn estimate(dir: &Path, s: usize) -> PathBuf {
    dir.join(format!("est_{s}.wav"))
}

/// `stem_0.wav`, `stem_1.wav`, ... up to the first missing index.
pub fn numbered(dir: &Path, path: fn(&Path, usize) -> PathBuf) -> Vec<PathBuf> {
    (0..).map(|s| path(dir, s)).take_while(|p| p.is_file()).collect()
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, body: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("{}: cannot create", path.display()))?;
    tmp.write_all(body).with_context(|| format!("{}: write failed", path.display()))?;
    tmp.persist(path).with_context(|| format!("{}: cannot replace", path.display()))?;
    Ok(())
}

pub fn save_features(f: &FeatureTensor, path: &Path) -> Result<()> {
    let (t, b, c) = f.data.dim();
    let data = f.data.iter().map(|&v| v as f32).collect();
    Tensor::new(vec![t, b, c], data)?.save(path)?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<FeatureTensor> {
    let t = Tensor::load(path)?;
    if t.rank() != 3 {
        bail!("{}: expected a rank-3 feature tensor, found rank {}", path.display(), t.rank());
    }
    let data = Array3::from_shape_vec((t.dims[0], t.dims[1], t.dims[2]), t.data.iter().map(|&v| v as f64).collect())
        .with_context(|| format!("{}: bad feature tensor shape", path.display()))?;
    FeatureTensor::new(data).with_context(|| format!("{}: invalid features", path.display()))
}

pub fn save_labels(labels: &[usize], frames: usize, bins: usize, path: &Path) -> Result<()> {
    Tensor::new(vec![frames, bins], labels.iter().map(|&l| l as f32).collect())?.save(path)?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<(Vec<usize>, usize, usize)> {
    let t = Tensor::load(path)?;
    let (frames, bins) = t.matrix_dims().with_context(|| format!("{}: labels", path.display()))?;
    let labels = t
        .data
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                bail!("{}: label {v} is not a non-negative integer", path.display())
            }
        })
        .collect::<Result<_>>()?;
    Ok((labels, frames, bins))
}
