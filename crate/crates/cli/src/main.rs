//! `mbnsep`: batch front end for mixture generation, feature extraction,
//! embedding, separation and evaluation.
//!
//! Every per-mixture command works on a mixture directory, either one given
//! with `--input` or every `<out-dir>/<id>` listed in a `--manifest`.

mod commands;
mod manifest;
mod store;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mbnsep_core::config::PipelineConfig;

#[derive(Parser)]
#[command(name = "mbnsep", version, about = "Deep-clustering source separation with MBN-denoised embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides every stage seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
pub struct Targets {
    /// A single mixture directory.
    #[arg(long, conflicts_with = "manifest")]
    input: Option<PathBuf>,
    /// Manifest CSV listing the mixtures.
    #[arg(long, requires = "out_dir")]
    manifest: Option<PathBuf>,
    /// Directory holding one subdirectory per manifest entry.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the mixtures of a manifest into `<out-dir>/<id>/`.
    Mix {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write `features.mbnt` (frames x bins x 3) from `mixture.wav`.
    Features {
        #[command(flatten)]
        targets: Targets,
        #[command(flatten)]
        common: Common,
    },
    /// Write `embeddings.mbnt` (units x D).
    Embed {
        #[command(flatten)]
        targets: Targets,
        /// Use the oracle embedder built from the reference images.
        #[arg(long)]
        oracle: bool,
        /// Oracle noise level; overrides `embedder.sigma`.
        #[arg(long)]
        sigma: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate masks and write `est_<o>.wav`, `labels.mbnt`, `mvectors.mbnt`.
    Separate {
        #[command(flatten)]
        targets: Targets,
        /// Cluster the raw embeddings instead of m-vectors.
        #[arg(long)]
        no_mbn: bool,
        /// Keep quiet units in MBN training and k-means.
        #[arg(long)]
        no_vad: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score the estimates; writes `report.csv` and `report.txt`.
    Eval {
        #[command(flatten)]
        targets: Targets,
        #[command(flatten)]
        common: Common,
    },
    /// Generic MBN training and transform on tensor files.
    Mbn {
        #[command(subcommand)]
        action: MbnAction,
    },
    /// Write 2-D coordinates of embeddings or m-vectors as CSV.
    Viz {
        #[command(flatten)]
        targets: Targets,
        /// Which vectors to plot.
        #[arg(long, value_enum, default_value = "mvectors")]
        what: commands::VizSource,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum MbnAction {
    /// Train on an `n x d` tensor and save the model.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Also write the m-vectors of the training rows.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Map an `n x d` tensor to m-vectors with a saved model.
    Transform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

impl Common {
    pub fn load(&self) -> Result<PipelineConfig> {
        let cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::from_toml_str("")?,
        };
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s)?,
            None => cfg,
        })
    }
}

impl Targets {
    pub fn dirs(&self) -> Result<Vec<(String, PathBuf)>> {
        match (&self.input, &self.manifest, &self.out_dir) {
            (Some(dir), None, _) => {
                let id = dir
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "mixture".into());
                Ok(vec![(id, dir.clone())])
            }
            (None, Some(m), Some(out)) => Ok(manifest::read(m)?
                .into_iter()
                .map(|e| {
                    let dir = out.join(&e.id);
                    (e.id, dir)
                })
                .collect()),
            _ => bail!("pass either --input <dir> or --manifest <csv> --out-dir <dir>"),
        }
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MBNSEP_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("MBNSEP_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Mix { manifest, out_dir, common } => commands::mix(&manifest, &out_dir, &common.load()?),
        Command::Features { targets, common } => commands::features(&targets.dirs()?, &common.load()?),
        Command::Embed { targets, oracle, sigma, common } => {
            if !oracle {
                bail!("no trained embedder is bundled; pass --oracle to embed with the reference-based oracle");
            }
            let mut cfg = common.load()?;
            if let Some(s) = sigma {
                cfg.embedder.sigma = s;
                cfg.validate()?;
            }
            commands::embed(&targets.dirs()?, &cfg)
        }
        Command::Separate { targets, no_mbn, no_vad, common } => {
            let mut cfg = common.load()?;
            cfg.separate.use_mbn &= !no_mbn;
            cfg.separate.silence_exclusion &= !no_vad;
            commands::separate(&targets.dirs()?, &cfg)
        }
        Command::Eval { targets, common } => {
            let dirs = targets.dirs()?;
            commands::eval(&dirs, &common.load()?, targets.out_dir.as_deref().filter(|_| targets.manifest.is_some()))
        }
        Command::Mbn { action } => match action {
            MbnAction::Fit { input, model, output, common } => {
                commands::mbn_fit(&input, &model, output.as_deref(), &common.load()?)
            }
            MbnAction::Transform { model, input, output } => commands::mbn_transform(&model, &input, &output),
        },
        Command::Viz { targets, what, common } => commands::viz(&targets.dirs()?, what, &common.load()?),
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
