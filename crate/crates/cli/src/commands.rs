use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mbnsep_core::config::PipelineConfig;
use mbnsep_core::dpcl::{
    indicator_matrix, load_embeddings, matrix_to_tensor, oracle_embedder, save_embeddings, tensor_to_matrix,
    IndicatorMatrix, PrecomputedEmbedder,
};
use mbnsep_core::features::{assemble_features, unit_coords};
use mbnsep_core::mbn::{pca_fit, MbnModel};
use mbnsep_core::metrics::{permutation_invariant_eval, EvalReport};
use mbnsep_core::separate::{apply_masks_and_resynthesize, separate as run_separation};
use mbnsep_core::signal::{read_wav, stft, write_wav, Spectrogram};
use mbnsep_core::simulate::{mix as render, synth_source, SourceWave};
use mbnsep_core::tensor::Tensor;
use ndarray::Array2;
use rayon::prelude::*;

use crate::manifest;
use crate::store::{self, write_atomic};

/// Runs `f` on every mixture directory in parallel, naming the mixture in
/// any error. Results keep the input order.
fn each<T: Send>(dirs: &[(String, PathBuf)], f: impl Fn(&str, &Path) -> Result<T> + Sync) -> Result<Vec<T>> {
    dirs.par_iter()
        .map(|(id, dir)| f(id, dir).with_context(|| format!("mixture {id} ({})", dir.display())))
        .collect()
}

fn read_channels(path: &Path, cfg: &PipelineConfig, want: usize) -> Result<Vec<Vec<f64>>> {
    let wav = read_wav(path, cfg.stft.sample_rate)?;
    if wav.channels.len() < want {
        bail!("{}: needs {want} channel(s), found {}", path.display(), wav.channels.len());
    }
    Ok(wav.channels)
}

fn mixture_spectrograms(dir: &Path, cfg: &PipelineConfig) -> Result<(Spectrogram, Spectrogram)> {
    let path = dir.join(store::MIXTURE);
    let ch = read_channels(&path, cfg, 2)?;
    let s1 = stft(&ch[0], &cfg.stft).map_err(|e| e.at(&path))?;
    let s2 = stft(&ch[1], &cfg.stft).map_err(|e| e.at(&path))?;
    Ok((s1, s2))
}

/// Channel-1 reference images, one per source.
fn references(dir: &Path, cfg: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    let paths = store::numbered(dir, store::reference);
    if paths.is_empty() {
        bail!("{}: no reference images (ref_0.wav, ...)", dir.display());
    }
    paths
        .iter()
        .map(|p| Ok(read_channels(p, cfg, 1)?.swap_remove(0)))
        .collect()
}

/// Ideal binary mask labels from the reference images.
fn truth(dir: &Path, cfg: &PipelineConfig) -> Result<IndicatorMatrix> {
    let refs = references(dir, cfg)?;
    let mags = refs
        .iter()
        .map(|r| Ok(stft(r, &cfg.stft)?.data.mapv(|c| c.norm())))
        .collect::<Result<Vec<Array2<f64>>>>()?;
    let views: Vec<_> = mags.iter().map(|m| m.view()).collect();
    Ok(indicator_matrix(&views)?)
}

pub fn mix(manifest_path: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<()> {
    let entries = manifest::read(manifest_path)?;
    let fs = cfg.stft.sample_rate;
    std::fs::create_dir_all(out_dir).with_context(|| format!("{}: cannot create", out_dir.display()))?;
    let done: Vec<usize> = entries
        .par_iter()
        .map(|e| -> Result<usize> {
            let spec = e.spec(fs);
            let len = (e.duration * fs as f64).round() as usize;
            let sources = e
                .sources
                .iter()
                .map(|s| match s.strip_prefix("synth:") {
                    Some(seed) => {
                        let seed: u64 = seed.parse().with_context(|| format!("bad synthetic source {s:?}"))?;
                        Ok(SourceWave { samples: synth_source(seed, len, fs), sample_rate: fs })
                    }
                    None => {
                        let path = e.resolve(s);
                        let wav = read_wav(&path, fs)?;
                        Ok(SourceWave { samples: wav.channels[0].clone(), sample_rate: wav.sample_rate })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let m = render(&spec, &sources)?;
            let dir = out_dir.join(&e.id);
            std::fs::create_dir_all(&dir).with_context(|| format!("{}: cannot create", dir.display()))?;
            write_wav(dir.join(store::MIXTURE), &m.channels, fs, cfg.output.format)?;
            for (s, img) in m.references.iter().enumerate() {
                write_wav(store::reference(&dir, s), img, fs, cfg.output.format)?;
            }
            let meta = toml::to_string(&m.spec).context("serializing the mix spec")?;
            write_atomic(&dir.join(store::MIX_SPEC), meta.as_bytes())?;
            Ok(m.len())
        })
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("manifest entry {:?}", entries[i].id)))
        .collect::<Result<_>>()?;
    println!("mixed {} mixtures ({} samples total) into {}", done.len(), done.iter().sum::<usize>(), out_dir.display());
    Ok(())
}

pub fn features(dirs: &[(String, PathBuf)], cfg: &PipelineConfig) -> Result<()> {
    each(dirs, |_, dir| {
        let (s1, s2) = mixture_spectrograms(dir, cfg)?;
        let f = assemble_features(&s1, &s2, cfg.features.floor)?;
        store::save_features(&f, &dir.join(store::FEATURES))
    })?;
    println!("wrote features for {} mixture(s)", dirs.len());
    Ok(())
}

pub fn embed(dirs: &[(String, PathBuf)], cfg: &PipelineConfig) -> Result<()> {
    each(dirs, |_, dir| {
        let feats = store::load_features(&dir.join(store::FEATURES))?;
        let b = truth(dir, cfg)?;
        if b.rows() != feats.units() {
            bail!(
                "reference images give {} T-F units, {} has {}",
                b.rows(),
                store::FEATURES,
                feats.units()
            );
        }
        let x = oracle_embedder(&b, cfg.embedder.sigma, cfg.embedder.dim, cfg.embedder.seed)?;
        save_embeddings(&x, dir.join(store::EMBEDDINGS))?;
        Ok(())
    })?;
    println!("wrote oracle embeddings (sigma = {}) for {} mixture(s)", cfg.embedder.sigma, dirs.len());
    Ok(())
}

pub fn separate(dirs: &[(String, PathBuf)], cfg: &PipelineConfig) -> Result<()> {
    each(dirs, |_, dir| {
        let feats = store::load_features(&dir.join(store::FEATURES))?;
        let x = load_embeddings(dir.join(store::EMBEDDINGS))?;
        let sep = run_separation(&feats, &PrecomputedEmbedder(x), &cfg.mbn, &cfg.separate)?;
        let (s1, _) = mixture_spectrograms(dir, cfg)?;
        let ests = apply_masks_and_resynthesize(&sep.masks, &s1)?;
        for stale in store::numbered(dir, store::estimate).into_iter().skip(ests.len()) {
            std::fs::remove_file(&stale).with_context(|| format!("{}: cannot remove", stale.display()))?;
        }
        for (o, e) in ests.into_iter().enumerate() {
            write_wav(store::estimate(dir, o), &[e], cfg.stft.sample_rate, cfg.output.format)?;
        }
        store::save_labels(&sep.labels, feats.frames(), feats.bins(), &dir.join(store::LABELS))?;
        matrix_to_tensor(sep.m_vectors.view()).save(dir.join(store::MVECTORS))?;
        Ok(())
    })?;
    println!(
        "separated {} mixture(s) ({})",
        dirs.len(),
        if cfg.separate.use_mbn { "MBN m-vectors" } else { "raw embeddings" }
    );
    Ok(())
}

fn eval_one(dir: &Path, cfg: &PipelineConfig) -> Result<EvalReport> {
    let refs = references(dir, cfg)?;
    let ests = store::numbered(dir, store::estimate)
        .iter()
        .map(|p| Ok(read_channels(p, cfg, 1)?.swap_remove(0)))
        .collect::<Result<Vec<_>>>()?;
    if ests.is_empty() {
        bail!("{}: no estimates (est_0.wav, ...); run `separate` first", dir.display());
    }
    let mixture = read_channels(&dir.join(store::MIXTURE), cfg, 1)?.swap_remove(0);
    let mut report = permutation_invariant_eval(&ests, &refs, &mixture)?;
    let labels_path = dir.join(store::LABELS);
    if labels_path.is_file() {
        let (labels, _, _) = store::load_labels(&labels_path)?;
        let b = truth(dir, cfg)?;
        if labels.len() != b.rows() {
            bail!("{}: {} labels for {} T-F units", labels_path.display(), labels.len(), b.rows());
        }
        report = report.with_clustering(&labels, b.labels(), refs.len())?;
    }
    Ok(report)
}

pub fn eval(dirs: &[(String, PathBuf)], cfg: &PipelineConfig, summary_dir: Option<&Path>) -> Result<()> {
    let reports = each(dirs, |id, dir| {
        let r = eval_one(dir, cfg)?;
        write_atomic(&dir.join(store::REPORT_CSV), r.to_csv(id).as_bytes())?;
        write_atomic(&dir.join(store::REPORT_TXT), r.to_text(id).as_bytes())?;
        Ok(r)
    })?;
    let mut csv = format!("{}\n", EvalReport::CSV_HEADER);
    let mut text = String::new();
    for ((id, _), r) in dirs.iter().zip(&reports) {
        csv.push_str(&r.csv_rows(id));
        text.push_str(&r.to_text(id));
    }
    let imps: Vec<f64> = reports.iter().map(|r| r.si_sdr_improvement).collect();
    let mut sorted = imps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    let _ = writeln!(
        text,
        "{} mixture(s): mean SI-SDR improvement {:.2} dB, median {:.2} dB",
        imps.len(),
        imps.iter().sum::<f64>() / imps.len() as f64,
        median
    );
    if let Some(out) = summary_dir {
        write_atomic(&out.join(store::REPORT_CSV), csv.as_bytes())?;
        write_atomic(&out.join(store::REPORT_TXT), text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    let t = Tensor::load(path)?;
    tensor_to_matrix(&t).map_err(|e| e.at(path).into())
}

pub fn mbn_fit(input: &Path, model_path: &Path, output: Option<&Path>, cfg: &PipelineConfig) -> Result<()> {
    let data = load_matrix(input)?;
    let (model, m) = MbnModel::fit_transform(data.view(), &cfg.mbn).with_context(|| format!("training on {}", input.display()))?;
    let ks = model.k_values();
    println!(
        "trained MBN on {} x {}: {} hidden layer(s), k schedule {:?}, V = {}, output dim {}",
        data.nrows(),
        data.ncols(),
        ks.len(),
        ks,
        cfg.mbn.clusterings,
        model.output_dim()
    );
    if model.pca().rank_deficient() {
        println!("note: top-layer codes have rank below the output dimension; trailing components are zero");
    }
    model.save(model_path)?;
    if let Some(out) = output {
        matrix_to_tensor(m.view()).save(out)?;
    }
    Ok(())
}

pub fn mbn_transform(model_path: &Path, input: &Path, output: &Path) -> Result<()> {
    let model = MbnModel::load(model_path)?;
    let data = load_matrix(input)?;
    let m = model.transform_batch(data.view()).with_context(|| format!("transforming {}", input.display()))?;
    matrix_to_tensor(m.view()).save(output)?;
    println!("wrote {} m-vectors of dimension {} to {}", m.nrows(), m.ncols(), output.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum VizSource {
    Embeddings,
    Mvectors,
}

pub fn viz(dirs: &[(String, PathBuf)], what: VizSource, _cfg: &PipelineConfig) -> Result<()> {
    each(dirs, |_, dir| {
        let (coords, name) = match what {
            VizSource::Mvectors => (load_matrix(&dir.join(store::MVECTORS))?, "viz_mvectors.csv"),
            VizSource::Embeddings => {
                let x = load_embeddings(dir.join(store::EMBEDDINGS))?;
                let pca = pca_fit(x.data(), 2.min(x.dim()))?;
                let rows = x
                    .data()
                    .rows()
                    .into_iter()
                    .map(|r| pca.project_dense(&r.to_vec()))
                    .collect::<mbnsep_core::Result<Vec<_>>>()?;
                let m = Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j]);
                (m, "viz_embeddings.csv")
            }
        };
        let feats = store::load_features(&dir.join(store::FEATURES))?;
        if coords.nrows() != feats.units() {
            bail!("{} rows for {} T-F units", coords.nrows(), feats.units());
        }
        let labels_path = dir.join(store::LABELS);
        let labels = if labels_path.is_file() { Some(store::load_labels(&labels_path)?.0) } else { None };
        let mut out = String::from("unit,frame,bin,x,y,label\n");
        for i in 0..coords.nrows() {
            let (t, f) = unit_coords(i, feats.bins());
            let y = if coords.ncols() > 1 { coords[[i, 1]] } else { 0.0 };
            let label = labels.as_ref().map_or(String::new(), |l| l[i].to_string());
            let _ = writeln!(out, "{i},{t},{f},{:.6},{y:.6},{label}", coords[[i, 0]]);
        }
        write_atomic(&dir.join(name), out.as_bytes())
    })?;
    println!("wrote 2-D coordinates for {} mixture(s)", dirs.len());
    Ok(())
}
