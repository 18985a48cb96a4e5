//! Mask estimation: cluster m-vectors with k-means, turn the cluster labels
//! into binary masks over the T-F plane, and resynthesize one waveform per
//! mask from the channel-1 spectrogram.

mod kmeans;
mod masks;

pub use kmeans::{kmeans, labeling_inertia, nearest, KMeansResult, MAX_ITERATIONS};
pub use masks::{apply_masks_and_resynthesize, masks_from_labels, MaskSet};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dpcl::Embedder;
use crate::features::FeatureTensor;
use crate::mbn::{MbnConfig, MbnModel};
use crate::{Error, Result};

/// Settings of the test-stage chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparateConfig {
    /// Number of sources `O`. Also used as the MBN class count.
    pub sources: usize,
    pub restarts: usize,
    /// When false, k-means runs on the raw embeddings.
    pub use_mbn: bool,
    /// Hold quiet units out of MBN training and k-means.
    pub silence_exclusion: bool,
    /// Units more than this many dB below the loudest channel-1 unit count
    /// as quiet.
    pub silence_db: f64,
    pub kmeans_seed: u64,
}

impl Default for SeparateConfig {
    fn default() -> Self {
        Self {
            sources: 2,
            restarts: 10,
            use_mbn: true,
            silence_exclusion: true,
            silence_db: 40.0,
            kmeans_seed: 0,
        }
    }
}

impl SeparateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=crate::metrics::MAX_SOURCES).contains(&self.sources) {
            return Err(Error::config(
                "separate.sources",
                format!("must be within 2..={}, got {}", crate::metrics::MAX_SOURCES, self.sources),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::config("separate.restarts", "must be at least 1"));
        }
        if !(self.silence_db.is_finite() && self.silence_db > 0.0) {
            return Err(Error::config("separate.silence_db", format!("must be positive, got {}", self.silence_db)));
        }
        Ok(())
    }

    /// Natural-log magnitude distance below the maximum that marks a unit
    /// as quiet.
    pub fn silence_threshold(&self) -> f64 {
        self.silence_db / 20.0 * std::f64::consts::LN_10
    }
}

#[derive(Debug, Clone)]
pub struct Separation {
    pub masks: MaskSet,
    /// One row per T-F unit, in flattened order.
    pub m_vectors: Array2<f64>,
    pub labels: Vec<usize>,
    /// Units that took part in MBN training and k-means.
    pub retained: Vec<bool>,
    pub kmeans: KMeansResult,
    pub model: Option<MbnModel>,
}

/// Units whose channel-1 log-magnitude lies within the silence threshold
/// of the loudest unit; all units when exclusion is off.
pub fn retained_units(features: &FeatureTensor, config: &SeparateConfig) -> Vec<bool> {
    let logmag = features.log_mag_ref();
    if !config.silence_exclusion {
        return vec![true; logmag.len()];
    }
    let max = logmag.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let floor = max - config.silence_threshold();
    logmag.iter().map(|&v| v >= floor).collect()
}

/// Embeds every unit, maps embeddings to m-vectors with an MBN trained on
/// the retained units (or passes them through when MBN is off), clusters
/// the retained m-vectors, and assigns held-out units to the nearest
/// centroid.
pub fn separate(
    features: &FeatureTensor,
    embedder: &dyn Embedder,
    mbn: &MbnConfig,
    config: &SeparateConfig,
) -> Result<Separation> {
    config.validate()?;
    let mbn = MbnConfig {
        n_classes: config.sources,
        ..*mbn
    };
    if config.use_mbn {
        mbn.validate()?;
    }
    let embeddings = embedder.embed(features)?;
    let n = features.units();
    if embeddings.rows() != n {
        return Err(Error::ShapeMismatch(format!(
            "embedder returned {} rows for {n} units",
            embeddings.rows()
        )));
    }
    let retained = retained_units(features, config);
    let kept: Vec<usize> = (0..n).filter(|&i| retained[i]).collect();
    let train = embeddings.data().select(Axis(0), &kept);

    let (m_train, model) = if config.use_mbn {
        let (model, m) = MbnModel::fit_transform(train.view(), &mbn)?;
        (m, Some(model))
    } else {
        (train, None)
    };
    let km = kmeans(m_train.view(), config.sources, config.restarts, config.kmeans_seed)?;

    let mut m_vectors = Array2::zeros((n, m_train.ncols()));
    let mut labels = vec![0; n];
    for (r, &i) in kept.iter().enumerate() {
        m_vectors.row_mut(i).assign(&m_train.row(r));
        labels[i] = km.labels[r];
    }
    let held: Vec<usize> = (0..n).filter(|&i| !retained[i]).collect();
    if !held.is_empty() {
        let raw = embeddings.data().select(Axis(0), &held);
        let m_held = match &model {
            Some(model) => model.transform_batch(raw.view())?,
            None => raw,
        };
        for (r, &i) in held.iter().enumerate() {
            let row = m_held.row(r);
            labels[i] = nearest(row.as_slice().expect("standard layout"), km.centroids.view()).0;
            m_vectors.row_mut(i).assign(&row);
        }
    }
    let masks = masks_from_labels(&labels, features.frames(), features.bins(), config.sources)?;
    Ok(Separation {
        masks,
        m_vectors,
        labels,
        retained,
        kmeans: km,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpcl::{IndicatorMatrix, OracleEmbedder};
    use crate::metrics::clustering_accuracy;
    use ndarray::Array3;

    fn toy(frames: usize, bins: usize) -> (FeatureTensor, IndicatorMatrix) {
        let data = Array3::from_shape_fn((frames, bins, 3), |(t, f, c)| match c {
            2 => 1.0,
            _ => -(((t * 7 + f * 3) % 11) as f64),
        });
        let labels = (0..frames * bins).map(|i| (i / 3) % 2).collect();
        (FeatureTensor::new(data).unwrap(), IndicatorMatrix::new(labels, 2).unwrap())
    }

    #[test]
    fn noiseless_oracle_recovers_the_truth() {
        let (feat, b) = toy(20, 30);
        let emb = OracleEmbedder { indicator: b.clone(), sigma: 0.0, dim: 40, seed: 4 };
        let mbn = MbnConfig { clusterings: 40, ..MbnConfig::default() };
        for use_mbn in [true, false] {
            for silence_exclusion in [true, false] {
                let cfg = SeparateConfig { use_mbn, silence_exclusion, silence_db: 60.0, ..Default::default() };
                let sep = separate(&feat, &emb, &mbn, &cfg).unwrap();
                assert_eq!(clustering_accuracy(&sep.labels, b.labels(), 2).unwrap(), 1.0);
                assert_eq!(sep.model.is_some(), use_mbn);
                assert_eq!(sep.masks.labels(), sep.labels);
            }
        }
    }

    #[test]
    fn silence_threshold_is_forty_db() {
        let cfg = SeparateConfig::default();
        assert!((cfg.silence_threshold() - 100f64.ln()).abs() < 1e-12);
        let (feat, _) = toy(4, 5);
        let kept = retained_units(&feat, &cfg);
        let lm = feat.log_mag_ref();
        for (k, v) in kept.iter().zip(lm.iter()) {
            assert_eq!(*k, *v >= -100f64.ln());
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (feat, b) = toy(4, 5);
        let emb = OracleEmbedder { indicator: b, sigma: 0.0, dim: 4, seed: 0 };
        let cfg = SeparateConfig { sources: 1, ..Default::default() };
        let err = separate(&feat, &emb, &MbnConfig::default(), &cfg).unwrap_err();
        assert!(err.to_string().contains("separate.sources"));
    }
}
