use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// MBN hyperparameters. Defaults: `V = 400`, `a = 0.9`, `k1 = 20`, `δ = 0`
/// (a single hidden layer) for two sources.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MbnConfig {
    /// `V`, clusterings per layer.
    pub clusterings: usize,
    /// `a`, fraction of input dimensions each clustering sees.
    pub feature_fraction: f64,
    /// Centroids per clustering in the bottom layer.
    pub k1: usize,
    /// Decay of `k` between consecutive layers.
    pub delta: f64,
    /// Expected number of clusters `O`.
    pub n_classes: usize,
    /// Dimension of the PCA output (m-vectors).
    pub output_dim: usize,
    pub seed: u64,
}

impl Default for MbnConfig {
    fn default() -> Self {
        Self {
            clusterings: 400,
            feature_fraction: 0.9,
            k1: 20,
            delta: 0.0,
            n_classes: 2,
            output_dim: 2,
            seed: 0,
        }
    }
}

impl MbnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusterings < 1 {
            return Err(Error::config("mbn.clusterings", "V must be >= 1"));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::config(
                "mbn.feature_fraction",
                format!("a must lie in (0, 1], got {}", self.feature_fraction),
            ));
        }
        if self.k1 < 2 {
            return Err(Error::config("mbn.k1", format!("k1 must be >= 2, got {}", self.k1)));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::config("mbn.delta", format!("delta must lie in [0, 1), got {}", self.delta)));
        }
        if self.n_classes < 2 {
            return Err(Error::config("mbn.n_classes", format!("must be >= 2, got {}", self.n_classes)));
        }
        if self.output_dim < 1 {
            return Err(Error::config("mbn.output_dim", "must be >= 1"));
        }
        plan_k_schedule(self.k1, self.delta, self.n_classes).map(|_| ())
    }

    pub fn k_schedule(&self) -> Result<Vec<usize>> {
        plan_k_schedule(self.k1, self.delta, self.n_classes)
    }
}

/// Smallest admissible top-layer `k`: `⌈1.5·O⌉`.
pub fn min_top_k(n_classes: usize) -> usize {
    (3 * n_classes).div_ceil(2)
}

/// Per-layer centroid counts: `k_1 = k1`, `k_{l+1} = ⌊δ·k_l⌋`, continuing
/// only while the next value exceeds `⌈1.5·O⌉`.
pub fn plan_k_schedule(k1: usize, delta: f64, n_classes: usize) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::config("mbn.delta", format!("delta must lie in [0, 1), got {delta}")));
    }
    let floor_k = min_top_k(n_classes);
    if k1 < floor_k {
        return Err(Error::config(
            "mbn.k1",
            format!("k1 = {k1} is below ceil(1.5 * {n_classes}) = {floor_k}"),
        ));
    }
    let mut schedule = vec![k1];
    loop {
        let k = *schedule.last().expect("nonempty");
        // the epsilon absorbs decimal representation error, e.g. 0.3 * 20
        let next = (delta * k as f64 + 1e-9).floor() as usize;
        if next <= floor_k {
            break;
        }
        schedule.push(next);
    }
    Ok(schedule)
}
