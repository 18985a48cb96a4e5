//! Fixtures shared by the acceptance experiments: the seeded two-source
//! mixture set and small statistics helpers.

use mbnsep_core::dpcl::{indicator_matrix, IndicatorMatrix};
use mbnsep_core::signal::{stft, Spectrogram, StftConfig};
use mbnsep_core::simulate::{mix, synth_source, MixSpec, Mixture, SourceWave};
use mbnsep_core::Result;
use ndarray::Array2;

/// One evaluation mixture with everything the experiments need.
pub struct Case {
    pub mixture: Mixture,
    pub spec1: Spectrogram,
    pub spec2: Spectrogram,
    /// Channel-1 source images.
    pub refs: Vec<Vec<f64>>,
    /// Ideal binary mask labels of the channel-1 images.
    pub indicator: IndicatorMatrix,
}

/// Mixture `seed` of the standard set: 1 s at 8 kHz, two synthetic
/// sources at 0 dB SIR with opposite interchannel delays, anechoic for
/// even seeds and T60 = 0.3 s for odd ones.
pub fn case(seed: u64) -> Result<Case> {
    let fs = 8000;
    let len = 8000;
    let spec = MixSpec {
        sources: vec![format!("synth:{}", 2 * seed), format!("synth:{}", 2 * seed + 1)],
        sir_db: 0.0,
        delays: vec![1 + (seed % 3) as i32, -1 - ((seed / 3) % 3) as i32],
        t60: if seed % 2 == 0 { 0.0 } else { 0.3 },
        seed,
        sample_rate: fs,
    };
    let sources: Vec<SourceWave> = [2 * seed, 2 * seed + 1]
        .iter()
        .map(|&s| SourceWave { samples: synth_source(s, len, fs), sample_rate: fs })
        .collect();
    let mixture = mix(&spec, &sources)?;
    let cfg = StftConfig::default();
    let spec1 = stft(&mixture.channels[0], &cfg)?;
    let spec2 = stft(&mixture.channels[1], &cfg)?;
    let refs: Vec<Vec<f64>> = mixture.references.iter().map(|r| r[0].clone()).collect();
    let mags = refs
        .iter()
        .map(|r| Ok(stft(r, &cfg)?.data.mapv(|c| c.norm())))
        .collect::<Result<Vec<Array2<f64>>>>()?;
    let views: Vec<_> = mags.iter().map(|m| m.view()).collect();
    let indicator = indicator_matrix(&views)?;
    Ok(Case { mixture, spec1, spec2, refs, indicator })
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        (s[m - 1] + s[m]) / 2.0
    } else {
        s[m]
    }
}

/// Standard normal CDF, via the Abramowitz-Stegun 7.1.26 erf
/// approximation (absolute error below 1.5e-7).
pub fn normal_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * z);
    let poly = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-z * z).exp();
    if x >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}

/// Accuracy of the best possible classifier for two equiprobable speakers
/// whose oracle embeddings are orthonormal directions plus isotropic noise
/// of scale `sigma`. Row normalization does not move the bisecting
/// hyperplane, so this is the ceiling for any clustering of those vectors.
pub fn oracle_bayes_accuracy(sigma: f64) -> f64 {
    normal_cdf(1.0 / (std::f64::consts::SQRT_2 * sigma))
}
