//! Deterministic two-channel test mixtures.
//!
//! Room acoustics are replaced by a synthetic impulse response: a unit
//! direct-path impulse followed by an exponentially decaying white-noise
//! tail. Sources reach the two microphones with an integer interchannel
//! delay, which is what makes the cosIPD feature informative.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_DELAY: i32 = 8;
pub const MIN_T60: f64 = 0.05;
pub const MAX_T60: f64 = 1.0;

/// Amplitude envelope of the reverberant tail at time `t` seconds.
pub fn rir_envelope(t: f64, t60: f64) -> f64 {
    10f64.powf(-3.0 * t / t60)
}

/// Synthetic room impulse response.
///
/// A unit impulse at `direct_delay`; for `t60 > 0` it is followed by
/// `ceil(t60 * fs)` samples of seeded Gaussian noise shaped by
/// [`rir_envelope`], scaled so the tail carries the same energy as the
/// direct path.
pub fn synth_rir(t60: f64, direct_delay: usize, seed: u64, sample_rate: u32) -> Vec<f64> {
    let tail_len = if t60 > 0.0 { (t60 * sample_rate as f64).ceil() as usize } else { 0 };
    let mut h = vec![0.0; direct_delay + 1 + tail_len];
    h[direct_delay] = 1.0;
    if tail_len == 0 {
        return h;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tail = &mut h[direct_delay + 1..];
    for (j, v) in tail.iter_mut().enumerate() {
        let g: f64 = rng.sample(StandardNormal);
        *v = g * rir_envelope(j as f64 / sample_rate as f64, t60);
    }
    let energy: f64 = tail.iter().map(|v| v * v).sum();
    if energy > 0.0 {
        let s = energy.sqrt().recip();
        tail.iter_mut().for_each(|v| *v *= s);
    }
    h
}

/// Mixing recipe for one mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    /// Source locators: a WAV path, or `synth:<seed>` for [`synth_source`].
    pub sources: Vec<String>,
    /// Level of source 0 over each other source on channel 1, in dB.
    pub sir_db: f64,
    /// Per-source interchannel delay in samples; positive means channel 2
    /// hears the source later.
    pub delays: Vec<i32>,
    /// Reverberation time in seconds, 0 for anechoic.
    pub t60: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::config("mix.sources", "at least one source is required"));
        }
        if self.delays.len() != self.sources.len() {
            return Err(Error::config(
                "mix.delays",
                format!("{} delays for {} sources", self.delays.len(), self.sources.len()),
            ));
        }
        if let Some(d) = self.delays.iter().find(|d| d.abs() > MAX_DELAY) {
            return Err(Error::config("mix.delays", format!("|{d}| exceeds {MAX_DELAY} samples")));
        }
        if !(self.t60 == 0.0 || (MIN_T60..=MAX_T60).contains(&self.t60)) {
            return Err(Error::config(
                "mix.t60",
                format!("must be 0 or within [{MIN_T60}, {MAX_T60}] s, got {}", self.t60),
            ));
        }
        if !self.sir_db.is_finite() {
            return Err(Error::config("mix.sir_db", "must be finite"));
        }
        if self.sample_rate == 0 {
            return Err(Error::config("mix.sample_rate", "must be positive"));
        }
        Ok(())
    }

    /// Seed of the impulse response from source `s` to channel `c`.
    pub fn rir_seed(&self, s: usize, c: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((s as u64) * 2 + c as u64);
        rng.next_u64()
    }
}

/// A source waveform and its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceWave {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub channels: [Vec<f64>; 2],
    /// `references[s][c]`: image of source `s` on channel `c` after gain.
    pub references: Vec<[Vec<f64>; 2]>,
    pub spec: MixSpec,
}

impl Mixture {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn shift(x: &[f64], delay: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    if delay < x.len() {
        y[delay..].copy_from_slice(&x[..x.len() - delay]);
    }
    y
}

/// Linear convolution truncated to `x.len()` samples.
fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut y = vec![0.0; n];
    for (j, &hj) in h.iter().enumerate() {
        if hj == 0.0 || j >= n {
            continue;
        }
        for (yi, xi) in y[j..].iter_mut().zip(x) {
            *yi += hj * xi;
        }
    }
    y
}

/// Renders a mixture. Sources are trimmed to the shortest one; images are
/// truncated to that length, so reverberant tails past the end are lost.
pub fn mix(spec: &MixSpec, sources: &[SourceWave]) -> Result<Mixture> {
    spec.validate()?;
    if sources.len() != spec.sources.len() {
        return Err(Error::ShapeMismatch(format!(
            "spec lists {} sources, {} waveforms given",
            spec.sources.len(),
            sources.len()
        )));
    }
    if let Some((i, s)) = sources.iter().enumerate().find(|(_, s)| s.sample_rate != spec.sample_rate) {
        return Err(Error::Audio(format!(
            "source {i} ({}) has sample rate {} Hz, expected {} Hz",
            spec.sources[i], s.sample_rate, spec.sample_rate
        )));
    }
    let len = sources.iter().map(|s| s.samples.len()).min().unwrap_or(0);
    if len == 0 {
        return Err(Error::InvalidInput("empty source waveform".into()));
    }

    let mut images: Vec<[Vec<f64>; 2]> = Vec::with_capacity(sources.len());
    for (s, (src, &d)) in sources.iter().zip(&spec.delays).enumerate() {
        let x = &src.samples[..len];
        let direct = [(-d).max(0) as usize, d.max(0) as usize];
        let image = |c: usize| {
            if spec.t60 == 0.0 {
                shift(x, direct[c])
            } else {
                convolve_truncated(x, &synth_rir(spec.t60, direct[c], spec.rir_seed(s, c), spec.sample_rate))
            }
        };
        images.push([image(0), image(1)]);
    }

    let energy = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let e0 = energy(&images[0][0]);
    if e0 == 0.0 {
        return Err(Error::InvalidInput(format!("source 0 ({}) is silent on channel 1", spec.sources[0])));
    }
    let target = 10f64.powf(-spec.sir_db / 10.0) * e0;
    for (s, img) in images.iter_mut().enumerate().skip(1) {
        let e = energy(&img[0]);
        if e == 0.0 {
            return Err(Error::InvalidInput(format!("source {s} ({}) is silent on channel 1", spec.sources[s])));
        }
        let g = (target / e).sqrt();
        img.iter_mut().for_each(|ch| ch.iter_mut().for_each(|v| *v *= g));
    }

    let mut channels = [vec![0.0; len], vec![0.0; len]];
    for img in &images {
        for c in 0..2 {
            channels[c].iter_mut().zip(&img[c]).for_each(|(m, v)| *m += v);
        }
    }
    Ok(Mixture {
        channels,
        references: images,
        spec: spec.clone(),
    })
}

/// Seeded speech-like test signal: a harmonic tone whose fundamental
/// wanders between 90 and 260 Hz, amplitude-modulated into syllables of
/// 120 to 300 ms separated by short pauses. Peak amplitude 0.5.
pub fn synth_source(seed: u64, len: usize, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0_base = rng.random_range(90.0..260.0);
    let vib_rate = rng.random_range(2.0..5.0);
    let vib_depth = rng.random_range(0.03..0.12);
    let vib_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let formants = [rng.random_range(400.0..900.0), rng.random_range(1000.0..2200.0)];

    // Syllable envelope: raised-cosine bursts with gaps.
    let mut env = vec![0.0; len];
    let mut t = (rng.random_range(0.0..0.05) * fs) as usize;
    while t < len {
        let dur = (rng.random_range(0.12..0.30) * fs) as usize;
        let amp = rng.random_range(0.5..1.0);
        for j in 0..dur.min(len - t) {
            let ph = j as f64 / dur as f64;
            env[t + j] = amp * 0.5 * (1.0 - (std::f64::consts::TAU * ph).cos());
        }
        t += dur + (rng.random_range(0.03..0.12) * fs) as usize;
    }

    let nyquist = fs / 2.0;
    let max_h = (nyquist / 90.0).ceil() as usize;
    let mut phase = 0.0f64;
    let mut out = vec![0.0; len];
    for (i, o) in out.iter_mut().enumerate() {
        let time = i as f64 / fs;
        let f0 = f0_base * (1.0 + vib_depth * (std::f64::consts::TAU * vib_rate * time + vib_phase).sin());
        phase = (phase + std::f64::consts::TAU * f0 / fs) % std::f64::consts::TAU;
        let mut v = 0.0;
        for h in 1..=max_h {
            let f = h as f64 * f0;
            if f >= nyquist * 0.95 {
                break;
            }
            let gain = formants
                .iter()
                .map(|&fc| 1.0 / (1.0 + ((f - fc) / 250.0).powi(2)))
                .sum::<f64>()
                + 0.05;
            v += gain / h as f64 * (h as f64 * phase).sin();
        }
        *o = env[i] * v;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::cos_ipd;
    use crate::signal::{stft, StftConfig};

    fn spec(n: usize, delays: Vec<i32>, t60: f64) -> MixSpec {
        MixSpec {
            sources: (0..n).map(|i| format!("synth:{i}")).collect(),
            sir_db: 0.0,
            delays,
            t60,
            seed: 11,
            sample_rate: 8000,
        }
    }

    fn wave(samples: Vec<f64>) -> SourceWave {
        SourceWave { samples, sample_rate: 8000 }
    }

    #[test]
    fn anechoic_rir_is_an_impulse() {
        assert_eq!(synth_rir(0.0, 3, 1, 8000), vec![0.0, 0.0, 0.0, 1.0]);
        assert!((rir_envelope(0.4, 0.4) - 1e-3).abs() < 1e-15);
        let h = synth_rir(0.3, 2, 5, 8000);
        assert_eq!(h.len(), 3 + 2400);
        let tail: f64 = h[3..].iter().map(|v| v * v).sum();
        assert!((tail - 1.0).abs() < 1e-12);
        assert_eq!(h, synth_rir(0.3, 2, 5, 8000));
    }

    #[test]
    fn single_source_passes_through() {
        let x = synth_source(3, 4000, 8000);
        let m = mix(&spec(1, vec![0], 0.0), &[wave(x.clone())]).unwrap();
        assert_eq!(m.channels[0], x);
        assert_eq!(m.channels[1], x);
    }

    #[test]
    fn sir_and_exact_additivity() {
        let srcs = [wave(synth_source(1, 6000, 8000)), wave(synth_source(2, 7000, 8000))];
        for t60 in [0.0, 0.3] {
            for sir in [0.0, 6.0] {
                let mut sp = spec(2, vec![0, 4], t60);
                sp.sir_db = sir;
                let m = mix(&sp, &srcs).unwrap();
                assert_eq!(m.len(), 6000);
                let e = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
                let ratio = 10.0 * (e(&m.references[0][0]) / e(&m.references[1][0])).log10();
                assert!((ratio - sir).abs() < 1e-6 * sir.abs().max(1.0), "{ratio}");
                for c in 0..2 {
                    for i in 0..m.len() {
                        assert_eq!(m.channels[c][i] - (m.references[0][c][i] + m.references[1][c][i]), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn validation() {
        let src = [wave(vec![1.0; 10]), wave(vec![1.0; 10])];
        assert!(mix(&spec(2, vec![0], 0.0), &src).is_err());
        assert!(mix(&spec(2, vec![0, 9], 0.0), &src).is_err());
        assert!(mix(&spec(2, vec![0, 0], 0.01), &src).is_err());
        let mut sp = spec(2, vec![0, 0], 0.0);
        sp.sample_rate = 16000;
        let err = mix(&sp, &src).unwrap_err().to_string();
        assert!(err.contains("synth:0"), "{err}");
    }

    #[test]
    fn delay_shows_in_cos_ipd_of_solo_region() {
        // Tones centred on bins 8, 16, 24, 32: under a periodic Hamming
        // window their frame spectra are exact, so the interchannel phase
        // is exactly the delay phase.
        let cfg = StftConfig::default();
        let len = 8000;
        let tone: Vec<f64> = (0..len)
            .map(|n| {
                [8.0, 16.0, 24.0, 32.0]
                    .iter()
                    .map(|b| (std::f64::consts::TAU * b * n as f64 / 256.0 + b).cos())
                    .sum()
            })
            .collect();
        let mut other = synth_source(9, len, 8000);
        other[..len / 2].iter_mut().for_each(|v| *v = 0.0);
        let sp = spec(2, vec![3, -2], 0.0);
        let m = mix(&sp, &[wave(tone), wave(other)]).unwrap();
        let s1 = stft(&m.channels[0], &cfg).unwrap();
        let s2 = stft(&m.channels[1], &cfg).unwrap();
        let ipd = cos_ipd(&s1, &s2, 1e-8).unwrap();
        let solo_frames = (len / 2 - 256 - 8) / 64;
        for t in 1..solo_frames {
            for b in [8usize, 16, 24, 32] {
                let want = (std::f64::consts::TAU * b as f64 * 3.0 / 256.0).cos();
                assert!((ipd[[t, b]] - want).abs() < 1e-3, "t={t} b={b}");
            }
        }
    }

    #[test]
    fn synth_sources_differ_and_are_deterministic() {
        let a = synth_source(1, 2000, 8000);
        assert_eq!(a, synth_source(1, 2000, 8000));
        assert_ne!(a, synth_source(2, 2000, 8000));
        let peak = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
    }
}
