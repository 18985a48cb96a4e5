use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Framing parameters. Defaults are 32 ms frames with an 8 ms hop at 8 kHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            frame_len: 256,
            hop: 64,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::config("stft.sample_rate", "must be positive"));
        }
        if self.frame_len < 2 || self.frame_len % 2 != 0 {
            return Err(Error::config(
                "stft.frame_len",
                format!("must be an even number >= 2, got {}", self.frame_len),
            ));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::config(
                "stft.hop",
                format!("must satisfy 1 <= hop <= frame_len ({}), got {}", self.frame_len, self.hop),
            ));
        }
        Ok(())
    }

    /// Number of frames produced for a signal of `len` samples (tail zero-padded).
    pub fn frame_count(&self, len: usize) -> usize {
        if len <= self.frame_len {
            1
        } else {
            1 + (len - self.frame_len).div_ceil(self.hop)
        }
    }
}

/// Periodic Hamming window.
pub fn hamming(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// One-sided complex spectrogram of a single channel, `frames x bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Array2<Complex64>,
    pub config: StftConfig,
    pub original_len: usize,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn bins(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            data: Array2::zeros(self.data.dim()),
            config: self.config,
            original_len: self.original_len,
        }
    }
}

pub fn stft(wave: &[f64], config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    let n = config.frame_len;
    if wave.len() < n {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples is shorter than one frame ({n})",
            wave.len()
        )));
    }
    if let Some(i) = wave.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
    }
    let frames = config.frame_count(wave.len());
    let bins = config.bins();
    let window = hamming(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n];
    let mut data = Array2::zeros((frames, bins));

    for t in 0..frames {
        let start = t * config.hop;
        for (j, (b, w)) in buf.iter_mut().zip(&window).enumerate() {
            let x = wave.get(start + j).copied().unwrap_or(0.0);
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (dst, src) in data.row_mut(t).iter_mut().zip(&buf[..bins]) {
            *dst = *src;
        }
    }
    Ok(Spectrogram {
        data,
        config: *config,
        original_len: wave.len(),
    })
}

/// Weighted overlap-add resynthesis.
///
/// Each inverse-transformed frame is multiplied by the analysis window,
/// accumulated, and divided sample-wise by the accumulated squared window,
/// so perfect reconstruction does not depend on the window satisfying COLA.
pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    let config = &spec.config;
    config.validate()?;
    let n = config.frame_len;
    let bins = config.bins();
    if spec.bins() != bins {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram has {} bins, config expects {bins}",
            spec.bins()
        )));
    }
    let frames = spec.frames();
    let window = hamming(n);
    let total = (frames.saturating_sub(1)) * config.hop + n;
    let mut out = vec![0.0; total];
    let mut norm = vec![0.0; total];

    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n];
    let scale = 1.0 / n as f64;

    for t in 0..frames {
        let row = spec.data.row(t);
        // Hermitian extension; DC and Nyquist bins must be real.
        buf[0] = Complex64::new(row[0].re, 0.0);
        for k in 1..bins - 1 {
            buf[k] = row[k];
            buf[n - k] = row[k].conj();
        }
        buf[bins - 1] = Complex64::new(row[bins - 1].re, 0.0);
        ifft.process_with_scratch(&mut buf, &mut scratch);

        let start = t * config.hop;
        for j in 0..n {
            out[start + j] += buf[j].re * scale * window[j];
            norm[start + j] += window[j] * window[j];
        }
    }

    let len = spec.original_len.min(total);
    out.truncate(len);
    for (i, (o, d)) in out.iter_mut().zip(&norm).enumerate() {
        if *d < 1e-12 {
            return Err(Error::Numerical(format!(
                "overlap-add normalization {d:e} below 1e-12 at sample {i}"
            )));
        }
        *o /= d;
    }
    Ok(out)
}
