//! Per T-F unit input features: `[ln|y1|, ln|y2|, cos(∠y1 − ∠y2)]`.
//!
//! T-F units are flattened row-major, frames first: unit `i` is
//! `(t, f) = (i / bins, i % bins)`. Every module that maps between flat
//! unit indices and the T-F plane uses [`unit_index`] / [`unit_coords`].

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::signal::Spectrogram;
use crate::{Error, Result};

pub const DEFAULT_FLOOR: f64 = 1e-8;

/// Number of feature components per unit.
pub const COMPONENTS: usize = 3;

pub fn unit_index(t: usize, f: usize, bins: usize) -> usize {
    t * bins + f
}

pub fn unit_coords(i: usize, bins: usize) -> (usize, usize) {
    (i / bins, i % bins)
}

/// `frames x bins x 3` feature tensor, components ordered
/// `[log|y1|, log|y2|, cosIPD]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub data: Array3<f64>,
}

impl FeatureTensor {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.dim().2 != COMPONENTS {
            return Err(Error::ShapeMismatch(format!(
                "feature tensor needs {COMPONENTS} components, found {}",
                data.dim().2
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature tensor contains non-finite values".into()));
        }
        if data.index_axis(Axis(2), 2).iter().any(|c| !(-1.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput("cosIPD component outside [-1, 1]".into()));
        }
        Ok(Self { data })
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn bins(&self) -> usize {
        self.data.dim().1
    }

    pub fn units(&self) -> usize {
        self.frames() * self.bins()
    }

    /// `n x 3` view with one row per unit.
    pub fn flatten(&self) -> ArrayView2<'_, f64> {
        self.data
            .view()
            .into_shape_with_order((self.units(), COMPONENTS))
            .expect("feature tensor is contiguous")
    }

    pub fn unflatten(flat: Array2<f64>, frames: usize, bins: usize) -> Result<Self> {
        if flat.dim() != (frames * bins, COMPONENTS) {
            return Err(Error::ShapeMismatch(format!(
                "cannot unflatten {:?} into {frames} x {bins} x {COMPONENTS}",
                flat.dim()
            )));
        }
        let data = flat
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((frames, bins, COMPONENTS))
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(data)
    }

    /// Channel-1 log-magnitude, `frames x bins`.
    pub fn log_mag_ref(&self) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(2), 0)
    }
}

pub fn log_magnitude(spec: &Spectrogram, floor: f64) -> Array2<f64> {
    spec.data.mapv(|c| c.norm().max(floor).ln())
}

/// Cosine of the interchannel phase difference. Units where either channel
/// is below `floor` carry no phase evidence and get 1.
pub fn cos_ipd(spec1: &Spectrogram, spec2: &Spectrogram, floor: f64) -> Result<Array2<f64>> {
    check_shapes(spec1, spec2)?;
    let mut out = Array2::zeros(spec1.shape());
    ndarray::Zip::from(&mut out)
        .and(&spec1.data)
        .and(&spec2.data)
        .for_each(|o, a, b| {
            let (ma, mb) = (a.norm(), b.norm());
            *o = if ma < floor || mb < floor {
                1.0
            } else {
                ((a * b.conj()).re / (ma * mb)).clamp(-1.0, 1.0)
            };
        });
    Ok(out)
}

pub fn assemble_features(spec1: &Spectrogram, spec2: &Spectrogram, floor: f64) -> Result<FeatureTensor> {
    if floor.is_nan() || floor <= 0.0 {
        return Err(Error::config("features.floor", "must be positive"));
    }
    let ipd = cos_ipd(spec1, spec2, floor)?;
    let (frames, bins) = spec1.shape();
    let mut data = Array3::zeros((frames, bins, COMPONENTS));
    data.index_axis_mut(Axis(2), 0).assign(&log_magnitude(spec1, floor));
    data.index_axis_mut(Axis(2), 1).assign(&log_magnitude(spec2, floor));
    data.index_axis_mut(Axis(2), 2).assign(&ipd);
    FeatureTensor::new(data)
}

fn check_shapes(a: &Spectrogram, b: &Spectrogram) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "channel spectrograms differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}
