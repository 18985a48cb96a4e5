use ndarray::Array2;
use rustfft::num_complex::Complex64;

use crate::features::unit_index;
use crate::signal::{istft, Spectrogram};
use crate::{Error, Result};

/// Binary masks, one per source, that partition the T-F plane.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    masks: Vec<Array2<u8>>,
}

impl MaskSet {
    /// Validates that `masks` are binary, equally shaped, and sum to one at
    /// every unit.
    pub fn new(masks: Vec<Array2<u8>>) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::InvalidInput("a mask set needs at least one mask".into()))?
            .dim();
        if let Some(m) = masks.iter().find(|m| m.dim() != first) {
            return Err(Error::ShapeMismatch(format!("mask shapes {:?} and {:?}", first, m.dim())));
        }
        for ((t, f), _) in masks[0].indexed_iter() {
            let sum: u32 = masks.iter().map(|m| m[[t, f]] as u32).sum();
            if sum != 1 || masks.iter().any(|m| m[[t, f]] > 1) {
                return Err(Error::InvalidInput(format!("masks do not partition unit ({t}, {f})")));
            }
        }
        Ok(Self { masks })
    }

    pub fn masks(&self) -> &[Array2<u8>] {
        &self.masks
    }

    pub fn sources(&self) -> usize {
        self.masks.len()
    }

    /// `(frames, bins)`.
    pub fn shape(&self) -> (usize, usize) {
        self.masks[0].dim()
    }

    /// The label of every unit in row-major (frame-major) order.
    pub fn labels(&self) -> Vec<usize> {
        let (frames, bins) = self.shape();
        let mut labels = vec![0; frames * bins];
        for (o, m) in self.masks.iter().enumerate() {
            for ((t, f), &v) in m.indexed_iter() {
                if v == 1 {
                    labels[unit_index(t, f, bins)] = o;
                }
            }
        }
        labels
    }
}

/// Mask `o` is 1 exactly at the units labeled `o`.
pub fn masks_from_labels(labels: &[usize], frames: usize, bins: usize, o: usize) -> Result<MaskSet> {
    if labels.len() != frames * bins {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {frames} x {bins} units",
            labels.len()
        )));
    }
    if o == 0 {
        return Err(Error::InvalidInput("need at least one source".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= o) {
        return Err(Error::InvalidInput(format!("label {l} out of range for {o} sources")));
    }
    let masks = (0..o)
        .map(|s| Array2::from_shape_fn((frames, bins), |(t, f)| (labels[unit_index(t, f, bins)] == s) as u8))
        .collect();
    Ok(MaskSet { masks })
}

/// Masks the reference-channel spectrogram and resynthesizes one waveform
/// per mask.
pub fn apply_masks_and_resynthesize(masks: &MaskSet, mixture: &Spectrogram) -> Result<Vec<Vec<f64>>> {
    if masks.shape() != mixture.shape() {
        return Err(Error::ShapeMismatch(format!(
            "masks are {:?}, spectrogram is {:?}",
            masks.shape(),
            mixture.shape()
        )));
    }
    masks
        .masks()
        .iter()
        .map(|m| {
            let mut spec = mixture.clone();
            spec.data.zip_mut_with(m, |c, &v| {
                if v == 0 {
                    *c = Complex64::new(0.0, 0.0);
                }
            });
            istft(&spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, StftConfig};

    #[test]
    fn all_zero_labels() {
        let m = masks_from_labels(&[0; 12], 3, 4, 3).unwrap();
        assert!(m.masks()[0].iter().all(|&v| v == 1));
        assert!(m.masks()[1..].iter().all(|x| x.iter().all(|&v| v == 0)));
        assert!(masks_from_labels(&[0, 3], 1, 2, 3).is_err());
        assert!(masks_from_labels(&[0, 1], 1, 3, 3).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let labels: Vec<usize> = (0..20).map(|i| (i * 7) % 3).collect();
        let m = masks_from_labels(&labels, 4, 5, 3).unwrap();
        assert_eq!(m.labels(), labels);
        assert_eq!(MaskSet::new(m.masks().to_vec()).unwrap(), m);
        let mut bad = m.masks().to_vec();
        bad[0][[0, 0]] ^= 1;
        assert!(MaskSet::new(bad).is_err());
    }

    #[test]
    fn complementary_masks_sum_to_mixture() {
        let x: Vec<f64> = (0..2000).map(|i| ((i * i) as f64 * 0.001).sin()).collect();
        let spec = stft(&x, &StftConfig::default()).unwrap();
        let (t, f) = spec.shape();
        let labels: Vec<usize> = (0..t * f).map(|i| (i % 5 == 0) as usize).collect();
        let masks = masks_from_labels(&labels, t, f, 2).unwrap();
        let outs = apply_masks_and_resynthesize(&masks, &spec).unwrap();
        let whole = istft(&spec).unwrap();
        let norm: f64 = whole.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err: f64 = (0..x.len()).map(|i| (outs[0][i] + outs[1][i] - whole[i]).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-6 * norm);

        let one = masks_from_labels(&vec![0; t * f], t, f, 1).unwrap();
        let y = &apply_masks_and_resynthesize(&one, &spec).unwrap()[0];
        assert!(y.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}
