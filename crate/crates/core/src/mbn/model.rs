use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::clustering::{LayerInput, Sample};
use super::layer::{train_layer, MbnLayer, SparseCodes};
use super::pca::{pca_fit_codes, Pca};
use super::MbnConfig;
use crate::{Error, Result};

/// A trained network: hidden layers bottom-up plus the PCA output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MbnModel {
    pub(crate) config: MbnConfig,
    pub(crate) input_dim: usize,
    pub(crate) layers: Vec<MbnLayer>,
    pub(crate) pca: Pca,
}

impl MbnModel {
    /// Builds the network layer by layer on `data` (`n x d`).
    pub fn fit(data: ArrayView2<'_, f64>, config: &MbnConfig) -> Result<Self> {
        Self::fit_transform(data, config).map(|(m, _)| m)
    }

    /// Fits and returns the m-vectors of the training rows, identical to
    /// calling [`MbnModel::transform_batch`] on them afterwards.
    pub fn fit_transform(data: ArrayView2<'_, f64>, config: &MbnConfig) -> Result<(Self, Array2<f64>)> {
        config.validate()?;
        let schedule = config.k_schedule()?;
        let (n, d) = data.dim();
        if d == 0 {
            return Err(Error::InvalidInput("input dimension is zero".into()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite input value at flat index {i}")));
        }
        if let Some(&k) = schedule.iter().find(|&&k| n <= k) {
            return Err(Error::InsufficientData(format!(
                "{n} samples, a layer with k = {k} needs more than {k}"
            )));
        }
        let data = data.as_standard_layout();

        let mut layers = Vec::with_capacity(schedule.len());
        let mut codes: Option<SparseCodes> = None;
        for (l, &k) in schedule.iter().enumerate() {
            let input = match &codes {
                None => LayerInput::Dense(data.view()),
                Some(c) => LayerInput::Codes(c),
            };
            let layer = train_layer(input, k, config, l)?;
            let next = layer.encode_all(input)?;
            layers.push(layer);
            codes = Some(next);
        }
        let codes = codes.expect("at least one layer");
        let pca = pca_fit_codes(&codes, config.output_dim)?;
        let out = project_all(&pca, &codes);
        Ok((
            Self {
                config: *config,
                input_dim: d,
                layers,
                pca,
            },
            out,
        ))
    }

    pub fn config(&self) -> &MbnConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.pca.output_dim()
    }

    pub fn layers(&self) -> &[MbnLayer] {
        &self.layers
    }

    pub fn pca(&self) -> &Pca {
        &self.pca
    }

    /// Per-layer centroid counts.
    pub fn k_values(&self) -> Vec<usize> {
        self.layers.iter().map(MbnLayer::k).collect()
    }

    /// Top-layer sparse code of one input.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<u32>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        let mut scratch = Vec::new();
        let mut code = Vec::new();
        let mut next = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            next.clear();
            let input = if l == 0 { Sample::Dense(x) } else { Sample::Code(&code) };
            layer.encode_into(input, &mut next, &mut scratch);
            std::mem::swap(&mut code, &mut next);
        }
        Ok(code)
    }

    /// m-vector of one input.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.pca.project_code(&self.encode(x)?))
    }

    pub fn transform_batch(&self, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if data.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: data.ncols(),
            });
        }
        let data = data.as_standard_layout();
        let mut codes = self.layers[0].encode_all(LayerInput::Dense(data.view()))?;
        for layer in &self.layers[1..] {
            codes = layer.encode_all(LayerInput::Codes(&codes))?;
        }
        Ok(project_all(&self.pca, &codes))
    }
}

fn project_all(pca: &Pca, codes: &SparseCodes) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = (0..codes.rows())
        .into_par_iter()
        .map(|i| pca.project_code(codes.row(i)))
        .collect();
    let dim = pca.output_dim();
    Array2::from_shape_vec((rows.len(), dim), rows.concat()).expect("rows have output_dim entries")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |(i, j)| {
            let c = if i % 2 == 0 { 0.0 } else { 8.0 };
            (if j == 0 { c } else { 0.0 }) + rng.sample::<f64, _>(StandardNormal)
        })
    }

    fn small_config() -> MbnConfig {
        MbnConfig {
            clusterings: 20,
            k1: 8,
            ..Default::default()
        }
    }

    #[test]
    fn shallow_model_shape() {
        let data = blobs(200, 5, 1);
        let (m, out) = MbnModel::fit_transform(data.view(), &small_config()).unwrap();
        assert_eq!(m.k_values(), vec![8]);
        assert_eq!(out.dim(), (200, 2));
        assert_eq!(m.transform(data.row(3).as_slice().unwrap()).unwrap(), out.row(3).to_vec());
        assert_eq!(m.transform_batch(data.view()).unwrap(), out);
    }

    #[test]
    fn deep_model_layers() {
        let data = blobs(300, 4, 2);
        let cfg = MbnConfig { clusterings: 10, k1: 100, delta: 0.5, ..Default::default() };
        let m = MbnModel::fit(data.view(), &cfg).unwrap();
        assert_eq!(m.k_values(), vec![100, 50, 25, 12, 6]);
        assert_eq!(m.layers()[0].metric(), crate::mbn::Metric::SquaredEuclidean);
        assert!(m.layers()[1..].iter().all(|l| l.metric() == crate::mbn::Metric::Dot));
        let code = m.encode(data.row(0).as_slice().unwrap()).unwrap();
        assert_eq!(code.len(), 10);
    }

    #[test]
    fn insufficient_and_mismatched() {
        let data = blobs(20, 3, 3);
        assert!(matches!(
            MbnModel::fit(data.view(), &small_config().clone_with_k1(20)),
            Err(Error::InsufficientData(_))
        ));
        let m = MbnModel::fit(data.view(), &small_config()).unwrap();
        assert!(matches!(m.transform(&[0.0; 2]), Err(Error::DimensionMismatch { .. })));
    }

    impl MbnConfig {
        fn clone_with_k1(&self, k1: usize) -> Self {
            Self { k1, ..*self }
        }
    }
}
