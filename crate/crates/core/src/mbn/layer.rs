use rayon::prelude::*;

use super::clustering::{train_clustering, KCentroidsClustering, LayerInput, Metric, Sample};
use super::{clustering_rng, MbnConfig};
use crate::{Error, Result};

/// Rows of concatenated one-hot codes, stored as active positions.
///
/// Row `i` holds `V` entries; entry `v` lies in `[v·k, (v+1)·k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseCodes {
    clusterings: usize,
    k: usize,
    active: Vec<u32>,
}

impl SparseCodes {
    pub fn new(clusterings: usize, k: usize, active: Vec<u32>) -> Result<Self> {
        if clusterings == 0 || active.len() % clusterings != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} active entries do not split into rows of {clusterings}",
                active.len()
            )));
        }
        for row in active.chunks(clusterings) {
            for (v, &a) in row.iter().enumerate() {
                if (a as usize) < v * k || (a as usize) >= (v + 1) * k {
                    return Err(Error::InvalidInput(format!("active index {a} outside block {v}")));
                }
            }
        }
        Ok(Self { clusterings, k, active })
    }

    pub fn rows(&self) -> usize {
        self.active.len() / self.clusterings
    }

    pub fn dim(&self) -> usize {
        self.clusterings * self.k
    }

    pub fn clusterings(&self) -> usize {
        self.clusterings
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.active[i * self.clusterings..(i + 1) * self.clusterings]
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for &a in self.row(i) {
            out[a as usize] = 1.0;
        }
        out
    }

    /// Inner product of two code rows: the number of clusterings that agree.
    pub fn overlap(a: &[u32], b: &[u32]) -> usize {
        a.iter().zip(b).filter(|(x, y)| x == y).count()
    }
}

/// `V` clusterings sharing `k` and metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MbnLayer {
    k: usize,
    metric: Metric,
    clusterings: Vec<KCentroidsClustering>,
}

impl MbnLayer {
    pub fn new(clusterings: Vec<KCentroidsClustering>) -> Result<Self> {
        let first = clusterings
            .first()
            .ok_or_else(|| Error::InvalidInput("layer without clusterings".into()))?;
        let (k, metric, dim) = (first.k(), first.metric(), first.input_dim());
        if clusterings
            .iter()
            .any(|c| c.k() != k || c.metric() != metric || c.input_dim() != dim)
        {
            return Err(Error::InvalidInput(
                "clusterings in a layer must share k, metric and input dimension".into(),
            ));
        }
        Ok(Self { k, metric, clusterings })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn clusterings(&self) -> &[KCentroidsClustering] {
        &self.clusterings
    }

    pub fn input_dim(&self) -> usize {
        self.clusterings[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.clusterings.len() * self.k
    }

    /// Concatenated code of one sample: entry `v` is `v·k + winner_v`.
    pub fn encode(&self, x: Sample<'_>) -> Result<Vec<u32>> {
        if let Sample::Dense(v) = x {
            if v.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim(),
                    found: v.len(),
                });
            }
        }
        let mut out = Vec::with_capacity(self.clusterings.len());
        let mut scratch = Vec::new();
        self.encode_into(x, &mut out, &mut scratch);
        Ok(out)
    }

    pub(crate) fn encode_into(&self, x: Sample<'_>, out: &mut Vec<u32>, scratch: &mut Vec<f32>) {
        for (v, c) in self.clusterings.iter().enumerate() {
            out.push((v * self.k + c.encode_with(x, scratch)) as u32);
        }
    }

    /// Encodes every row of `input`.
    pub fn encode_all(&self, input: LayerInput<'_>) -> Result<SparseCodes> {
        if input.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: input.dim(),
            });
        }
        const CHUNK: usize = 256;
        let v = self.clusterings.len();
        let n = input.rows();
        let chunks: Vec<Vec<u32>> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut out = Vec::with_capacity(CHUNK * v);
                let mut scratch = Vec::new();
                for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    self.encode_into(input.sample(i), &mut out, &mut scratch);
                }
                out
            })
            .collect();
        Ok(SparseCodes {
            clusterings: v,
            k: self.k,
            active: chunks.concat(),
        })
    }
}

/// Trains the `V` clusterings of hidden layer `layer_index` in parallel.
pub fn train_layer(input: LayerInput<'_>, k: usize, config: &MbnConfig, layer_index: usize) -> Result<MbnLayer> {
    let clusterings = (0..config.clusterings)
        .into_par_iter()
        .map(|v| {
            let mut rng = clustering_rng(config.seed, layer_index, v);
            train_clustering(input, k, config.feature_fraction, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    MbnLayer::new(clusterings)
}
