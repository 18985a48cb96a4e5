use ndarray::ArrayView2;
use rand::seq::index;
use rand::Rng;

use super::layer::SparseCodes;
use crate::{Error, Result};

/// Similarity used for one-nearest-neighbor encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// `argmin ‖w − x̂‖²`, bottom layer.
    SquaredEuclidean,
    /// `argmax wᵀx̂`, upper layers.
    Dot,
}

/// Training data for one layer: raw vectors at the bottom, sparse codes above.
#[derive(Debug, Clone, Copy)]
pub enum LayerInput<'a> {
    Dense(ArrayView2<'a, f64>),
    Codes(&'a SparseCodes),
}

impl LayerInput<'_> {
    pub fn rows(&self) -> usize {
        match self {
            LayerInput::Dense(m) => m.nrows(),
            LayerInput::Codes(c) => c.rows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LayerInput::Dense(m) => m.ncols(),
            LayerInput::Codes(c) => c.dim(),
        }
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        match self {
            LayerInput::Dense(m) => Sample::Dense(m.row(i).to_slice().expect("standard layout rows")),
            LayerInput::Codes(c) => Sample::Code(c.row(i)),
        }
    }
}

/// A single input vector: dense values, or the sorted active positions of a
/// binary code.
#[derive(Debug, Clone, Copy)]
pub enum Sample<'a> {
    Dense(&'a [f64]),
    Code(&'a [u32]),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Centroids {
    /// `k x d̂` row-major matrix.
    Dense { k: usize, values: Vec<f32> },
    /// Binary centroids: for each centroid, the sorted positions (into the
    /// feature subset) holding a one.
    Binary(Vec<Vec<u32>>),
}

impl Centroids {
    pub fn k(&self) -> usize {
        match self {
            Centroids::Dense { k, .. } => *k,
            Centroids::Binary(sets) => sets.len(),
        }
    }
}

/// One base learner: a random feature subset and `k` sampled centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct KCentroidsClustering {
    input_dim: usize,
    feature_indices: Vec<u32>,
    centroids: Centroids,
    metric: Metric,
    /// For binary centroids: CSR map from input dimension to the centroids
    /// holding a one there.
    postings: Option<(Vec<u32>, Vec<u16>)>,
}

impl KCentroidsClustering {
    pub fn new(
        input_dim: usize,
        feature_indices: Vec<u32>,
        centroids: Centroids,
        metric: Metric,
    ) -> Result<Self> {
        let dhat = feature_indices.len();
        if dhat == 0 {
            return Err(Error::InvalidInput("empty feature subset".into()));
        }
        let mut seen = vec![false; input_dim];
        for &f in &feature_indices {
            let f = f as usize;
            if f >= input_dim || std::mem::replace(&mut seen[f], true) {
                return Err(Error::InvalidInput(format!(
                    "feature index {f} is out of range or repeated (input dim {input_dim})"
                )));
            }
        }
        let k = centroids.k();
        if k == 0 || k > u16::MAX as usize {
            return Err(Error::InvalidInput(format!("unsupported centroid count {k}")));
        }
        let postings = match (&centroids, metric) {
            (Centroids::Dense { values, .. }, Metric::SquaredEuclidean) => {
                if values.len() != k * dhat {
                    return Err(Error::ShapeMismatch(format!(
                        "{} centroid values for {k} x {dhat}",
                        values.len()
                    )));
                }
                None
            }
            (Centroids::Binary(sets), Metric::Dot) => {
                let mut counts = vec![0u32; input_dim + 1];
                for set in sets {
                    for w in set.windows(2) {
                        if w[0] >= w[1] {
                            return Err(Error::InvalidInput("binary centroid positions must be increasing".into()));
                        }
                    }
                    for &p in set {
                        let dim = *feature_indices.get(p as usize).ok_or_else(|| {
                            Error::InvalidInput(format!("centroid position {p} outside feature subset of {dhat}"))
                        })?;
                        counts[dim as usize + 1] += 1;
                    }
                }
                for i in 0..input_dim {
                    counts[i + 1] += counts[i];
                }
                let mut fill = counts.clone();
                let mut members = vec![0u16; counts[input_dim] as usize];
                for (c, set) in sets.iter().enumerate() {
                    for &p in set {
                        let dim = feature_indices[p as usize] as usize;
                        members[fill[dim] as usize] = c as u16;
                        fill[dim] += 1;
                    }
                }
                Some((counts, members))
            }
            _ => {
                return Err(Error::InvalidInput(
                    "squared-Euclidean needs dense centroids, dot-product needs binary centroids".into(),
                ))
            }
        };
        Ok(Self {
            input_dim,
            feature_indices,
            centroids,
            metric,
            postings,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.k()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_indices(&self) -> &[u32] {
        &self.feature_indices
    }

    pub fn centroids(&self) -> &Centroids {
        &self.centroids
    }

    /// Index of the nearest centroid; ties resolve to the lowest index.
    pub fn encode(&self, x: Sample<'_>) -> Result<usize> {
        if let Sample::Dense(v) = x {
            if v.len() != self.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim,
                    found: v.len(),
                });
            }
        }
        let mut scratch = Vec::new();
        Ok(self.encode_with(x, &mut scratch))
    }

    /// Unchecked encode reusing a scratch buffer; dimensions must already match.
    pub(crate) fn encode_with(&self, x: Sample<'_>, scratch: &mut Vec<f32>) -> usize {
        match (&self.centroids, x) {
            (Centroids::Dense { k, values }, Sample::Dense(v)) => {
                let dhat = self.feature_indices.len();
                scratch.clear();
                scratch.extend(self.feature_indices.iter().map(|&f| v[f as usize] as f32));
                let mut best = 0;
                let mut best_d = f32::INFINITY;
                for c in 0..*k {
                    let d = squared_distance(&values[c * dhat..(c + 1) * dhat], scratch);
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            }
            (Centroids::Dense { .. }, Sample::Code(active)) => {
                let mut dense = vec![0.0; self.input_dim];
                for &a in active {
                    dense[a as usize] = 1.0;
                }
                self.encode_with(Sample::Dense(&dense), scratch)
            }
            (Centroids::Binary(sets), Sample::Code(active)) => {
                let (offsets, members) = self.postings.as_ref().expect("binary centroids have postings");
                scratch.clear();
                scratch.resize(sets.len(), 0.0);
                for &a in active {
                    let a = a as usize;
                    if a >= self.input_dim {
                        continue;
                    }
                    for &c in &members[offsets[a] as usize..offsets[a + 1] as usize] {
                        scratch[c as usize] += 1.0;
                    }
                }
                argmax(scratch)
            }
            (Centroids::Binary(sets), Sample::Dense(v)) => {
                scratch.clear();
                scratch.extend(sets.iter().map(|set| {
                    set.iter()
                        .map(|&p| v[self.feature_indices[p as usize] as usize])
                        .sum::<f64>() as f32
                }));
                argmax(scratch)
            }
        }
    }
}

fn argmax(scores: &[f32]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Squared distance in f32 with a fixed 8-way accumulation order.
fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for j in 0..8 {
            let d = a[i * 8 + j] - b[i * 8 + j];
            acc[j] += d * d;
        }
    }
    let mut tail = 0f32;
    for i in chunks * 8..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Trains one clustering: samples `d̂ = max(1, round(a·d))` distinct input
/// dimensions, then `k` distinct training points as centroids. Dense input
/// yields a squared-Euclidean clustering, code input a dot-product one.
pub fn train_clustering<R: Rng + ?Sized>(
    data: LayerInput<'_>,
    k: usize,
    feature_fraction: f64,
    rng: &mut R,
) -> Result<KCentroidsClustering> {
    let (n, d) = (data.rows(), data.dim());
    if d == 0 {
        return Err(Error::InvalidInput("input dimension is zero".into()));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("{n} samples for {k} centroids")));
    }
    let dhat = ((feature_fraction * d as f64).round() as usize).clamp(1, d);
    let mut features: Vec<u32> = index::sample(rng, d, dhat).into_iter().map(|i| i as u32).collect();
    features.sort_unstable();
    let picks = index::sample(rng, n, k).into_vec();

    let centroids = match data {
        LayerInput::Dense(m) => {
            let mut values = Vec::with_capacity(k * dhat);
            for &s in &picks {
                let row = m.row(s);
                values.extend(features.iter().map(|&f| row[f as usize] as f32));
            }
            Centroids::Dense { k, values }
        }
        LayerInput::Codes(codes) => Centroids::Binary(
            picks
                .iter()
                .map(|&s| {
                    codes
                        .row(s)
                        .iter()
                        .filter_map(|a| features.binary_search(a).ok().map(|p| p as u32))
                        .collect()
                })
                .collect(),
        ),
    };
    let metric = match data {
        LayerInput::Dense(_) => Metric::SquaredEuclidean,
        LayerInput::Codes(_) => Metric::Dot,
    };
    KCentroidsClustering::new(d, features, centroids, metric)
}
