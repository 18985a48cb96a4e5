//! Deep-clustering objective and embedders.
//!
//! The affinity cost is `J(X, B) = ‖X·Xᵀ − B·Bᵀ‖²_F` for an `n x D`
//! embedding matrix `X` and an `n x U` one-hot indicator matrix `B`.
//! It is evaluated through the low-rank expansion
//! `‖XᵀX‖²_F − 2‖XᵀB‖²_F + ‖BᵀB‖²_F`, which never forms an `n x n` matrix.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::features::FeatureTensor;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const DEFAULT_EMBEDDING_DIM: usize = 40;
const UNIT_NORM_TOL: f64 = 1e-6;

/// One-hot speaker-dominance matrix, stored as one label per T-F unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorMatrix {
    labels: Vec<usize>,
    speaker_count: usize,
}

impl IndicatorMatrix {
    pub fn new(labels: Vec<usize>, speaker_count: usize) -> Result<Self> {
        if let Some(&l) = labels.iter().find(|&&l| l >= speaker_count) {
            return Err(Error::InvalidInput(format!(
                "label {l} out of range for {speaker_count} speakers"
            )));
        }
        Ok(Self { labels, speaker_count })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn speaker_count(&self) -> usize {
        self.speaker_count
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut b = Array2::zeros((self.rows(), self.speaker_count));
        for (i, &l) in self.labels.iter().enumerate() {
            b[[i, l]] = 1.0;
        }
        b
    }

    /// Relabels speakers: column `u` moves to `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::new(self.labels.iter().map(|&l| perm[l]).collect(), self.speaker_count)
    }
}

/// Assigns each T-F unit to the source with the largest magnitude; ties go
/// to the lowest source index. Units are flattened row-major.
pub fn indicator_matrix(source_mags: &[ArrayView2<'_, f64>]) -> Result<IndicatorMatrix> {
    let first = source_mags
        .first()
        .ok_or_else(|| Error::InvalidInput("empty source list".into()))?;
    let shape = first.dim();
    if let Some(m) = source_mags.iter().find(|m| m.dim() != shape) {
        return Err(Error::ShapeMismatch(format!(
            "source magnitudes differ: {shape:?} vs {:?}",
            m.dim()
        )));
    }
    let mut labels = Vec::with_capacity(shape.0 * shape.1);
    for t in 0..shape.0 {
        for f in 0..shape.1 {
            let mut best = 0;
            for (u, m) in source_mags.iter().enumerate().skip(1) {
                if m[[t, f]] > source_mags[best][[t, f]] {
                    best = u;
                }
            }
            labels.push(best);
        }
    }
    IndicatorMatrix::new(labels, source_mags.len())
}

/// `n x D` matrix of per-unit embeddings with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        for (i, row) in data.rows().into_iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("embedding row {i} is not finite")));
            }
            let n = row.dot(&row).sqrt();
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidInput(format!(
                    "embedding row {i} has norm {n}, expected unit norm"
                )));
            }
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

/// Maps a feature tensor to one unit-norm embedding per flattened T-F unit.
pub trait Embedder: Sync {
    fn embed(&self, features: &FeatureTensor) -> Result<EmbeddingMatrix>;
}

fn check_rows(x: &ArrayView2<'_, f64>, b: &IndicatorMatrix) -> Result<()> {
    if x.nrows() != b.rows() {
        return Err(Error::ShapeMismatch(format!(
            "embedding has {} rows, indicator has {}",
            x.nrows(),
            b.rows()
        )));
    }
    Ok(())
}

/// Per-speaker row sums of `X`, i.e. the columns of `XᵀB` as rows.
fn speaker_sums(x: &ArrayView2<'_, f64>, b: &IndicatorMatrix) -> Array2<f64> {
    let mut s = Array2::zeros((b.speaker_count(), x.ncols()));
    for (row, &l) in x.rows().into_iter().zip(b.labels()) {
        let mut dst = s.row_mut(l);
        dst += &row;
    }
    s
}

pub fn dpcl_objective(x: ArrayView2<'_, f64>, b: &IndicatorMatrix) -> Result<f64> {
    check_rows(&x, b)?;
    let gram = x.t().dot(&x);
    let xx: f64 = gram.iter().map(|v| v * v).sum();
    let xb: f64 = speaker_sums(&x, b).iter().map(|v| v * v).sum();
    let mut counts = vec![0f64; b.speaker_count()];
    for &l in b.labels() {
        counts[l] += 1.0;
    }
    let bb: f64 = counts.iter().map(|c| c * c).sum();
    Ok((xx - 2.0 * xb + bb).max(0.0))
}

/// `∇J = 4(XXᵀ − BBᵀ)X = 4(X·(XᵀX) − B·(BᵀX))`.
pub fn dpcl_objective_grad(x: ArrayView2<'_, f64>, b: &IndicatorMatrix) -> Result<Array2<f64>> {
    check_rows(&x, b)?;
    let gram = x.t().dot(&x);
    let sums = speaker_sums(&x, b);
    let mut g = x.dot(&gram);
    for (mut row, &l) in g.rows_mut().into_iter().zip(b.labels()) {
        row -= &sums.row(l);
        row *= 4.0;
    }
    Ok(g)
}

/// Noisy stand-in for a trained embedding network.
///
/// Each speaker is mapped to a fixed seeded orthonormal direction in `R^D`;
/// every unit gets its speaker's direction plus isotropic Gaussian noise of
/// scale `sigma`, re-normalized to unit length. Values are rounded to f32 so
/// embeddings survive the tensor file format unchanged.
pub fn oracle_embedder(b: &IndicatorMatrix, sigma: f64, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let u = b.speaker_count();
    if dim < u {
        return Err(Error::config(
            "embedder.dim",
            format!("embedding dimension {dim} is smaller than the speaker count {u}"),
        ));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config("embedder.sigma", format!("must be finite and >= 0, got {sigma}")));
    }
    let mut map_rng = ChaCha8Rng::seed_from_u64(seed);
    map_rng.set_stream(0);
    let mut dirs: Vec<Vec<f64>> = (0..u)
        .map(|_| (0..dim).map(|_| map_rng.sample(StandardNormal)).collect())
        .collect();
    crate::linalg::orthonormalize(&mut dirs);

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let mut data = Array2::zeros((b.rows(), dim));
    let mut buf = vec![0.0; dim];
    for (mut row, &l) in data.rows_mut().into_iter().zip(b.labels()) {
        for (v, d) in buf.iter_mut().zip(&dirs[l]) {
            let g: f64 = noise_rng.sample(StandardNormal);
            *v = d + sigma * g;
        }
        let mut n = crate::linalg::norm(&buf);
        if n == 0.0 {
            buf.copy_from_slice(&dirs[l]);
            n = 1.0;
        }
        for (dst, v) in row.iter_mut().zip(&buf) {
            *dst = (v / n) as f32 as f64;
        }
    }
    EmbeddingMatrix::new(data)
}

/// [`oracle_embedder`] behind the [`Embedder`] interface.
#[derive(Debug, Clone)]
pub struct OracleEmbedder {
    pub indicator: IndicatorMatrix,
    pub sigma: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Embedder for OracleEmbedder {
    fn embed(&self, features: &FeatureTensor) -> Result<EmbeddingMatrix> {
        if features.units() != self.indicator.rows() {
            return Err(Error::ShapeMismatch(format!(
                "features have {} units, indicator has {}",
                features.units(),
                self.indicator.rows()
            )));
        }
        oracle_embedder(&self.indicator, self.sigma, self.dim, self.seed)
    }
}

/// Embeddings computed elsewhere (e.g. loaded from a tensor file).
#[derive(Debug, Clone)]
pub struct PrecomputedEmbedder(pub EmbeddingMatrix);

impl Embedder for PrecomputedEmbedder {
    fn embed(&self, features: &FeatureTensor) -> Result<EmbeddingMatrix> {
        if features.units() != self.0.rows() {
            return Err(Error::ShapeMismatch(format!(
                "features have {} units, embeddings have {} rows",
                features.units(),
                self.0.rows()
            )));
        }
        Ok(self.0.clone())
    }
}

pub fn save_embeddings(x: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    matrix_to_tensor(x.data()).save(path)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let t = Tensor::load(path)?;
    tensor_to_matrix(&t)
        .and_then(EmbeddingMatrix::new)
        .map_err(|e| e.at(path))
}

pub fn matrix_to_tensor(m: ArrayView2<'_, f64>) -> Tensor {
    Tensor {
        dims: vec![m.nrows(), m.ncols()],
        data: m.iter().map(|&v| v as f32).collect(),
    }
}

pub fn tensor_to_matrix(t: &Tensor) -> Result<Array2<f64>> {
    let (r, c) = t.matrix_dims()?;
    Ok(Array2::from_shape_vec((r, c), t.data.iter().map(|&v| f64::from(v)).collect())
        .expect("tensor length validated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Direct `‖XXᵀ − BBᵀ‖²_F` through the full `n x n` affinities.
    fn direct_objective(x: &Array2<f64>, b: &IndicatorMatrix) -> f64 {
        let bd = b.to_dense();
        let d = x.dot(&x.t()) - bd.dot(&bd.t());
        d.iter().map(|v| v * v).sum()
    }

    fn random_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal))
    }

    fn random_labels(n: usize, u: usize, seed: u64) -> IndicatorMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        IndicatorMatrix::new((0..n).map(|_| rng.random_range(0..u)).collect(), u).unwrap()
    }

    #[test]
    fn indicator_dominance_and_ties() {
        let a = array![[0.9, 0.5], [0.1, 0.0]];
        let b = array![[0.3, 0.5], [0.2, 0.0]];
        let ind = indicator_matrix(&[a.view(), b.view()]).unwrap();
        assert_eq!(ind.labels(), &[0, 0, 1, 0]);
        assert!(ind.to_dense().rows().into_iter().all(|r| r.sum() == 1.0));
        assert!(indicator_matrix(&[]).is_err());
        let c = array![[1.0]];
        assert!(matches!(indicator_matrix(&[a.view(), c.view()]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn objective_zero_when_embeddings_equal_indicator() {
        let b = random_labels(60, 3, 1);
        let x = b.to_dense();
        assert_eq!(dpcl_objective(x.view(), &b).unwrap(), 0.0);
        let g = dpcl_objective_grad(x.view(), &b).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn objective_hand_example() {
        let x = array![[1.0], [0.0]];
        let b = IndicatorMatrix::new(vec![0, 1], 2).unwrap();
        assert_eq!(dpcl_objective(x.view(), &b).unwrap(), 1.0);
    }

    #[test]
    fn expansion_matches_direct() {
        for seed in 0..20 {
            let n = 5 + (seed as usize * 37) % 196;
            let x = random_matrix(n, 7, seed);
            let b = random_labels(n, 2 + seed as usize % 3, seed + 100);
            let j = dpcl_objective(x.view(), &b).unwrap();
            let want = direct_objective(&x, &b);
            assert!((j - want).abs() <= 1e-9 * want, "n={n}: {j} vs {want}");
        }
    }

    #[test]
    fn gradient_cubic_scaling() {
        // ∇J(cX) = 4c³·XXᵀX − 4c·BBᵀX, with both terms from direct n x n products.
        let x = random_matrix(30, 4, 5);
        let b = random_labels(30, 2, 6);
        let bd = b.to_dense();
        let cubic = x.dot(&x.t()).dot(&x) * 4.0;
        let linear = bd.dot(&bd.t()).dot(&x) * -4.0;
        for c in [0.5, 1.0, 2.0, -1.5] {
            let g = dpcl_objective_grad((&x * c).view(), &b).unwrap();
            let want = &cubic * (c * c * c) + &linear * c;
            for (p, q) in g.iter().zip(want.iter()) {
                assert!((p - q).abs() <= 1e-9 * (1.0 + q.abs()));
            }
        }
    }

    #[test]
    fn row_mismatch_rejected() {
        let x = random_matrix(4, 2, 0);
        let b = random_labels(5, 2, 0);
        assert!(dpcl_objective(x.view(), &b).is_err());
        assert!(dpcl_objective_grad(x.view(), &b).is_err());
    }

    #[test]
    fn oracle_embedder_contract() {
        let b = random_labels(500, 2, 3);
        let clean = oracle_embedder(&b, 0.0, 40, 9).unwrap();
        let d = clean.data();
        let (i0, i1) = (
            b.labels().iter().position(|&l| l == 0).unwrap(),
            b.labels().iter().position(|&l| l == 1).unwrap(),
        );
        for (i, &l) in b.labels().iter().enumerate() {
            let rep = if l == 0 { i0 } else { i1 };
            assert_eq!(d.row(i), d.row(rep));
        }
        assert!(d.row(i0).dot(&d.row(i1)).abs() < 1e-6);
        // clean embeddings sit at the global minimum up to f32 rounding
        assert!(dpcl_objective(d, &b).unwrap() < 1e-3);

        let noisy = oracle_embedder(&b, 0.7, 40, 9).unwrap();
        for r in noisy.data().rows() {
            assert!((r.dot(&r).sqrt() - 1.0).abs() < 1e-6);
        }
        assert_eq!(noisy, oracle_embedder(&b, 0.7, 40, 9).unwrap());
        assert!(oracle_embedder(&b, 0.1, 1, 0).is_err());
    }

    #[test]
    fn embeddings_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.mbnt");
        let x = oracle_embedder(&random_labels(50, 3, 2), 0.3, 8, 1).unwrap();
        save_embeddings(&x, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let y = load_embeddings(&p).unwrap();
        assert_eq!(x, y);
        save_embeddings(&y, &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), bytes);
    }

    #[test]
    fn load_rejects_rank_three() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.mbnt");
        Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap().save(&p).unwrap();
        let err = load_embeddings(&p).unwrap_err().to_string();
        assert!(err.contains("rank 3"), "{err}");
    }
}
