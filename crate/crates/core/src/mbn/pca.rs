use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::layer::SparseCodes;
use crate::linalg::{axpy, dot, symmetric_eigen, top_eigenpairs, SymmetricOperator};
use crate::{Error, Result};

/// Up to this input dimension the covariance is formed densely and fully
/// diagonalized; above it the leading eigenpairs come from Lanczos.
const DENSE_LIMIT: usize = 64;
const ROW_CHUNK: usize = 1024;
const LANCZOS_TOL: f64 = 1e-11;
const LANCZOS_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Mean-centering plus an orthonormal projection onto the leading principal
/// directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    mean: Vec<f64>,
    /// `output_dim x dim`, orthonormal rows.
    components: Array2<f64>,
    explained_variance: Vec<f64>,
    rank_deficient: bool,
    /// `components · mean`, subtracted after projecting raw rows.
    offsets: Vec<f64>,
}

impl Pca {
    pub(crate) fn from_parts(
        mean: Vec<f64>,
        components: Array2<f64>,
        explained_variance: Vec<f64>,
        rank_deficient: bool,
    ) -> Result<Self> {
        if components.ncols() != mean.len() || components.nrows() != explained_variance.len() {
            return Err(Error::ShapeMismatch(format!(
                "PCA block: mean {}, components {:?}, variances {}",
                mean.len(),
                components.dim(),
                explained_variance.len()
            )));
        }
        let offsets = components
            .rows()
            .into_iter()
            .map(|r| dot(r.as_slice().expect("standard layout"), &mean))
            .collect();
        Ok(Self {
            mean,
            components: components.as_standard_layout().into_owned(),
            explained_variance,
            rank_deficient,
            offsets,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> ArrayView2<'_, f64> {
        self.components.view()
    }

    /// Variance of the training data along each component (`n − 1` normalization).
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// True when the data had fewer than `output_dim` directions of nonzero
    /// variance; the surplus components are orthonormal padding.
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn project_dense(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(self
            .components
            .rows()
            .into_iter()
            .zip(&self.offsets)
            .map(|(r, o)| dot(r.as_slice().expect("standard layout"), x) - o)
            .collect())
    }

    pub fn project_code(&self, active: &[u32]) -> Vec<f64> {
        self.components
            .rows()
            .into_iter()
            .zip(&self.offsets)
            .map(|(r, o)| active.iter().map(|&a| r[a as usize]).sum::<f64>() - o)
            .collect()
    }

    /// Maps projected coordinates back to input space.
    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (r, &c) in self.components.rows().into_iter().zip(y) {
            axpy(c, r.as_slice().expect("standard layout"), &mut out);
        }
        out
    }
}

trait RowSource: Sync {
    fn rows(&self) -> usize;
    fn dim(&self) -> usize;
    fn row_dot(&self, i: usize, v: &[f64]) -> f64;
    fn add_row(&self, i: usize, scale: f64, out: &mut [f64]);
}

impl RowSource for ArrayView2<'_, f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }
    fn dim(&self) -> usize {
        self.ncols()
    }
    fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()
    }
    fn add_row(&self, i: usize, scale: f64, out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(self.row(i)) {
            *o += scale * x;
        }
    }
}

impl RowSource for SparseCodes {
    fn rows(&self) -> usize {
        SparseCodes::rows(self)
    }
    fn dim(&self) -> usize {
        SparseCodes::dim(self)
    }
    fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).iter().map(|&a| v[a as usize]).sum()
    }
    fn add_row(&self, i: usize, scale: f64, out: &mut [f64]) {
        for &a in self.row(i) {
            out[a as usize] += scale;
        }
    }
}

/// Sums per-chunk partial vectors in chunk order, independent of thread count.
fn chunked_sum<S: RowSource>(src: &S, len: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Vec<f64> {
    let n = src.rows();
    let partials: Vec<Vec<f64>> = (0..n.div_ceil(ROW_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut local = vec![0.0; len];
            for i in c * ROW_CHUNK..((c + 1) * ROW_CHUNK).min(n) {
                f(i, &mut local);
            }
            local
        })
        .collect();
    let mut total = vec![0.0; len];
    for p in &partials {
        axpy(1.0, p, &mut total);
    }
    total
}

struct Covariance<'a, S: RowSource> {
    src: &'a S,
    mean: &'a [f64],
}

impl<S: RowSource> SymmetricOperator for Covariance<'_, S> {
    fn dim(&self) -> usize {
        self.src.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let d = self.src.dim();
        let mx = dot(self.mean, x);
        // last slot accumulates the sum of centered projections
        let acc = chunked_sum(self.src, d + 1, |i, local| {
            let s = self.src.row_dot(i, x) - mx;
            self.src.add_row(i, s, &mut local[..d]);
            local[d] += s;
        });
        let denom = (self.src.rows() - 1) as f64;
        for j in 0..d {
            y[j] = (acc[j] - self.mean[j] * acc[d]) / denom;
        }
    }
}

fn fit<S: RowSource>(src: &S, output_dim: usize) -> Result<Pca> {
    let (n, d) = (src.rows(), src.dim());
    if output_dim == 0 {
        return Err(Error::config("mbn.output_dim", "must be >= 1"));
    }
    if n <= output_dim {
        return Err(Error::InsufficientData(format!(
            "PCA needs more than {output_dim} samples, got {n}"
        )));
    }
    if output_dim > d {
        return Err(Error::InvalidInput(format!(
            "cannot extract {output_dim} components from {d}-dimensional data"
        )));
    }
    let mut mean = chunked_sum(src, d, |i, local| src.add_row(i, 1.0, local));
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let cov = Covariance { src, mean: &mean };
    let (mut values, mut vectors): (Vec<f64>, Vec<Vec<f64>>) = if d <= DENSE_LIMIT {
        let mut c = Array2::zeros((d, d));
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            cov.apply(&e, &mut col);
            c.column_mut(j).assign(&ndarray::ArrayView1::from(&col));
        }
        // symmetrize rounding noise
        let c = (&c + &c.t()) * 0.5;
        let (vals, vecs) = symmetric_eigen(&c);
        (
            vals[..output_dim].to_vec(),
            (0..output_dim).map(|i| vecs.column(i).to_vec()).collect(),
        )
    } else {
        let pairs = top_eigenpairs(&cov, output_dim, LANCZOS_TOL, LANCZOS_SEED);
        (pairs.values, pairs.vectors)
    };

    let top = values[0].max(0.0);
    let mut rank_deficient = false;
    for v in values.iter_mut() {
        if *v <= 1e-12 * top || top == 0.0 {
            *v = 0.0;
            rank_deficient = true;
        }
    }
    for vec in vectors.iter_mut() {
        let mut pivot = 0;
        for (i, x) in vec.iter().enumerate() {
            if x.abs() > vec[pivot].abs() {
                pivot = i;
            }
        }
        if vec[pivot] < 0.0 {
            vec.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let components = Array2::from_shape_fn((output_dim, d), |(i, j)| vectors[i][j]);
    Pca::from_parts(mean, components, values, rank_deficient)
}

/// PCA of dense rows.
pub fn pca_fit(data: ArrayView2<'_, f64>, output_dim: usize) -> Result<Pca> {
    fit(&data, output_dim)
}

/// PCA of sparse binary codes without densifying them.
pub fn pca_fit_codes(codes: &SparseCodes, output_dim: usize) -> Result<Pca> {
    fit(codes, output_dim)
}
