//! Small dense eigensolvers used by the PCA output layer.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as the columns of the second value.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[[p, q]] * m[[p, q]])
            .sum();
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (values, vectors)
}

/// A symmetric linear operator `y = A x` on `R^dim`.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Leading eigenpairs of a symmetric positive semi-definite operator.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Lanczos steps taken.
    pub steps: usize,
}

/// Lanczos iteration with full reorthogonalization.
///
/// On breakdown (an invariant Krylov subspace) the iteration restarts from
/// a fresh random vector orthogonal to the current basis. Converged when
/// every requested Ritz pair has residual at most `tol` times the largest
/// Ritz value. Eigenvalues of exact multiplicity may be under-counted
/// unless a breakdown exposes them.
pub fn top_eigenpairs(op: &dyn SymmetricOperator, count: usize, tol: f64, seed: u64) -> Eigenpairs {
    let dim = op.dim();
    let count = count.min(dim);
    let max_steps = dim.min(count + 400);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut q = random_unit(&mut rng, dim, &basis).expect("dim > 0");
    let mut w = vec![0.0; dim];

    loop {
        op.apply(&q, &mut w);
        let alpha = dot(&q, &w);
        axpy(-alpha, &q, &mut w);
        if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
            axpy(-b, prev, &mut w);
        }
        basis.push(q.clone());
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                axpy(-c, b, &mut w);
            }
        }
        alphas.push(alpha);
        let beta = norm(&w);
        let m = basis.len();
        let scale = alphas.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
        let breakdown = beta <= 1e-12 * scale;

        let finished = m >= max_steps;
        if m >= count && (breakdown || finished || m % 5 == 0) {
            let (theta, s) = tridiagonal_eigen(&alphas, &betas);
            let top = theta[0].abs().max(f64::MIN_POSITIVE);
            let last_beta = if breakdown { 0.0 } else { beta };
            let converged = (0..count).all(|i| (last_beta * s[[m - 1, i]]).abs() <= tol * top);
            if converged || finished {
                let vectors = ritz_vectors(&basis, &s, count);
                return Eigenpairs {
                    values: theta[..count].to_vec(),
                    vectors,
                    steps: m,
                };
            }
        }

        if breakdown {
            match random_unit(&mut rng, dim, &basis) {
                Some(fresh) => {
                    betas.push(0.0);
                    q = fresh;
                }
                None => {
                    let (theta, s) = tridiagonal_eigen(&alphas, &betas);
                    return Eigenpairs {
                        values: theta[..count].to_vec(),
                        vectors: ritz_vectors(&basis, &s, count),
                        steps: m,
                    };
                }
            }
        } else {
            betas.push(beta);
            q = w.iter().map(|x| x / beta).collect();
        }
    }
}

fn tridiagonal_eigen(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, Array2<f64>) {
    let m = alphas.len();
    let mut t = Array2::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = alphas[i];
        if i + 1 < m {
            t[[i, i + 1]] = betas[i];
            t[[i + 1, i]] = betas[i];
        }
    }
    symmetric_eigen(&t)
}

fn ritz_vectors(basis: &[Vec<f64>], s: &Array2<f64>, count: usize) -> Vec<Vec<f64>> {
    let dim = basis[0].len();
    let mut out: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            let mut v = vec![0.0; dim];
            for (j, b) in basis.iter().enumerate() {
                axpy(s[[j, i]], b, &mut v);
            }
            v
        })
        .collect();
    orthonormalize(&mut out);
    out
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize, against: &[Vec<f64>]) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for b in against {
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return Some(v);
        }
    }
    None
}

/// Modified Gram-Schmidt, applied twice. Columns that collapse are left as
/// zero vectors.
pub fn orthonormalize(vectors: &mut [Vec<f64>]) {
    for i in 0..vectors.len() {
        for _ in 0..2 {
            for j in 0..i {
                let (head, tail) = vectors.split_at_mut(i);
                let c = dot(&head[j], &tail[0]);
                axpy(-c, &head[j], &mut tail[0]);
            }
        }
        let n = norm(&vectors[i]);
        if n > 0.0 {
            vectors[i].iter_mut().for_each(|x| *x /= n);
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
