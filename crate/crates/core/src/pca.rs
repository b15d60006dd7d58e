//! Snapshot PCA of one ANOVA term's outputs.
//!
//! Outputs are centred by the sample mean; the covariance
//! `(1/N) sum y y^T` is diagonalized either directly (d x d) or through
//! the N x N Gram matrix when `d > N`. The leading `R` modes are kept,
//! with `R` the smallest count whose eigenvalue share exceeds
//! `1 - tol_pca`.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const RANK_GUARD: f64 = 1e-12;

/// Total variance below this fraction of the squared mean norm is
/// rounding noise: the data are treated as constant.
pub const CONSTANT_GUARD: f64 = 1e-26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal principal directions, one `d`-vector per mode.
    pub components: Vec<Vec<f64>>,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Sum of all eigenvalues (the trace of the covariance).
    pub total_variance: f64,
}

impl PcaModel {
    /// Number of retained modes `R`.
    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn output_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn retained_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn discarded_variance(&self) -> f64 {
        (self.total_variance - self.retained_variance()).max(0.0)
    }

    /// A model with no modes: reconstructs `mean` for every input.
    pub fn constant(mean: Vec<f64>) -> Self {
        Self {
            mean,
            components: Vec::new(),
            eigenvalues: Vec::new(),
            total_variance: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcaMethod {
    /// Gram matrix when `d > N`, covariance otherwise.
    #[default]
    Auto,
    Gram,
    Covariance,
}

/// A fitted model plus the per-mode training targets
/// `targets[r][j] = v_r^T (y_j - mean)`.
#[derive(Debug, Clone)]
pub struct PcaFit {
    pub model: PcaModel,
    pub targets: Vec<Vec<f64>>,
}

pub fn fit_pca(dataset: &[Vec<f64>], tol_pca: f64) -> Result<PcaFit> {
    fit_pca_with(dataset, tol_pca, PcaMethod::Auto)
}

pub fn fit_pca_with(dataset: &[Vec<f64>], tol_pca: f64, method: PcaMethod) -> Result<PcaFit> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::invalid("PCA needs at least one sample"));
    }
    if !(tol_pca > 0.0 && tol_pca < 1.0) {
        return Err(Error::invalid(format!("tol_pca = {tol_pca} must lie in (0, 1)")));
    }
    let d = dataset[0].len();
    if d == 0 {
        return Err(Error::invalid("PCA needs non-empty output vectors"));
    }
    for y in dataset {
        Error::check_len(d, y.len())?;
    }

    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for y in dataset {
        for (m, v) in mean.iter_mut().zip(y) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let centered = Mat::<f64>::from_fn(n, d, |j, k| dataset[j][k] - mean[k]);
    let total_variance: f64 = (0..n)
        .map(|j| (0..d).map(|k| centered[(j, k)] * centered[(j, k)]).sum::<f64>())
        .sum::<f64>()
        / nf;

    let mean_sq: f64 = mean.iter().map(|m| m * m).sum();
    if !(total_variance > CONSTANT_GUARD * mean_sq) || total_variance == 0.0 {
        let fit = PcaFit {
            targets: Vec::new(),
            model: PcaModel::constant(mean),
        };
        return Ok(fit);
    }

    let use_gram = match method {
        PcaMethod::Auto => d > n,
        PcaMethod::Gram => true,
        PcaMethod::Covariance => false,
    };
    let (values, vectors) = if use_gram {
        gram_eigenpairs(&centered)?
    } else {
        covariance_eigenpairs(&centered)?
    };

    let lead = values.first().copied().unwrap_or(0.0);
    let positive: Vec<f64> = values
        .iter()
        .map(|&l| if l > RANK_GUARD * lead { l } else { 0.0 })
        .collect();
    let threshold = 1.0 - tol_pca;
    let n_positive = positive.iter().filter(|&&l| l > 0.0).count();
    let mut rank = n_positive;
    let mut cum = 0.0;
    for (r, &l) in positive.iter().enumerate().take(n_positive) {
        cum += l;
        if cum / total_variance > threshold {
            rank = r + 1;
            break;
        }
    }

    let mut components = Vec::with_capacity(rank);
    for v in vectors.into_iter().take(rank) {
        components.push(fix_sign(v));
    }
    let eigenvalues = positive[..rank].to_vec();
    let targets = components
        .iter()
        .map(|v| {
            (0..n)
                .map(|j| (0..d).map(|k| v[k] * centered[(j, k)]).sum())
                .collect()
        })
        .collect();

    Ok(PcaFit {
        model: PcaModel {
            mean,
            components,
            eigenvalues,
            total_variance,
        },
        targets,
    })
}

// Eigenpairs of (1/N) Y^T Y via the N x N Gram matrix (1/N) Y Y^T:
// v = Y^T a / sqrt(N lambda).
fn gram_eigenpairs(centered: &Mat<f64>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = centered.nrows();
    let d = centered.ncols();
    let nf = n as f64;
    let mut gram = centered * centered.transpose();
    for j in 0..n {
        for k in 0..n {
            gram[(j, k)] /= nf;
        }
    }
    let (values, a) = sorted_eigen(&gram)?;
    let lead = values.first().copied().unwrap_or(0.0);
    let mut vectors = Vec::with_capacity(values.len());
    for (r, &l) in values.iter().enumerate() {
        if !(l > RANK_GUARD * lead) {
            vectors.push(vec![0.0; d]);
            continue;
        }
        let s = 1.0 / (nf * l).sqrt();
        let v: Vec<f64> = (0..d)
            .map(|k| s * (0..n).map(|j| centered[(j, k)] * a[r][j]).sum::<f64>())
            .collect();
        vectors.push(v);
    }
    Ok((values, vectors))
}

fn covariance_eigenpairs(centered: &Mat<f64>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = centered.nrows();
    let d = centered.ncols();
    let nf = n as f64;
    let mut cov = centered.transpose() * centered;
    for j in 0..d {
        for k in 0..d {
            cov[(j, k)] /= nf;
        }
    }
    sorted_eigen(&cov)
}

// Eigenvalues descending with their unit eigenvectors.
fn sorted_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Solver(format!("symmetric eigensolver failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let values = order.iter().map(|&i| s[i].max(0.0)).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| u[(k, i)]).collect())
        .collect();
    Ok((values, vectors))
}

// Largest-magnitude entry made positive (first one on ties).
fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0usize;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = k;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Principal-component coefficients `V^T (y - mean)`.
pub fn project(model: &PcaModel, y: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(model.output_dim(), y.len())?;
    Ok(model
        .components
        .iter()
        .map(|v| v.iter().zip(y).zip(&model.mean).map(|((a, b), m)| a * (b - m)).sum())
        .collect())
}

/// `V alpha + mean`.
pub fn reconstruct(model: &PcaModel, alpha: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(model.rank(), alpha.len())?;
    let mut out = model.mean.clone();
    for (v, &a) in model.components.iter().zip(alpha) {
        for (o, x) in out.iter_mut().zip(v) {
            *o += a * x;
        }
    }
    Ok(out)
}
