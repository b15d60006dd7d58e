//! Scalar Gaussian-process regression with a squared-exponential kernel.
//!
//! `k(x, x') = rho1^2 exp(-sum_i (x_i - x'_i)^2 / (2 l_i)) + rho2^2 delta`,
//! where `l_i` are *squared* length scales. Hyperparameters are fitted by
//! minimizing the negative log marginal likelihood in log space with a
//! box-constrained L-BFGS and random restarts.

mod optimize;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

use optimize::{minimize, Bounds, Options};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// `ln l_i`, one per input dimension.
    pub log_sq_lengths: Vec<f64>,
    /// `ln rho1^2`.
    pub log_signal_var: f64,
    /// `ln rho2^2`; `None` means no noise term at all.
    pub log_jitter_var: Option<f64>,
}

impl Hyperparameters {
    /// Builds from natural-scale values. `jitter_var == 0` disables the
    /// noise term.
    pub fn new(sq_lengths: &[f64], signal_var: f64, jitter_var: f64) -> Result<Self> {
        if sq_lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("squared length scales must be positive"));
        }
        if !(signal_var > 0.0 && signal_var.is_finite()) {
            return Err(Error::invalid("signal variance must be positive"));
        }
        if !(jitter_var >= 0.0 && jitter_var.is_finite()) {
            return Err(Error::invalid("jitter variance must be non-negative"));
        }
        Ok(Self {
            log_sq_lengths: sq_lengths.iter().map(|l| l.ln()).collect(),
            log_signal_var: signal_var.ln(),
            log_jitter_var: (jitter_var > 0.0).then(|| jitter_var.ln()),
        })
    }

    pub fn dim(&self) -> usize {
        self.log_sq_lengths.len()
    }

    pub fn sq_lengths(&self) -> Vec<f64> {
        self.log_sq_lengths.iter().map(|v| v.exp()).collect()
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    pub fn jitter_var(&self) -> f64 {
        self.log_jitter_var.map_or(0.0, f64::exp)
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_sq_lengths.clone();
        v.push(self.log_signal_var);
        v.extend(self.log_jitter_var);
        v
    }

    fn from_vec(theta: &[f64], dim: usize, with_jitter: bool) -> Self {
        Self {
            log_sq_lengths: theta[..dim].to_vec(),
            log_signal_var: theta[dim],
            log_jitter_var: with_jitter.then(|| theta[dim + 1]),
        }
    }
}

fn se_part(x: &[f64], y: &[f64], inv_l: &[f64], signal: f64) -> f64 {
    let r2: f64 = x
        .iter()
        .zip(y)
        .zip(inv_l)
        .map(|((a, b), il)| (a - b) * (a - b) * il)
        .sum();
    signal * (-0.5 * r2).exp()
}

/// Kernel value; the noise term fires on exact coordinate equality.
pub fn kernel(x: &[f64], y: &[f64], hyper: &Hyperparameters) -> Result<f64> {
    Error::check_len(hyper.dim(), x.len())?;
    Error::check_len(hyper.dim(), y.len())?;
    let inv_l: Vec<f64> = hyper.log_sq_lengths.iter().map(|v| (-v).exp()).collect();
    let mut k = se_part(x, y, &inv_l, hyper.signal_var());
    if x == y {
        k += hyper.jitter_var();
    }
    Ok(k)
}

fn check_data(inputs: &[Vec<f64>], targets: &[f64]) -> Result<usize> {
    if inputs.is_empty() {
        return Err(Error::invalid("GP needs at least one training point"));
    }
    Error::check_len(inputs.len(), targets.len())?;
    let dim = inputs[0].len();
    for x in inputs {
        Error::check_len(dim, x.len())?;
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::invalid("GP training data must be finite"));
    }
    Ok(dim)
}

// Signal part of the training covariance. The noise term is indexed by
// position, so duplicate rows each get their own diagonal entry.
fn signal_matrix(inputs: &[Vec<f64>], hyper: &Hyperparameters) -> Mat<f64> {
    let n = inputs.len();
    let inv_l: Vec<f64> = hyper.log_sq_lengths.iter().map(|v| (-v).exp()).collect();
    let signal = hyper.signal_var();
    let mut k = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = signal;
        for j in 0..i {
            let v = se_part(&inputs[i], &inputs[j], &inv_l, signal);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

struct Factored {
    signal: Mat<f64>,
    llt: faer::linalg::solvers::Llt<f64>,
    weights: Vec<f64>,
    nlml: f64,
}

fn factor(inputs: &[Vec<f64>], targets: &[f64], hyper: &Hyperparameters) -> Result<Factored> {
    let n = inputs.len();
    let signal = signal_matrix(inputs, hyper);
    let mut c = signal.clone();
    let jitter = hyper.jitter_var();
    for i in 0..n {
        c[(i, i)] += jitter;
    }
    let llt = c.llt(Side::Lower).map_err(|_| Error::IllConditionedKernel)?;
    let l = llt.L();
    let mut logdet = 0.0;
    // Pivots at rounding level mean the matrix is numerically singular.
    let pivot_floor = 4.0 * n as f64 * f64::EPSILON * (hyper.signal_var() + jitter);
    for i in 0..n {
        let d = l[(i, i)];
        if !(d * d > pivot_floor && d.is_finite()) {
            return Err(Error::IllConditionedKernel);
        }
        logdet += 2.0 * d.ln();
    }
    let y = Mat::<f64>::from_fn(n, 1, |i, _| targets[i]);
    let w = llt.solve(&y);
    let weights: Vec<f64> = (0..n).map(|i| w[(i, 0)]).collect();
    let fit: f64 = weights.iter().zip(targets).map(|(a, b)| a * b).sum();
    let nlml = 0.5 * logdet + 0.5 * fit + 0.5 * n as f64 * LN_2PI;
    if !nlml.is_finite() {
        return Err(Error::IllConditionedKernel);
    }
    Ok(Factored {
        signal,
        llt,
        weights,
        nlml,
    })
}

/// Negative log marginal likelihood of `targets` under a zero-mean GP.
pub fn nlml(inputs: &[Vec<f64>], targets: &[f64], hyper: &Hyperparameters) -> Result<f64> {
    let dim = check_data(inputs, targets)?;
    Error::check_len(hyper.dim(), dim)?;
    Ok(factor(inputs, targets, hyper)?.nlml)
}

/// NLML and its gradient with respect to the log hyperparameters, in the
/// order `ln l_1..ln l_M, ln rho1^2[, ln rho2^2]`.
pub fn nlml_gradient(
    inputs: &[Vec<f64>],
    targets: &[f64],
    hyper: &Hyperparameters,
) -> Result<(f64, Vec<f64>)> {
    let dim = check_data(inputs, targets)?;
    Error::check_len(hyper.dim(), dim)?;
    let f = factor(inputs, targets, hyper)?;
    let n = inputs.len();
    // W = C^-1 - w w^T; dNLML/dtheta = 1/2 tr(W dC/dtheta).
    let mut wm = f.llt.inverse();
    for i in 0..n {
        for j in 0..n {
            wm[(i, j)] -= f.weights[i] * f.weights[j];
        }
    }
    let inv_l: Vec<f64> = hyper.log_sq_lengths.iter().map(|v| (-v).exp()).collect();
    let mut grad = vec![0.0; dim + 1 + usize::from(hyper.log_jitter_var.is_some())];
    let mut g_signal = 0.0;
    let mut trace = 0.0;
    for i in 0..n {
        g_signal += wm[(i, i)] * f.signal[(i, i)];
        trace += wm[(i, i)];
        for j in 0..i {
            // Off-diagonal pairs count twice.
            let a = 2.0 * wm[(i, j)] * f.signal[(i, j)];
            g_signal += a;
            for k in 0..dim {
                let d = inputs[i][k] - inputs[j][k];
                grad[k] += a * 0.5 * d * d * inv_l[k];
            }
        }
    }
    for g in grad.iter_mut().take(dim) {
        *g *= 0.5;
    }
    grad[dim] = 0.5 * g_signal;
    if hyper.log_jitter_var.is_some() {
        grad[dim + 1] = 0.5 * hyper.jitter_var() * trace;
    }
    Ok((f.nlml, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    /// Random restarts of the optimizer when there is no warm start.
    pub restarts: usize,
    /// Random restarts added to a warm start.
    pub warm_restarts: usize,
    pub max_iters: usize,
    /// Lower bound of the noise variance, relative to the target variance.
    /// Zero fixes the noise term at exactly zero.
    pub jitter_floor: f64,
    /// Gradient tolerance (max-norm of the projected gradient).
    pub gtol: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            warm_restarts: 1,
            max_iters: 200,
            jitter_floor: 1e-10,
            gtol: 1e-6,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("gp.restarts must be at least 1".into()));
        }
        if !(self.jitter_floor >= 0.0 && self.jitter_floor < 1.0) {
            return Err(Error::Config("gp.jitter_floor must lie in [0, 1)".into()));
        }
        if !(self.gtol > 0.0) {
            return Err(Error::Config("gp.gtol must be positive".into()));
        }
        Ok(())
    }
}

/// A trained GP: training data, hyperparameters and the cached factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "GpRecord", try_from = "GpRecord")]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    hyper: Hyperparameters,
    // Row-major dense lower Cholesky factor of the training covariance.
    chol: Vec<f64>,
    weights: Vec<f64>,
    nlml: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GpRecord {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    hyper: Hyperparameters,
}

impl From<GpModel> for GpRecord {
    fn from(m: GpModel) -> Self {
        Self {
            inputs: m.inputs,
            targets: m.targets,
            hyper: m.hyper,
        }
    }
}

impl TryFrom<GpRecord> for GpModel {
    type Error = Error;

    fn try_from(r: GpRecord) -> Result<Self> {
        GpModel::from_parts(r.inputs, r.targets, r.hyper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl GpModel {
    /// Conditions a GP with fixed hyperparameters on the data.
    pub fn from_parts(inputs: Vec<Vec<f64>>, targets: Vec<f64>, hyper: Hyperparameters) -> Result<Self> {
        let dim = check_data(&inputs, &targets)?;
        Error::check_len(hyper.dim(), dim)?;
        let f = factor(&inputs, &targets, &hyper)?;
        let n = inputs.len();
        let l = f.llt.L();
        let mut chol = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                chol[i * n + j] = l[(i, j)];
            }
        }
        Ok(Self {
            inputs,
            targets,
            hyper,
            chol,
            weights: f.weights,
            nlml: f.nlml,
        })
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn nlml(&self) -> f64 {
        self.nlml
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.hyper.dim()
    }

    fn cross(&self, x: &[f64]) -> Vec<f64> {
        let inv_l: Vec<f64> = self.hyper.log_sq_lengths.iter().map(|v| (-v).exp()).collect();
        let s = self.hyper.signal_var();
        self.inputs.iter().map(|xi| se_part(x, xi, &inv_l, s)).collect()
    }

    /// Predictive mean `c*^T C^-1 y`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        Error::check_len(self.input_dim(), x.len())?;
        Ok(self.cross(x).iter().zip(&self.weights).map(|(a, b)| a * b).sum())
    }

    /// Predictive mean and variance `rho1^2 + rho2^2 - c*^T C^-1 c*`,
    /// clamped at zero.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Error::check_len(self.input_dim(), x.len())?;
        let c = self.cross(x);
        let mean = c.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        let n = self.len();
        let mut v = c;
        for i in 0..n {
            let row = &self.chol[i * n..i * n + i];
            let s: f64 = row.iter().zip(&v[..i]).map(|(a, b)| a * b).sum();
            v[i] = (v[i] - s) / self.chol[i * n + i];
        }
        let q: f64 = v.iter().map(|a| a * a).sum();
        let variance = (self.hyper.signal_var() + self.hyper.jitter_var() - q).max(0.0);
        Ok(Prediction { mean, variance })
    }
}

fn variance_scale(targets: &[f64]) -> f64 {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        return var;
    }
    let ms = targets.iter().map(|t| t * t).sum::<f64>() / n;
    if ms > 0.0 {
        ms
    } else {
        1.0
    }
}

fn spans(inputs: &[Vec<f64>], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let (lo, hi) = inputs
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[k]), hi.max(x[k])));
            let s = hi - lo;
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect()
}

/// Fits hyperparameters by multi-start NLML minimization and conditions
/// the GP on the data. A warm start (same input dimension) replaces all
/// but `warm_restarts` of the random starts.
pub fn train_gp(
    inputs: &[Vec<f64>],
    targets: &[f64],
    config: &GpConfig,
    seed: u64,
    warm: Option<&Hyperparameters>,
) -> Result<GpModel> {
    config.validate()?;
    let dim = check_data(inputs, targets)?;
    let var = variance_scale(targets);
    let span = spans(inputs, dim);
    let with_jitter = config.jitter_floor > 0.0;
    let floor = config.jitter_floor * var;

    let mut lo = Vec::with_capacity(dim + 2);
    let mut hi = Vec::with_capacity(dim + 2);
    for s in &span {
        let s2 = s * s;
        lo.push((1e-4 * s2).ln());
        hi.push((1e4 * s2).ln());
    }
    lo.push((1e-6 * var).ln());
    hi.push((1e6 * var).ln());
    if with_jitter {
        lo.push(floor.ln());
        hi.push(var.ln().max(floor.ln()));
    }
    let bounds = Bounds { lo, hi };

    let mut rng = seed::rng(seed);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let n_random = match warm {
        Some(h) if h.dim() == dim => {
            let mut h = h.clone();
            h.log_jitter_var = with_jitter.then(|| h.log_jitter_var.unwrap_or(floor.ln()));
            starts.push(h.to_vec());
            config.warm_restarts
        }
        _ => config.restarts,
    };
    for _ in 0..n_random {
        let mut theta: Vec<f64> = span
            .iter()
            .map(|s| {
                let s2 = s * s;
                rng.random_range((0.01 * s2).ln()..=(10.0 * s2).ln())
            })
            .collect();
        theta.push(var.ln());
        if with_jitter {
            theta.push(floor.ln());
        }
        starts.push(theta);
    }

    let opts = Options {
        max_iters: config.max_iters,
        gtol: config.gtol,
        ftol: 1e-12,
        memory: 10,
    };
    let objective = |theta: &[f64]| {
        let h = Hyperparameters::from_vec(theta, dim, with_jitter);
        nlml_gradient(inputs, targets, &h).ok()
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (i, start) in starts.iter().enumerate() {
        match minimize(objective, start, &bounds, &opts) {
            Some(m) => {
                log::trace!(
                    "gp restart {i}: nlml {:.6e} -> {:.6e} in {} iterations",
                    m.initial_value,
                    m.value,
                    m.iterations
                );
                if best.as_ref().is_none_or(|(_, v)| m.value < *v) {
                    best = Some((m.x, m.value));
                }
            }
            None => log::trace!("gp restart {i}: kernel not positive definite at start"),
        }
    }
    let (theta, _) = best.ok_or_else(|| {
        Error::TrainingFailed(format!(
            "kernel matrix not positive definite at every one of {} starts (N = {})",
            starts.len(),
            inputs.len()
        ))
    })?;
    let hyper = Hyperparameters::from_vec(&theta, dim, with_jitter);
    GpModel::from_parts(inputs.to_vec(), targets.to_vec(), hyper)
}
