//! Clenshaw–Curtis rules, their tensor products over ANOVA subcubes and
//! the density-weighted mean used to score ANOVA terms.

use faer::linalg::solvers::Solve;
use faer::{Col, Mat};
use serde::{Deserialize, Serialize};

use crate::anova::AnovaIndex;
use crate::error::{Error, Result};

/// A one-dimensional quadrature rule on `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule1D {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    interval: (f64, f64),
}

impl QuadratureRule1D {
    /// The `n`-point Clenshaw–Curtis rule on `[-1, 1]`.
    pub fn clenshaw_curtis(n: usize) -> Result<Self> {
        Ok(Self {
            nodes: cc_nodes(n)?,
            weights: cc_weights(n)?,
            interval: (-1.0, 1.0),
        })
    }

    /// The `n`-point Clenshaw–Curtis rule mapped onto `[a, b]`.
    pub fn clenshaw_curtis_on(n: usize, a: f64, b: f64) -> Result<Self> {
        map_rule(&Self::clenshaw_curtis(n)?, a, b)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to `f`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Clenshaw–Curtis nodes on `[-1, 1]`, ascending.
///
/// The nodes are symmetrized so that `x_k == -x_{n-1-k}` bitwise and the
/// middle node of an odd rule is exactly zero; mapped rules then hit the
/// interval midpoint exactly, which lets the anchor point share cache
/// entries with quadrature points.
pub fn cc_nodes(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("Clenshaw-Curtis rule needs at least one node"));
    }
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let denom = (n - 1) as f64;
    let mut nodes: Vec<f64> = (0..n)
        .map(|k| -(k as f64 * std::f64::consts::PI / denom).cos())
        .collect();
    for k in 0..n / 2 {
        nodes[n - 1 - k] = -nodes[k];
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;
    Ok(nodes)
}

/// Clenshaw–Curtis weights on `[-1, 1]`.
///
/// Solves the exactness conditions `sum_k w_k T_j(x_k) = int T_j` for the
/// Chebyshev polynomials `T_0..T_{n-1}`.
pub fn cc_weights(n: usize) -> Result<Vec<f64>> {
    let nodes = cc_nodes(n)?;
    if n == 1 {
        return Ok(vec![2.0]);
    }
    let system = Mat::<f64>::from_fn(n, n, |j, k| {
        let theta = nodes[k].clamp(-1.0, 1.0).acos();
        (j as f64 * theta).cos()
    });
    let rhs = Col::<f64>::from_fn(n, |j| {
        if j % 2 == 1 {
            0.0
        } else {
            let jf = j as f64;
            2.0 / (1.0 - jf * jf)
        }
    });
    let sol = system.partial_piv_lu().solve(&rhs);
    let mut weights: Vec<f64> = (0..n).map(|k| sol[k]).collect();
    for k in 0..n / 2 {
        let avg = 0.5 * (weights[k] + weights[n - 1 - k]);
        weights[k] = avg;
        weights[n - 1 - k] = avg;
    }
    Ok(weights)
}

/// Affinely maps a rule on `[-1, 1]` onto `[a, b]`.
pub fn map_rule(rule: &QuadratureRule1D, a: f64, b: f64) -> Result<QuadratureRule1D> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid(format!("target interval [{a}, {b}] is empty")));
    }
    let (ra, rb) = rule.interval;
    if ra != -1.0 || rb != 1.0 {
        return Err(Error::invalid("map_rule expects a rule on [-1, 1]"));
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    Ok(QuadratureRule1D {
        nodes: rule.nodes.iter().map(|&x| mid + half * x).collect(),
        weights: rule.weights.iter().map(|&w| w * half).collect(),
        interval: (a, b),
    })
}

/// Full tensor-product rule over the coordinates of one ANOVA index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorQuadrature {
    pub index: AnovaIndex,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl TensorQuadrature {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Builds the tensor grid for `t` from one rule per coordinate of `t`.
///
/// Points are ordered lexicographically over the per-dimension node
/// indices with the last coordinate varying fastest.
pub fn tensor_grid(t: &AnovaIndex, per_dim_rules: &[QuadratureRule1D]) -> Result<TensorQuadrature> {
    if t.is_empty() {
        return Err(Error::invalid("the empty ANOVA index has no quadrature grid"));
    }
    Error::check_len(t.order(), per_dim_rules.len())?;
    if per_dim_rules.iter().any(|r| r.is_empty()) {
        return Err(Error::invalid("empty 1-D rule"));
    }
    let total: usize = per_dim_rules.iter().map(|r| r.len()).product();
    let mut points = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut digits = vec![0usize; per_dim_rules.len()];
    for _ in 0..total {
        let mut w = 1.0;
        let mut p = Vec::with_capacity(digits.len());
        for (rule, &k) in per_dim_rules.iter().zip(&digits) {
            p.push(rule.nodes[k]);
            w *= rule.weights[k];
        }
        points.push(p);
        weights.push(w);
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < per_dim_rules[pos].len() {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(TensorQuadrature {
        index: t.clone(),
        points,
        weights,
    })
}

/// `sum_k values[k] * density[k] * weights[k]`, componentwise.
pub fn weighted_mean(values: &[Vec<f64>], grid: &TensorQuadrature, density: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(grid.len(), values.len())?;
    Error::check_len(grid.len(), density.len())?;
    let d = values.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for ((v, &w), &p) in values.iter().zip(&grid.weights).zip(density) {
        Error::check_len(d, v.len())?;
        let scale = w * p;
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x * scale;
        }
    }
    Ok(mean)
}
