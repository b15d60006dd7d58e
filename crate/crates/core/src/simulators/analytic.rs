//! Closed-form simulators with known anchored-ANOVA structure, all on
//! the unit cube `[0, 1]^m` with uniform inputs.

use serde::{Deserialize, Serialize};

use super::{InputSpace, Simulator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyticKind {
    /// `b + sum_i g_i(xi_i) w_i`: every interaction term vanishes.
    Additive,
    /// `s(xi) v` with `s` a product of per-coordinate factors: rank one.
    RankOneProduct,
    /// Linear part plus `(xi_1 xi_2)^2 v` and, for `m >= 3`, `xi_2 xi_3 v'`
    /// and `xi_1 xi_2 xi_3 v''`.
    PolynomialMix,
    /// `b` everywhere.
    Constant,
}

impl AnalyticKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "additive" => Ok(Self::Additive),
            "rank-one-product" => Ok(Self::RankOneProduct),
            "polynomial-mix" => Ok(Self::PolynomialMix),
            "constant" => Ok(Self::Constant),
            other => Err(Error::invalid(format!("unknown analytic simulator '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Additive => "additive",
            Self::RankOneProduct => "rank-one-product",
            Self::PolynomialMix => "polynomial-mix",
            Self::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalyticSimulator {
    kind: AnalyticKind,
    space: InputSpace,
    output_dim: usize,
    base: Vec<f64>,
    // One direction vector per input coordinate plus three interaction
    // directions; all fixed deterministic patterns.
    directions: Vec<Vec<f64>>,
}

fn pattern(seed: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|k| {
            let s = (seed + 1) as f64;
            let kf = (k + 1) as f64;
            (0.37 * s * kf + 0.11 * s).cos() + 0.25 * (0.53 * kf / s).sin()
        })
        .collect()
}

/// Builds a member of the analytic bank by name.
pub fn analytic_bank(name: &str, m: usize, output_dim: usize) -> Result<AnalyticSimulator> {
    AnalyticSimulator::new(AnalyticKind::parse(name)?, m, output_dim)
}

impl AnalyticSimulator {
    pub fn new(kind: AnalyticKind, m: usize, output_dim: usize) -> Result<Self> {
        if m == 0 || output_dim == 0 {
            return Err(Error::invalid("analytic simulator needs m >= 1 and output_dim >= 1"));
        }
        let base = (0..output_dim).map(|k| 1.0 + 0.1 * (k as f64 * 0.7).sin()).collect();
        let directions = (0..m + 3).map(|i| pattern(i, output_dim)).collect();
        Ok(Self {
            kind,
            space: InputSpace::uniform_cube(m, 0.0, 1.0)?,
            output_dim,
            base,
            directions,
        })
    }

    pub fn kind(&self) -> AnalyticKind {
        self.kind
    }

    /// Scalar profile of coordinate `i` in the additive model.
    pub fn additive_profile(i: usize, x: f64) -> f64 {
        let f = 1.0 + 0.5 * i as f64;
        (f * x + 0.2 * i as f64).sin() + 0.3 * x * x
    }

    /// Scalar factor of the rank-one model.
    pub fn product_scalar(xi: &[f64]) -> f64 {
        xi.iter()
            .enumerate()
            .map(|(i, &x)| 1.0 + (x - 0.3) / (i as f64 + 2.0))
            .product()
    }

    pub fn direction(&self, i: usize) -> &[f64] {
        &self.directions[i]
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }
}

impl Simulator for AnalyticSimulator {
    fn input_space(&self) -> &InputSpace {
        &self.space
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn evaluate(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let m = self.space.dim();
        Error::check_len(m, xi.len())?;
        let mut out = self.base.clone();
        let mut axpy = |a: f64, v: &[f64]| {
            for (o, &x) in out.iter_mut().zip(v) {
                *o += a * x;
            }
        };
        match self.kind {
            AnalyticKind::Constant => {}
            AnalyticKind::Additive => {
                for (i, &x) in xi.iter().enumerate() {
                    axpy(Self::additive_profile(i, x), &self.directions[i]);
                }
            }
            AnalyticKind::RankOneProduct => {
                let s = Self::product_scalar(xi);
                let v = &self.directions[0];
                return Ok(v.iter().map(|&x| s * x).collect());
            }
            AnalyticKind::PolynomialMix => {
                for (i, &x) in xi.iter().enumerate() {
                    axpy(x, &self.directions[i]);
                }
                if m >= 2 {
                    let p = xi[0] * xi[1];
                    axpy(p * p, &self.directions[m]);
                }
                if m >= 3 {
                    axpy(xi[1] * xi[2], &self.directions[m + 1]);
                    axpy(xi[0] * xi[1] * xi[2], &self.directions[m + 2]);
                }
            }
        }
        Ok(out)
    }
}
