//! Simulator abstraction, input distributions and the built-in
//! simulators: the Q1 diffusion solver and a bank of analytic models.

mod analytic;
mod banded;
mod diffusion;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use analytic::{analytic_bank, AnalyticKind, AnalyticSimulator};
pub use banded::BandedSpd;
pub use diffusion::{DiffusionProblem, LinearSolver};

/// Uniform marginal density on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformMarginal {
    pub lo: f64,
    pub hi: f64,
}

impl UniformMarginal {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!("empty input interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x >= self.lo && x <= self.hi {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }

    pub fn mean(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.lo + (self.hi - self.lo) * rng.random::<f64>()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Product of independent marginals: the distribution of the simulator input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpace {
    marginals: Vec<UniformMarginal>,
}

impl InputSpace {
    pub fn new(marginals: Vec<UniformMarginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::invalid("input space needs at least one dimension"));
        }
        Ok(Self { marginals })
    }

    pub fn uniform_cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        let m = UniformMarginal::new(lo, hi)?;
        Self::new(vec![m; dim])
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginal(&self, i: usize) -> &UniformMarginal {
        &self.marginals[i]
    }

    pub fn marginals(&self) -> &[UniformMarginal] {
        &self.marginals
    }

    pub fn mean(&self) -> Vec<f64> {
        self.marginals.iter().map(UniformMarginal::mean).collect()
    }

    /// Joint density of the coordinates in `coords` evaluated at `x`.
    pub fn marginal_pdf(&self, coords: &[usize], x: &[f64]) -> f64 {
        coords
            .iter()
            .zip(x)
            .map(|(&i, &xi)| self.marginals[i].pdf(xi))
            .product()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.marginals.iter().map(|m| m.sample(rng)).collect()
    }

    /// Samples only the coordinates listed in `coords`.
    pub fn sample_coords<R: Rng + ?Sized>(&self, coords: &[usize], rng: &mut R) -> Vec<f64> {
        coords.iter().map(|&i| self.marginals[i].sample(rng)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.marginals.iter().zip(x).all(|(m, &v)| m.contains(v))
    }
}

/// A deterministic map from an `m`-dimensional input to a `d`-dimensional output.
pub trait Simulator: Send + Sync {
    fn input_space(&self) -> &InputSpace;

    fn output_dim(&self) -> usize;

    fn evaluate(&self, xi: &[f64]) -> Result<Vec<f64>>;

    /// Norm used to compare ANOVA term means. Euclidean unless the output
    /// is a coefficient vector of a function space.
    fn output_norm(&self, u: &[f64]) -> f64 {
        euclidean_norm(u)
    }

    fn input_dim(&self) -> usize {
        self.input_space().dim()
    }
}

pub fn euclidean_norm(u: &[f64]) -> f64 {
    u.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Wraps a closure as a simulator; handy for tests and ad-hoc models.
pub struct FnSimulator<F> {
    space: InputSpace,
    output_dim: usize,
    f: F,
}

impl<F> FnSimulator<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(space: InputSpace, output_dim: usize, f: F) -> Self {
        Self { space, output_dim, f }
    }
}

impl<F> Simulator for FnSimulator<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn input_space(&self) -> &InputSpace {
        &self.space
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn evaluate(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.space.dim(), xi.len())?;
        let out = (self.f)(xi);
        Error::check_len(self.output_dim, out.len())?;
        Ok(out)
    }
}

impl<S: Simulator + ?Sized> Simulator for Box<S> {
    fn input_space(&self) -> &InputSpace {
        (**self).input_space()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn evaluate(&self, xi: &[f64]) -> Result<Vec<f64>> {
        (**self).evaluate(xi)
    }
    fn output_norm(&self, u: &[f64]) -> f64 {
        (**self).output_norm(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_marginal_basics() {
        let m = UniformMarginal::new(0.01, 1.0).unwrap();
        assert_eq!(m.mean(), 0.505);
        assert!((m.pdf(0.3) - 1.0 / 0.99).abs() < 1e-15);
        assert_eq!(m.pdf(1.5), 0.0);
        assert!(UniformMarginal::new(1.0, 1.0).is_err());
    }

    #[test]
    fn samples_stay_in_support() {
        let space = InputSpace::uniform_cube(3, -2.0, 5.0).unwrap();
        let mut rng = crate::seed::rng(7);
        for _ in 0..100 {
            assert!(space.contains(&space.sample(&mut rng)));
        }
    }
}
