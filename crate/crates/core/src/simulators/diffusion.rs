//! Bilinear (Q1) finite elements for `-div(a grad u) = 1` on `(-1, 1)^2`
//! with homogeneous Dirichlet data and a coefficient that is constant on
//! each cell of a `k_side x k_side` partition of the domain.
//!
//! Node `(ix, iy)` has global number `ix + iy * (n + 1)` where `n` is the
//! number of elements per side and `ix` runs along `x_1`. The subdomain
//! `(kx, ky)` reads its coefficient from `xi[kx + ky * k_side]`.

use serde::{Deserialize, Serialize};

use super::banded::BandedSpd;
use super::{InputSpace, Simulator};
use crate::error::{Error, Result};

const STIFFNESS_REF: [[f64; 4]; 4] = [
    [4.0, -1.0, -2.0, -1.0],
    [-1.0, 4.0, -1.0, -2.0],
    [-2.0, -1.0, 4.0, -1.0],
    [-1.0, -2.0, -1.0, 4.0],
];

const MASS_REF: [[f64; 4]; 4] = [
    [4.0, 2.0, 1.0, 2.0],
    [2.0, 4.0, 2.0, 1.0],
    [1.0, 2.0, 4.0, 2.0],
    [2.0, 1.0, 2.0, 4.0],
];

pub const COEFFICIENT_RANGE: (f64, f64) = (0.01, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LinearSolver {
    #[default]
    BandedCholesky,
    ConjugateGradient {
        tol: f64,
    },
}

#[derive(Debug, Clone)]
pub struct DiffusionProblem {
    elements_per_side: usize,
    k_side: usize,
    solver: LinearSolver,
    element_subdomain: Vec<usize>,
    // Global node number of each interior unknown and the reverse map.
    interior_of_node: Vec<Option<usize>>,
    n_interior: usize,
    space: InputSpace,
    load: Vec<f64>,
}

impl DiffusionProblem {
    pub fn new(elements_per_side: usize, k_side: usize) -> Result<Self> {
        Self::with_solver(elements_per_side, k_side, LinearSolver::BandedCholesky)
    }

    pub fn with_solver(elements_per_side: usize, k_side: usize, solver: LinearSolver) -> Result<Self> {
        let n = elements_per_side;
        if n < 2 {
            return Err(Error::invalid("need at least two elements per side"));
        }
        if k_side == 0 || k_side > n {
            return Err(Error::invalid(format!(
                "k_side = {k_side} must lie in 1..={n}"
            )));
        }
        if let LinearSolver::ConjugateGradient { tol } = solver {
            if !(tol > 0.0) {
                return Err(Error::invalid("CG tolerance must be positive"));
            }
        }
        // Element centroid along one axis sits at -1 + (2e + 1) / n; it lies
        // on a subdomain edge iff (2e + 1) * k_side is a multiple of 2n.
        let mut axis_sub = Vec::with_capacity(n);
        for e in 0..n {
            let num = (2 * e + 1) * k_side;
            if num.is_multiple_of(2 * n) {
                return Err(Error::invalid(format!(
                    "element centroid {e} lies on a subdomain edge for {n} elements and k_side {k_side}"
                )));
            }
            axis_sub.push(num / (2 * n));
        }
        let mut element_subdomain = Vec::with_capacity(n * n);
        for ey in 0..n {
            for ex in 0..n {
                element_subdomain.push(axis_sub[ex] + axis_sub[ey] * k_side);
            }
        }

        let nodes = n + 1;
        let mut interior_of_node = vec![None; nodes * nodes];
        let mut n_interior = 0;
        for iy in 1..n {
            for ix in 1..n {
                interior_of_node[ix + iy * nodes] = Some(n_interior);
                n_interior += 1;
            }
        }

        let h = 2.0 / n as f64;
        let mut load = vec![0.0; n_interior];
        for ey in 0..n {
            for ex in 0..n {
                for g in element_nodes(ex, ey, nodes) {
                    if let Some(i) = interior_of_node[g] {
                        load[i] += 0.25 * h * h;
                    }
                }
            }
        }

        let (lo, hi) = COEFFICIENT_RANGE;
        let space = InputSpace::uniform_cube(k_side * k_side, lo, hi)?;
        Ok(Self {
            elements_per_side: n,
            k_side,
            solver,
            element_subdomain,
            interior_of_node,
            n_interior,
            space,
            load,
        })
    }

    pub fn elements_per_side(&self) -> usize {
        self.elements_per_side
    }

    pub fn k_side(&self) -> usize {
        self.k_side
    }

    pub fn n_subdomains(&self) -> usize {
        self.k_side * self.k_side
    }

    pub fn nodes_per_side(&self) -> usize {
        self.elements_per_side + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_side() * self.nodes_per_side()
    }

    /// Coordinates `(x_1, x_2)` of a global node.
    pub fn node_coords(&self, node: usize) -> (f64, f64) {
        let nodes = self.nodes_per_side();
        let h = 2.0 / self.elements_per_side as f64;
        let ix = node % nodes;
        let iy = node / nodes;
        (-1.0 + h * ix as f64, -1.0 + h * iy as f64)
    }

    pub fn subdomain_of_element(&self, ex: usize, ey: usize) -> usize {
        self.element_subdomain[ex + ey * self.elements_per_side]
    }

    /// Assembles the stiffness matrix on the interior unknowns.
    pub fn assemble(&self, xi: &[f64]) -> Result<BandedSpd> {
        Error::check_len(self.n_subdomains(), xi.len())?;
        if let Some(bad) = xi.iter().find(|&&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::invalid(format!(
                "diffusion coefficient must be positive and finite, got {bad}"
            )));
        }
        let n = self.elements_per_side;
        let nodes = n + 1;
        // Interior numbering is row-major with n - 1 unknowns per row; the
        // farthest coupling is the diagonal neighbour at offset n.
        let mut a = BandedSpd::zeros(self.n_interior, n);
        for ey in 0..n {
            for ex in 0..n {
                let coef = xi[self.element_subdomain[ex + ey * n]] / 6.0;
                let gl = element_nodes(ex, ey, nodes);
                for p in 0..4 {
                    let Some(ip) = self.interior_of_node[gl[p]] else { continue };
                    for q in 0..4 {
                        let Some(iq) = self.interior_of_node[gl[q]] else { continue };
                        if ip >= iq {
                            a.add_lower(ip, iq, coef * STIFFNESS_REF[p][q]);
                        }
                    }
                }
            }
        }
        Ok(a)
    }

    /// Solves for the nodal values, boundary nodes included (as zeros).
    pub fn solve(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let a = self.assemble(xi)?;
        let interior = match self.solver {
            LinearSolver::BandedCholesky => {
                let chol = a.factorize()?;
                let mut x = self.load.clone();
                chol.solve_in_place(&mut x);
                x
            }
            LinearSolver::ConjugateGradient { tol } => conjugate_gradient(&a, &self.load, tol)?,
        };
        let mut u = vec![0.0; self.n_nodes()];
        for (g, slot) in self.interior_of_node.iter().enumerate() {
            if let Some(i) = slot {
                u[g] = interior[*i];
            }
        }
        Ok(u)
    }

    /// `sqrt(U^T M U)` with the consistent Q1 mass matrix on the full grid.
    pub fn l2_norm(&self, u: &[f64]) -> Result<f64> {
        Error::check_len(self.n_nodes(), u.len())?;
        let n = self.elements_per_side;
        let nodes = n + 1;
        let h = 2.0 / n as f64;
        let scale = h * h / 36.0;
        let mut acc = 0.0;
        for ey in 0..n {
            for ex in 0..n {
                let gl = element_nodes(ex, ey, nodes);
                let ue = [u[gl[0]], u[gl[1]], u[gl[2]], u[gl[3]]];
                for p in 0..4 {
                    let row: f64 = (0..4).map(|q| MASS_REF[p][q] * ue[q]).sum();
                    acc += ue[p] * row;
                }
            }
        }
        Ok((acc * scale).max(0.0).sqrt())
    }
}

// Counter-clockwise from the lower-left corner.
#[inline]
fn element_nodes(ex: usize, ey: usize, nodes: usize) -> [usize; 4] {
    let ll = ex + ey * nodes;
    [ll, ll + 1, ll + 1 + nodes, ll + nodes]
}

fn conjugate_gradient(a: &BandedSpd, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let b_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..(10 * n).max(100) {
        a.mul_vec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(u, v)| u * v).sum();
        if !(pap > 0.0) {
            return Err(Error::Solver("CG breakdown: matrix not positive definite".into()));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        if rr_new.sqrt() <= tol * b_norm {
            return Ok(x);
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::Solver("CG did not converge".into()))
}

impl Simulator for DiffusionProblem {
    fn input_space(&self) -> &InputSpace {
        &self.space
    }

    fn output_dim(&self) -> usize {
        self.n_nodes()
    }

    fn evaluate(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.solve(xi)
    }

    fn output_norm(&self, u: &[f64]) -> f64 {
        self.l2_norm(u).unwrap_or(f64::NAN)
    }
}
