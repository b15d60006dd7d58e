//! Anchored ANOVA terms and the adaptive index selection loop.
//!
//! With anchor `c`, the term of index `t` is
//! `u_t(xi_t) = u(xi^{c,t}) - sum_{w strictly inside t} u_w(xi_w)` where
//! `xi^{c,t}` takes the coordinates in `t` from `xi_t` and the rest from
//! `c`. Summing all `2^m` terms reproduces `u` exactly.

mod cache;
mod index;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use cache::SimCache;
pub use index::{index_map, index_order, AnovaIndex};

use crate::error::{Error, Result};
use crate::quadrature::{tensor_grid, weighted_mean, QuadratureRule1D, TensorQuadrature};
use crate::simulators::Simulator;

/// Reference input at which all off-index coordinates are frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorPoint(Vec<f64>);

impl AnchorPoint {
    /// Checks that every coordinate lies in the simulator's input support.
    pub fn new(c: Vec<f64>, sim: &dyn Simulator) -> Result<Self> {
        let space = sim.input_space();
        Error::check_len(space.dim(), c.len())?;
        if !space.contains(&c) {
            return Err(Error::invalid(format!("anchor {c:?} outside the input support")));
        }
        Ok(Self(c))
    }

    /// The mean of the input distribution.
    pub fn input_mean(sim: &dyn Simulator) -> Self {
        Self(sim.input_space().mean())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Quadrature data of one ANOVA term: the grid and `u_t` at each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDataset {
    pub index: AnovaIndex,
    pub grid: TensorQuadrature,
    pub values: Vec<Vec<f64>>,
}

impl TermDataset {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.grid.points
    }
}

/// Replaces the coordinates of `c` listed in `t` by `xi_t`.
pub fn embed(xi_t: &[f64], t: &AnovaIndex, c: &AnchorPoint) -> Result<Vec<f64>> {
    Error::check_len(t.order(), xi_t.len())?;
    t.validate(c.dim())?;
    let mut x = c.0.clone();
    for (&i, &v) in t.coords().iter().zip(xi_t) {
        x[i] = v;
    }
    Ok(x)
}

/// Evaluates `u_t(xi_t)` through the cache.
///
/// Terms of all subsets of `t` are built bottom-up over bit masks, so each
/// subset is embedded and simulated once (`2^|t|` lookups in total).
pub fn term_value(
    t: &AnovaIndex,
    xi_t: &[f64],
    sim: &dyn Simulator,
    c: &AnchorPoint,
    cache: &SimCache,
) -> Result<Vec<f64>> {
    Error::check_len(t.order(), xi_t.len())?;
    Error::check_len(sim.input_dim(), c.dim())?;
    t.validate(c.dim())?;
    let k = t.order();
    let full = (1usize << k) - 1;
    let mut terms: Vec<Vec<f64>> = Vec::with_capacity(full + 1);
    for mask in 0..=full {
        let mut x = c.0.clone();
        for (p, &coord) in t.coords().iter().enumerate() {
            if mask & (1 << p) != 0 {
                x[coord] = xi_t[p];
            }
        }
        let mut v = cache.evaluate(sim, &x)?.as_ref().clone();
        if mask != 0 {
            // Proper submasks of `mask`, the empty one included.
            let mut sub = (mask - 1) & mask;
            loop {
                for (a, b) in v.iter_mut().zip(&terms[sub]) {
                    *a -= b;
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & mask;
            }
        }
        terms.push(v);
    }
    Ok(terms.pop().expect("at least the empty mask"))
}

/// Quadrature estimate of the mean of `u_t` together with the term values
/// at the grid points.
pub fn term_mean(
    t: &AnovaIndex,
    sim: &dyn Simulator,
    c: &AnchorPoint,
    cache: &SimCache,
    nodes_per_dim: usize,
) -> Result<(Vec<f64>, TermDataset)> {
    if t.is_empty() {
        return Err(Error::invalid("term_mean needs a non-empty index"));
    }
    t.validate(sim.input_dim())?;
    let space = sim.input_space();
    let rules = t
        .coords()
        .iter()
        .map(|&i| {
            let m = space.marginal(i);
            QuadratureRule1D::clenshaw_curtis_on(nodes_per_dim, m.lo, m.hi)
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = tensor_grid(t, &rules)?;
    let values = grid
        .points
        .iter()
        .map(|p| term_value(t, p, sim, c, cache))
        .collect::<Result<Vec<_>>>()?;
    let density: Vec<f64> = grid
        .points
        .iter()
        .map(|p| space.marginal_pdf(t.coords(), p))
        .collect();
    let mean = weighted_mean(&values, &grid, &density)?;
    Ok((
        mean,
        TermDataset {
            index: t.clone(),
            grid,
            values,
        },
    ))
}

/// `norm(mean_t) / norm(accumulated_mean)`.
pub fn contribution_weight(
    t: &AnovaIndex,
    mean_t: &[f64],
    accumulated_mean: &[f64],
    norm: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    Error::check_len(accumulated_mean.len(), mean_t.len())?;
    let den = norm(accumulated_mean);
    if !(den > 0.0) {
        return Err(Error::DegenerateReference { index: t.label() });
    }
    Ok(norm(mean_t) / den)
}

/// Which selected terms enter the weight denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DenominatorMode {
    /// Terms selected at lower orders only; fixed while an order is scored.
    #[default]
    PerOrder,
    /// Also includes same-order terms accepted earlier in the candidate loop.
    Running,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub tol_index: f64,
    pub nodes_per_dim: usize,
    pub max_order: usize,
    pub denominator: DenominatorMode,
    /// Use the bare numerator norm when the accumulated mean vanishes.
    pub absolute_fallback: bool,
    /// Overrides the default anchor (the input mean).
    pub anchor: Option<Vec<f64>>,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            tol_index: 1e-4,
            nodes_per_dim: 5,
            max_order: 4,
            denominator: DenominatorMode::PerOrder,
            absolute_fallback: false,
            anchor: None,
        }
    }
}

impl DecomposeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_index > 0.0) {
            return Err(Error::Config("tol_index must be positive".into()));
        }
        if self.max_order == 0 {
            return Err(Error::Config("max_order must be at least 1".into()));
        }
        if self.nodes_per_dim == 0 {
            return Err(Error::Config("nodes_per_dim must be at least 1".into()));
        }
        Ok(())
    }
}

/// Selected indices per order plus scoring diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSelection {
    /// `orders[i]` holds the selected indices of order `i`; `orders[0] == [{}]`.
    pub orders: Vec<Vec<AnovaIndex>>,
    /// Candidate count of every scored order, starting at order 1.
    pub candidate_counts: Vec<usize>,
    /// Contribution weight of every scored candidate.
    #[serde(with = "index_map")]
    pub weights: BTreeMap<AnovaIndex, f64>,
    /// Size of the next candidate set when the loop stopped at `max_order`.
    pub unscored_candidates: usize,
}

impl IndexSelection {
    /// All selected indices (the empty one included) in index order.
    pub fn selected(&self) -> impl Iterator<Item = &AnovaIndex> {
        self.orders.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.orders.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `|J_i|`, zero for orders never reached.
    pub fn selected_count(&self, order: usize) -> usize {
        self.orders.get(order).map_or(0, Vec::len)
    }

    /// `|J^_i|` for `i >= 1`, zero for orders never reached.
    pub fn candidate_count(&self, order: usize) -> usize {
        if order == 0 {
            return 1;
        }
        self.candidate_counts.get(order - 1).copied().unwrap_or(0)
    }

    pub fn contains(&self, t: &AnovaIndex) -> bool {
        self.orders.get(t.order()).is_some_and(|o| o.contains(t))
    }

    pub fn max_order(&self) -> usize {
        self.orders.iter().rposition(|o| !o.is_empty()).unwrap_or(0)
    }
}

/// Candidates of order `i + 1` all of whose order-`i` facets are in
/// `selected` (which must contain indices of a single order `i`).
pub fn admissible_candidates(selected: &[AnovaIndex], m: usize) -> Vec<AnovaIndex> {
    let set: BTreeSet<&AnovaIndex> = selected.iter().collect();
    let mut out = Vec::new();
    for s in selected {
        let start = s.coords().last().map_or(0, |&l| l + 1);
        for j in start..m {
            let mut coords = s.coords().to_vec();
            coords.push(j);
            let t = AnovaIndex::new(coords).expect("appending a larger coordinate keeps order");
            if t.facets().all(|f| set.contains(&f)) {
                out.push(t);
            }
        }
    }
    out.sort();
    out
}

/// Output of the adaptive decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decomposition {
    pub anchor: AnchorPoint,
    pub anchor_output: Vec<f64>,
    pub selection: IndexSelection,
    /// Quadrature data sets of the selected non-empty indices.
    #[serde(with = "index_map")]
    pub datasets: BTreeMap<AnovaIndex, TermDataset>,
    /// Quadrature means of the selected non-empty indices.
    #[serde(with = "index_map")]
    pub means: BTreeMap<AnovaIndex, Vec<f64>>,
}

/// Adaptive anchored ANOVA: scores admissible candidates order by order
/// and keeps those whose contribution weight exceeds `tol_index`.
///
/// Candidates are processed in index order. The loop stops once no
/// admissible candidates remain or after `max_order` orders.
pub fn adaptive_decompose(
    sim: &dyn Simulator,
    config: &DecomposeConfig,
    cache: &SimCache,
) -> Result<Decomposition> {
    config.validate()?;
    let m = sim.input_dim();
    let anchor = match &config.anchor {
        Some(c) => AnchorPoint::new(c.clone(), sim)?,
        None => AnchorPoint::input_mean(sim),
    };
    let anchor_output = cache
        .evaluate(sim, anchor.as_slice())
        .map_err(|e| Error::DecompositionAborted {
            order: 0,
            selected: 0,
            source: Box::new(e),
        })?
        .as_ref()
        .clone();

    let norm = |u: &[f64]| sim.output_norm(u);
    let mut selection = IndexSelection {
        orders: vec![vec![AnovaIndex::empty()]],
        candidate_counts: Vec::new(),
        weights: BTreeMap::new(),
        unscored_candidates: 0,
    };
    let mut datasets = BTreeMap::new();
    let mut means = BTreeMap::new();
    let mut accumulated = anchor_output.clone();

    let mut candidates = admissible_candidates(&selection.orders[0], m);
    let mut order = 1;
    while !candidates.is_empty() {
        if order > config.max_order {
            selection.unscored_candidates = candidates.len();
            break;
        }
        selection.candidate_counts.push(candidates.len());
        let frozen = accumulated.clone();
        let mut chosen = Vec::new();
        for t in &candidates {
            let abort = |e: Error| Error::DecompositionAborted {
                order,
                selected: selection.len() + chosen.len(),
                source: Box::new(e),
            };
            let (mean, dataset) = term_mean(t, sim, &anchor, cache, config.nodes_per_dim).map_err(abort)?;
            let reference = match config.denominator {
                DenominatorMode::PerOrder => &frozen,
                DenominatorMode::Running => &accumulated,
            };
            let gamma = match contribution_weight(t, &mean, reference, &norm) {
                Err(Error::DegenerateReference { .. }) if config.absolute_fallback => norm(&mean),
                other => other.map_err(abort)?,
            };
            log::debug!("order {order}: gamma{t} = {gamma:.3e}");
            selection.weights.insert(t.clone(), gamma);
            if gamma > config.tol_index {
                if config.denominator == DenominatorMode::Running {
                    add_assign(&mut accumulated, &mean);
                }
                chosen.push(t.clone());
                datasets.insert(t.clone(), dataset);
                means.insert(t.clone(), mean);
            }
        }
        if config.denominator == DenominatorMode::PerOrder {
            for t in &chosen {
                add_assign(&mut accumulated, &means[t]);
            }
        }
        log::info!(
            "order {order}: {} of {} candidates selected",
            chosen.len(),
            candidates.len()
        );
        candidates = admissible_candidates(&chosen, m);
        selection.orders.push(chosen);
        order += 1;
    }
    while selection.orders.last().is_some_and(Vec::is_empty) && selection.orders.len() > 1 {
        selection.orders.pop();
    }

    Ok(Decomposition {
        anchor,
        anchor_output,
        selection,
        datasets,
        means,
    })
}

fn add_assign(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}
