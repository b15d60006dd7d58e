//! Local GP emulators with active training, the assembled ANOVA-GP
//! emulator and the plain PCA + GP baseline.

mod archive;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use archive::{ArchivedModel, EmulatorArchive, ARCHIVE_SCHEMA, ARCHIVE_VERSION};

use crate::anova::{term_value, AnchorPoint, AnovaIndex, IndexSelection, SimCache, TermDataset};
use crate::error::{Error, Result};
use crate::gp::{train_gp, GpConfig, GpModel};
use crate::pca::{fit_pca, reconstruct, PcaModel};
use crate::seed;
use crate::simulators::Simulator;

/// Terms whose values never exceed this fraction of the anchor output
/// (max-norm) are treated as identically zero.
pub const NEGLIGIBLE_TERM: f64 = 1e-12;

/// Settings shared by every local emulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalConfig {
    /// Target training-set size per term.
    pub n_train: usize,
    /// Number of candidate points drawn per term.
    pub pool_size: usize,
    pub tol_pca: f64,
    pub gp: GpConfig,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            n_train: 30,
            pool_size: 1000,
            tol_pca: 1e-2,
            gp: GpConfig::default(),
        }
    }
}

impl LocalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 {
            return Err(Error::Config("n_train must be at least 1".into()));
        }
        if self.pool_size <= self.n_train {
            return Err(Error::Config(format!(
                "pool_size ({}) must exceed n_train ({})",
                self.pool_size, self.n_train
            )));
        }
        if !(self.tol_pca > 0.0 && self.tol_pca < 1.0) {
            return Err(Error::Config("tol_pca must lie in (0, 1)".into()));
        }
        self.gp.validate()
    }
}

/// PCA of a term's outputs with one GP per retained mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalGpEmulator {
    pub index: AnovaIndex,
    pub pca: PcaModel,
    pub mode_gps: Vec<GpModel>,
    /// Final training inputs (in term coordinates).
    pub training_inputs: Vec<Vec<f64>>,
    /// Term values at `training_inputs`.
    pub training_outputs: Vec<Vec<f64>>,
}

impl LocalGpEmulator {
    pub fn rank(&self) -> usize {
        self.pca.rank()
    }

    pub fn input_dim(&self) -> usize {
        self.index.order()
    }

    fn check(&self) -> Result<()> {
        if self.mode_gps.len() != self.pca.rank() {
            return Err(Error::Archive(format!(
                "term {} has {} GPs for {} PCA modes",
                self.index,
                self.mode_gps.len(),
                self.pca.rank()
            )));
        }
        Ok(())
    }
}

/// `sum_r lambda_r v'_r(xi_t) / sum_r lambda_r`, the acquisition score of
/// active training.
pub fn variance_indicator(local: &LocalGpEmulator, xi_t: &[f64]) -> Result<f64> {
    if local.rank() == 0 {
        return Err(Error::UndefinedIndicator);
    }
    Error::check_len(local.input_dim(), xi_t.len())?;
    let mut num = 0.0;
    for (gp, &lambda) in local.mode_gps.iter().zip(&local.pca.eigenvalues) {
        num += lambda * gp.predict(xi_t)?.variance;
    }
    Ok(num / local.pca.eigenvalues.iter().sum::<f64>())
}

/// `V_t m'(xi_t) + mu_t`.
pub fn predict_local_mean(local: &LocalGpEmulator, xi_t: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(local.input_dim(), xi_t.len())?;
    let alpha = local
        .mode_gps
        .iter()
        .map(|gp| gp.predict_mean(xi_t))
        .collect::<Result<Vec<_>>>()?;
    reconstruct(&local.pca, &alpha)
}

// sum_r v_r^2 v'_r componentwise.
fn mode_variance_diag(pca: &PcaModel, gps: &[GpModel], x: &[f64], out: &mut [f64]) -> Result<()> {
    for (v, gp) in pca.components.iter().zip(gps) {
        let var = gp.predict(x)?.variance;
        for (o, c) in out.iter_mut().zip(v) {
            *o += c * c * var;
        }
    }
    Ok(())
}

/// One step of active training, passed to the observer of
/// [`train_local_observed`] before the chosen point is moved out of the pool.
pub struct ActiveStep<'a> {
    /// The emulator fitted to the current training set.
    pub emulator: &'a LocalGpEmulator,
    /// The remaining candidate pool.
    pub pool: &'a [Vec<f64>],
    /// Position of the chosen point in `pool`.
    pub chosen: usize,
    pub indicator: f64,
}

fn fit_local(
    index: &AnovaIndex,
    inputs: &[Vec<f64>],
    outputs: &[Vec<f64>],
    gp_cfg: &GpConfig,
    tol_pca: f64,
    seed: u64,
    step: usize,
    previous: &[GpModel],
) -> Result<LocalGpEmulator> {
    let fit = fit_pca(outputs, tol_pca)?;
    let mut mode_gps = Vec::with_capacity(fit.model.rank());
    for (r, targets) in fit.targets.iter().enumerate() {
        let mut parts: Vec<u64> = index.coords().iter().map(|&c| c as u64).collect();
        parts.extend([u64::MAX, step as u64, r as u64]);
        let s = seed::derive(seed, "gp-restart", &parts);
        let warm = previous.get(r).map(GpModel::hyper);
        mode_gps.push(train_gp(inputs, targets, gp_cfg, s, warm)?);
    }
    Ok(LocalGpEmulator {
        index: index.clone(),
        pca: fit.model,
        mode_gps,
        training_inputs: inputs.to_vec(),
        training_outputs: outputs.to_vec(),
    })
}

/// Trains the local emulator of `t` starting from its quadrature data and
/// adding maximum-variance pool points until `n_train` points are used.
pub fn train_local(
    dataset: &TermDataset,
    sim: &dyn Simulator,
    anchor: &AnchorPoint,
    cache: &SimCache,
    config: &LocalConfig,
    seed: u64,
) -> Result<LocalGpEmulator> {
    train_local_observed(dataset, sim, anchor, cache, config, seed, &mut |_| {})
}

/// [`train_local`] with a callback invoked at every active selection.
pub fn train_local_observed(
    dataset: &TermDataset,
    sim: &dyn Simulator,
    anchor: &AnchorPoint,
    cache: &SimCache,
    config: &LocalConfig,
    seed: u64,
    observer: &mut dyn FnMut(&ActiveStep<'_>),
) -> Result<LocalGpEmulator> {
    config.validate()?;
    let t = &dataset.index;
    if t.is_empty() {
        return Err(Error::invalid("the empty index has no local emulator"));
    }
    if dataset.is_empty() {
        return Err(Error::invalid(format!("term {t} has no initial data")));
    }
    let mut inputs = dataset.points().to_vec();
    let mut outputs = dataset.values.clone();

    // A term at rounding level of the simulator output is constant.
    let scale = cache
        .evaluate(sim, anchor.as_slice())?
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    let spread = outputs.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if spread <= NEGLIGIBLE_TERM * scale {
        log::debug!("term {t}: values negligible, constant emulator");
        let n = outputs.len() as f64;
        let mut mean = vec![0.0; outputs[0].len()];
        for y in &outputs {
            for (m, v) in mean.iter_mut().zip(y) {
                *m += v / n;
            }
        }
        return Ok(LocalGpEmulator {
            index: t.clone(),
            pca: PcaModel::constant(mean),
            mode_gps: Vec::new(),
            training_inputs: inputs,
            training_outputs: outputs,
        });
    }

    let space = sim.input_space();
    let mut parts: Vec<u64> = t.coords().iter().map(|&c| c as u64).collect();
    parts.push(u64::MAX);
    let mut rng = seed::rng(seed::derive(seed, "pool", &parts));
    let mut pool = Vec::with_capacity(config.pool_size);
    while pool.len() < config.pool_size {
        let p = space.sample_coords(t.coords(), &mut rng);
        if !inputs.contains(&p) {
            pool.push(p);
        }
    }

    let mut step = 0;
    let mut local = fit_local(t, &inputs, &outputs, &config.gp, config.tol_pca, seed, step, &[])?;
    if local.rank() == 0 {
        log::debug!("term {t}: no PCA modes, constant emulator");
        return Ok(local);
    }
    while inputs.len() < config.n_train {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, p) in pool.iter().enumerate() {
            let tau = variance_indicator(&local, p)?;
            if tau > best.1 {
                best = (i, tau);
            }
        }
        observer(&ActiveStep {
            emulator: &local,
            pool: &pool,
            chosen: best.0,
            indicator: best.1,
        });
        let xi = pool.remove(best.0);
        let value = term_value(t, &xi, sim, anchor, cache)?;
        inputs.push(xi);
        outputs.push(value);
        step += 1;
        let previous = std::mem::take(&mut local.mode_gps);
        local = fit_local(t, &inputs, &outputs, &config.gp, config.tol_pca, seed, step, &previous)?;
        if local.rank() == 0 {
            break;
        }
    }
    log::debug!("term {t}: {} points, {} modes", inputs.len(), local.rank());
    Ok(local)
}

/// Trains the local emulators of every selected non-empty index.
pub fn train_all_locals(
    selection: &IndexSelection,
    datasets: &BTreeMap<AnovaIndex, TermDataset>,
    sim: &dyn Simulator,
    anchor: &AnchorPoint,
    cache: &SimCache,
    config: &LocalConfig,
    seed: u64,
) -> Result<BTreeMap<AnovaIndex, LocalGpEmulator>> {
    let mut out = BTreeMap::new();
    for t in selection.selected().filter(|t| !t.is_empty()) {
        let data = datasets
            .get(t)
            .ok_or_else(|| Error::invalid(format!("no quadrature data for selected term {t}")))?;
        out.insert(t.clone(), train_local(data, sim, anchor, cache, config, seed)?);
    }
    Ok(out)
}

/// `u(c) + sum_t u_t(xi_t)` over the selected terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnovaGpEmulator {
    pub anchor_output: Vec<f64>,
    pub selection: IndexSelection,
    #[serde(with = "crate::anova::index_map")]
    pub locals: BTreeMap<AnovaIndex, LocalGpEmulator>,
    input_dim: usize,
}

/// Combines the anchor output and one local emulator per selected
/// non-empty index.
pub fn assemble(
    selection: &IndexSelection,
    anchor_output: Vec<f64>,
    locals: BTreeMap<AnovaIndex, LocalGpEmulator>,
    input_dim: usize,
) -> Result<AnovaGpEmulator> {
    check_parts(selection, &anchor_output, &locals, input_dim)?;
    Ok(AnovaGpEmulator {
        anchor_output,
        selection: selection.clone(),
        locals,
        input_dim,
    })
}

fn check_parts(
    selection: &IndexSelection,
    anchor_output: &[f64],
    locals: &BTreeMap<AnovaIndex, LocalGpEmulator>,
    input_dim: usize,
) -> Result<()> {
    let d = anchor_output.len();
    for t in selection.selected().filter(|t| !t.is_empty()) {
        t.validate(input_dim)?;
        let local = locals
            .get(t)
            .ok_or_else(|| Error::invalid(format!("missing local emulator for selected term {t}")))?;
        local.check()?;
        Error::check_len(d, local.pca.output_dim())?;
    }
    if let Some(extra) = locals.keys().find(|t| !selection.contains(t) || t.is_empty()) {
        return Err(Error::invalid(format!("local emulator for unselected term {extra}")));
    }
    Ok(())
}

impl AnovaGpEmulator {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.anchor_output.len()
    }

    /// Predictive mean.
    pub fn predict_mean(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.input_dim, xi.len())?;
        let mut out = self.anchor_output.clone();
        for (t, local) in &self.locals {
            let term = predict_local_mean(local, &t.project(xi))?;
            for (o, v) in out.iter_mut().zip(term) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Diagnostic only: componentwise sum of the per-term mode variances,
    /// treating the terms as independent.
    pub fn predict_variance_diag(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.input_dim, xi.len())?;
        let mut out = vec![0.0; self.output_dim()];
        for (t, local) in &self.locals {
            mode_variance_diag(&local.pca, &local.mode_gps, &t.project(xi), &mut out)?;
        }
        Ok(out)
    }

    /// Retained PCA modes per term, in index order.
    pub fn mode_counts(&self) -> Vec<(AnovaIndex, usize)> {
        self.locals.iter().map(|(t, l)| (t.clone(), l.rank())).collect()
    }

    fn check(&self) -> Result<()> {
        check_parts(&self.selection, &self.anchor_output, &self.locals, self.input_dim)
    }
}

/// PCA over raw simulator outputs with one GP per mode over the full input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgpEmulator {
    pub pca: PcaModel,
    pub mode_gps: Vec<GpModel>,
    pub training_inputs: Vec<Vec<f64>>,
    input_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgpConfig {
    pub tol_pca: f64,
    pub gp: GpConfig,
    /// Start each mode's optimizer at the previous mode's optimum.
    pub chain_warm_start: bool,
}

impl Default for SgpConfig {
    fn default() -> Self {
        Self {
            tol_pca: 1e-2,
            gp: GpConfig::default(),
            chain_warm_start: false,
        }
    }
}

impl SgpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_pca > 0.0 && self.tol_pca < 1.0) {
            return Err(Error::Config("sgp.tol_pca must lie in (0, 1)".into()));
        }
        self.gp.validate()
    }
}

/// Draws `n` i.i.d. inputs from the input distribution, simulates them and
/// fits PCA + per-mode GPs.
pub fn train_sgp(
    sim: &dyn Simulator,
    n: usize,
    config: &SgpConfig,
    cache: &SimCache,
    seed: u64,
) -> Result<SgpEmulator> {
    config.validate()?;
    if n == 0 {
        return Err(Error::invalid("S-GP needs at least one sample"));
    }
    let space = sim.input_space();
    let mut rng = seed::rng(seed::derive(seed, "sgp-samples", &[]));
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| space.sample(&mut rng)).collect();
    let outputs = inputs
        .iter()
        .map(|x| cache.evaluate(sim, x).map(|v| v.as_ref().clone()))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_pca(&outputs, config.tol_pca)?;
    log::info!("S-GP: {n} samples, {} modes", fit.model.rank());
    let mut mode_gps: Vec<GpModel> = Vec::with_capacity(fit.model.rank());
    for (r, targets) in fit.targets.iter().enumerate() {
        let s = seed::derive(seed, "sgp-restart", &[r as u64]);
        let warm = if config.chain_warm_start {
            mode_gps.last().map(GpModel::hyper).cloned()
        } else {
            None
        };
        let gp = train_gp(&inputs, targets, &config.gp, s, warm.as_ref())?;
        log::debug!("S-GP mode {r}: nlml {:.6e}", gp.nlml());
        mode_gps.push(gp);
    }
    Ok(SgpEmulator {
        pca: fit.model,
        mode_gps,
        training_inputs: inputs,
        input_dim: space.dim(),
    })
}

impl SgpEmulator {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn rank(&self) -> usize {
        self.pca.rank()
    }

    pub fn predict_mean(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.input_dim, xi.len())?;
        let alpha = self
            .mode_gps
            .iter()
            .map(|gp| gp.predict_mean(xi))
            .collect::<Result<Vec<_>>>()?;
        reconstruct(&self.pca, &alpha)
    }

    pub fn predict_variance_diag(&self, xi: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.input_dim, xi.len())?;
        let mut out = vec![0.0; self.pca.output_dim()];
        mode_variance_diag(&self.pca, &self.mode_gps, xi, &mut out)?;
        Ok(out)
    }

    fn check(&self) -> Result<()> {
        if self.mode_gps.len() != self.pca.rank() {
            return Err(Error::Archive("S-GP mode count does not match its GPs".into()));
        }
        Ok(())
    }
}

/// Free-function form of [`SgpEmulator::predict_mean`].
pub fn predict_sgp_mean(emulator: &SgpEmulator, xi: &[f64]) -> Result<Vec<f64>> {
    emulator.predict_mean(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anova::{adaptive_decompose, term_mean, DecomposeConfig};
    use crate::simulators::{analytic_bank, FnSimulator, InputSpace};

    fn exact_cfg(n_train: usize) -> LocalConfig {
        LocalConfig {
            n_train,
            pool_size: 200,
            tol_pca: 1e-6,
            gp: GpConfig {
                jitter_floor: 0.0,
                ..GpConfig::default()
            },
        }
    }

    #[test]
    fn constant_term_gets_constant_emulator() {
        let sim = analytic_bank("additive", 2, 4).unwrap();
        let c = AnchorPoint::input_mean(&sim);
        let cache = SimCache::new();
        let t = AnovaIndex::new(vec![0, 1]).unwrap();
        let (_, data) = term_mean(&t, &sim, &c, &cache, 3).unwrap();
        let local = train_local(&data, &sim, &c, &cache, &exact_cfg(12), 1).unwrap();
        assert_eq!(local.rank(), 0);
        assert!(matches!(variance_indicator(&local, &[0.2, 0.4]), Err(Error::UndefinedIndicator)));
        let p = predict_local_mean(&local, &[0.2, 0.4]).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn linear_term_is_reproduced() {
        let v = vec![1.0, -2.0, 0.5];
        let vv = v.clone();
        let sim = FnSimulator::new(InputSpace::uniform_cube(2, 0.0, 1.0).unwrap(), 3, move |x: &[f64]| {
            vv.iter().map(|a| a * x[0]).collect()
        });
        let c = AnchorPoint::input_mean(&sim);
        let cache = SimCache::new();
        let t = AnovaIndex::singleton(0);
        let (_, data) = term_mean(&t, &sim, &c, &cache, 5).unwrap();
        let local = train_local(&data, &sim, &c, &cache, &exact_cfg(8), 2).unwrap();
        assert_eq!(local.training_inputs.len(), 8);
        assert_eq!(local.rank(), 1);
        for x in [0.05, 0.33, 0.71, 0.97] {
            let p = predict_local_mean(&local, &[x]).unwrap();
            for (a, b) in p.iter().zip(&v) {
                assert!((a - b * (x - 0.5)).abs() < 1e-4, "{a} vs {}", b * (x - 0.5));
            }
        }
        // Training points are interpolated.
        for (x, y) in local.training_inputs.iter().zip(&local.training_outputs) {
            let p = predict_local_mean(&local, x).unwrap();
            for (a, b) in p.iter().zip(y) {
                assert!((a - b).abs() < 1e-5);
            }
            assert!(variance_indicator(&local, x).unwrap() < 1e-8);
        }
    }

    #[test]
    fn n_train_below_grid_size_skips_selection() {
        let sim = analytic_bank("polynomial-mix", 2, 5).unwrap();
        let c = AnchorPoint::input_mean(&sim);
        let cache = SimCache::new();
        let t = AnovaIndex::singleton(1);
        let (_, data) = term_mean(&t, &sim, &c, &cache, 5).unwrap();
        let mut calls = 0;
        let local =
            train_local_observed(&data, &sim, &c, &cache, &exact_cfg(3), 4, &mut |_| calls += 1).unwrap();
        assert_eq!(calls, 0);
        assert_eq!(local.training_inputs.len(), 5);
    }

    #[test]
    fn empty_selection_gives_constant_emulator() {
        let sim = analytic_bank("constant", 3, 4).unwrap();
        let cache = SimCache::new();
        let dec = adaptive_decompose(&sim, &DecomposeConfig::default(), &cache).unwrap();
        assert_eq!(dec.selection.len(), 1);
        let em = assemble(&dec.selection, dec.anchor_output.clone(), BTreeMap::new(), 3).unwrap();
        assert_eq!(em.predict_mean(&[0.1, 0.2, 0.9]).unwrap(), dec.anchor_output);
    }

    #[test]
    fn assemble_checks_coverage() {
        let sim = analytic_bank("additive", 2, 3).unwrap();
        let cache = SimCache::new();
        let dec = adaptive_decompose(&sim, &DecomposeConfig::default(), &cache).unwrap();
        assert_eq!(dec.selection.selected_count(1), 2);
        let err = assemble(&dec.selection, dec.anchor_output.clone(), BTreeMap::new(), 2);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn sgp_on_constant_simulator_has_no_modes() {
        let sim = analytic_bank("constant", 3, 4).unwrap();
        let cache = SimCache::new();
        let em = train_sgp(&sim, 5, &SgpConfig::default(), &cache, 9).unwrap();
        assert_eq!(em.rank(), 0);
        let expected = sim.evaluate(&[0.5; 3]).unwrap();
        assert_eq!(predict_sgp_mean(&em, &[0.1, 0.7, 0.3]).unwrap(), expected);
    }
}
