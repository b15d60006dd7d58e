//! Config-driven end-to-end runs comparing ANOVA-GP against the S-GP
//! baseline on a common set of random test inputs.
//!
//! A config is a TOML document (JSON is accepted too):
//!
//! ```toml
//! seed = 1
//! n_test = 200
//! output_dir = "run1"
//!
//! [problem]
//! kind = "diffusion"
//! elements_per_side = 32
//! k_side = 3
//!
//! [decomposition]
//! tol_index = 1e-4
//! nodes_per_dim = 5
//!
//! [training]
//! n_train = 30
//! pool_size = 1000
//! tol_pca = 1e-2
//!
//! [sgp]
//! budget = "matched"
//! ```
//!
//! Every section is optional; missing keys take their defaults.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::anova::{adaptive_decompose, DecomposeConfig, Decomposition, SimCache};
use crate::emulator::{
    assemble, train_all_locals, train_sgp, AnovaGpEmulator, EmulatorArchive, LocalConfig, SgpConfig,
    SgpEmulator,
};
use crate::error::{Error, Result};
use crate::seed;
use crate::simulators::{analytic_bank, DiffusionProblem, LinearSolver, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    Diffusion {
        elements_per_side: usize,
        k_side: usize,
        #[serde(default)]
        solver: LinearSolver,
    },
    Analytic {
        name: String,
        m: usize,
        output_dim: usize,
    },
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self::Diffusion {
            elements_per_side: 32,
            k_side: 3,
            solver: LinearSolver::default(),
        }
    }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Box<dyn Simulator>> {
        Ok(match self {
            Self::Diffusion {
                elements_per_side,
                k_side,
                solver,
            } => Box::new(DiffusionProblem::with_solver(*elements_per_side, *k_side, *solver)?),
            Self::Analytic { name, m, output_dim } => Box::new(analytic_bank(name, *m, *output_dim)?),
        })
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Diffusion {
                elements_per_side,
                k_side,
                ..
            } => format!(
                "diffusion, {0}x{0} nodes, {1} subdomains",
                elements_per_side + 1,
                k_side * k_side
            ),
            Self::Analytic { name, m, output_dim } => format!("analytic {name}, m = {m}, d = {output_dim}"),
        }
    }
}

/// Training-set size of the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SgpBudget {
    /// `n_train * (number of selected non-empty terms)`, at least `n_train`.
    #[default]
    Matched,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgpSection {
    pub enabled: bool,
    pub budget: SgpBudget,
    pub tol_pca: f64,
    pub chain_warm_start: bool,
    pub gp: crate::gp::GpConfig,
}

impl Default for SgpSection {
    fn default() -> Self {
        let base = SgpConfig::default();
        Self {
            enabled: true,
            budget: SgpBudget::Matched,
            tol_pca: base.tol_pca,
            chain_warm_start: base.chain_warm_start,
            gp: base.gp,
        }
    }
}

impl SgpSection {
    pub fn train_config(&self) -> SgpConfig {
        SgpConfig {
            tol_pca: self.tol_pca,
            gp: self.gp.clone(),
            chain_warm_start: self.chain_warm_start,
        }
    }

    pub fn budget_for(&self, n_train: usize, n_terms: usize) -> usize {
        match self.budget {
            SgpBudget::Matched => n_train * n_terms.max(1),
            SgpBudget::Fixed(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_test: usize,
    pub output_dir: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub decomposition: DecomposeConfig,
    pub training: LocalConfig,
    pub sgp: SgpSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_test: 200,
            output_dir: None,
            problem: ProblemSpec::default(),
            decomposition: DecomposeConfig::default(),
            training: LocalConfig::default(),
            sgp: SgpSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_test == 0 {
            return Err(Error::Config("n_test must be at least 1".into()));
        }
        self.decomposition.validate()?;
        self.training.validate()?;
        self.sgp.train_config().validate()?;
        if self.sgp.budget == SgpBudget::Fixed(0) {
            return Err(Error::Config("sgp.budget must be positive".into()));
        }
        self.problem.build().map_err(|e| Error::Config(format!("problem: {e}")))?;
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }
}

/// `||yp - y||^2 / ||y||^2`; `None` when `y` is zero.
pub fn relative_error(predicted: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    Error::check_len(truth.len(), predicted.len())?;
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if !(den > 0.0) {
        return Ok(None);
    }
    let num: f64 = predicted.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(Some(num / den))
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub count: usize,
    /// Test points where the error was undefined (zero truth).
    pub undefined: usize,
}

/// Quantile `p` of sorted data, interpolating between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(errors: &[Option<f64>]) -> Option<Summary> {
    let mut v: Vec<f64> = errors.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Summary {
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
        count: v.len(),
        undefined: errors.len() - v.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCounts {
    pub order: usize,
    pub candidates: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermModes {
    pub index: String,
    pub modes: usize,
    pub training_points: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallCounts {
    pub decomposition: usize,
    pub local_training: usize,
    pub sgp_training: usize,
    pub test_truth: usize,
    /// Distinct simulator solves; equals the cache miss count.
    pub total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub decomposition: f64,
    pub local_training: f64,
    pub sgp_training: f64,
    pub testing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodErrors {
    pub method: String,
    pub errors: Vec<Option<f64>>,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub problem: String,
    pub seed: u64,
    pub n_test: usize,
    pub term_counts: Vec<OrderCounts>,
    pub unscored_candidates: usize,
    /// Per selected non-empty term, in index order.
    pub term_modes: Vec<TermModes>,
    pub sgp_budget: Option<usize>,
    pub sgp_modes: Option<usize>,
    pub methods: Vec<MethodErrors>,
    pub simulator_calls: CallCounts,
    pub timings_seconds: Timings,
}

impl ExperimentReport {
    pub fn method(&self, name: &str) -> Option<&MethodErrors> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// `test_index,method,relative_error`; undefined errors are left empty.
    pub fn write_errors_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["test_index", "method", "relative_error"])?;
        for m in &self.methods {
            for (i, e) in m.errors.iter().enumerate() {
                let value = e.map(|v| v.to_string()).unwrap_or_default();
                out.write_record([i.to_string(), m.method.clone(), value])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

pub const ANOVA_GP: &str = "anova-gp";
pub const S_GP: &str = "s-gp";

/// Term-count table of a decomposition.
pub fn term_counts(dec: &Decomposition) -> Vec<OrderCounts> {
    let sel = &dec.selection;
    (1..=sel.candidate_counts.len())
        .map(|order| OrderCounts {
            order,
            candidates: sel.candidate_count(order),
            selected: sel.selected_count(order),
        })
        .collect()
}

pub fn term_modes(em: &AnovaGpEmulator) -> Vec<TermModes> {
    em.locals
        .iter()
        .map(|(t, l)| TermModes {
            index: t.label(),
            modes: l.rank(),
            training_points: l.training_inputs.len(),
        })
        .collect()
}

/// Everything produced by [`run_experiment`].
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub decomposition: Decomposition,
    pub anova_gp: AnovaGpEmulator,
    pub sgp: Option<SgpEmulator>,
}

/// Decomposes, trains the local emulators and assembles them.
pub fn build_anova_gp(
    sim: &dyn Simulator,
    config: &ExperimentConfig,
    cache: &SimCache,
) -> Result<(Decomposition, AnovaGpEmulator)> {
    let dec = adaptive_decompose(sim, &config.decomposition, cache).map_err(|e| e.at_stage("decompose"))?;
    let em = train_anova_gp(sim, config, &dec, cache)?;
    Ok((dec, em))
}

fn train_anova_gp(
    sim: &dyn Simulator,
    config: &ExperimentConfig,
    dec: &Decomposition,
    cache: &SimCache,
) -> Result<AnovaGpEmulator> {
    let locals = train_all_locals(
        &dec.selection,
        &dec.datasets,
        sim,
        &dec.anchor,
        cache,
        &config.training,
        config.seed,
    )
    .map_err(|e| e.at_stage("train"))?;
    assemble(&dec.selection, dec.anchor_output.clone(), locals, sim.input_dim()).map_err(|e| e.at_stage("assemble"))
}

/// Runs the full comparison. Artifacts are written to `output_dir` (if
/// set) as each stage completes; a failing stage leaves `error.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let result = run_stages(config);
    if let (Err(e), Some(dir)) = (&result, &config.output_dir) {
        let record = serde_json::json!({ "error": e.to_string() });
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("error.json"), record.to_string())?;
    }
    result
}

fn run_stages(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let sim = config.problem.build()?;
    let sim = sim.as_ref();
    let cache = SimCache::new();
    let dir = config.output_dir.as_deref();
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let mut calls = CallCounts::default();
    let mut timings = Timings::default();

    let clock = Instant::now();
    let dec = adaptive_decompose(sim, &config.decomposition, &cache).map_err(|e| e.at_stage("decompose"))?;
    timings.decomposition = clock.elapsed().as_secs_f64();
    calls.decomposition = cache.misses();
    log::info!("decomposition: {} terms, {} solves", dec.selection.len(), calls.decomposition);

    let clock = Instant::now();
    let anova_gp = train_anova_gp(sim, config, &dec, &cache)?;
    timings.local_training = clock.elapsed().as_secs_f64();
    calls.local_training = cache.misses() - calls.decomposition;
    if let Some(d) = dir {
        EmulatorArchive::anova_gp(anova_gp.clone())
            .save(&d.join("anova_gp.json"))
            .map_err(|e| e.at_stage("report"))?;
    }

    let n_terms = dec.selection.len() - 1;
    let mut sgp_budget = None;
    let sgp = if config.sgp.enabled {
        let n = config.sgp.budget_for(config.training.n_train, n_terms);
        sgp_budget = Some(n);
        let before = cache.misses();
        let clock = Instant::now();
        let s = seed::derive(config.seed, "sgp", &[]);
        let em = train_sgp(sim, n, &config.sgp.train_config(), &cache, s).map_err(|e| e.at_stage("sgp"))?;
        timings.sgp_training = clock.elapsed().as_secs_f64();
        calls.sgp_training = cache.misses() - before;
        if let Some(d) = dir {
            EmulatorArchive::sgp(em.clone())
                .save(&d.join("sgp.json"))
                .map_err(|e| e.at_stage("report"))?;
        }
        Some(em)
    } else {
        None
    };

    let clock = Instant::now();
    let before = cache.misses();
    let mut rng = seed::rng(seed::derive(config.seed, "test-points", &[]));
    let points: Vec<Vec<f64>> = (0..config.n_test).map(|_| sim.input_space().sample(&mut rng)).collect();
    let mut anova_errors = Vec::with_capacity(config.n_test);
    let mut sgp_errors = Vec::with_capacity(config.n_test);
    for x in &points {
        let truth = cache.evaluate(sim, x).map_err(|e| e.at_stage("test"))?;
        let p = anova_gp.predict_mean(x).map_err(|e| e.at_stage("test"))?;
        anova_errors.push(relative_error(&p, &truth)?);
        if let Some(em) = &sgp {
            let p = em.predict_mean(x).map_err(|e| e.at_stage("test"))?;
            sgp_errors.push(relative_error(&p, &truth)?);
        }
    }
    timings.testing = clock.elapsed().as_secs_f64();
    calls.test_truth = cache.misses() - before;
    calls.total = cache.misses();

    let mut methods = vec![MethodErrors {
        method: ANOVA_GP.into(),
        summary: summarize(&anova_errors),
        errors: anova_errors,
    }];
    if sgp.is_some() {
        methods.push(MethodErrors {
            method: S_GP.into(),
            summary: summarize(&sgp_errors),
            errors: sgp_errors,
        });
    }

    let report = ExperimentReport {
        problem: config.problem.describe(),
        seed: config.seed,
        n_test: config.n_test,
        term_counts: term_counts(&dec),
        unscored_candidates: dec.selection.unscored_candidates,
        term_modes: term_modes(&anova_gp),
        sgp_budget,
        sgp_modes: sgp.as_ref().map(SgpEmulator::rank),
        methods,
        simulator_calls: calls,
        timings_seconds: timings,
    };
    if let Some(d) = dir {
        let write = || -> Result<()> {
            report.write_errors_csv(std::fs::File::create(d.join("errors.csv"))?)?;
            std::fs::write(d.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            Ok(())
        };
        write().map_err(|e| e.at_stage("report"))?;
    }
    Ok(ExperimentOutcome {
        report,
        decomposition: dec,
        anova_gp,
        sgp,
    })
}
