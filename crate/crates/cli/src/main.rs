//! `anova-gp`: build, benchmark and query ANOVA-GP emulators.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use anova_gp_core::anova::{adaptive_decompose, SimCache};
use anova_gp_core::emulator::ArchivedModel;
use anova_gp_core::experiment::{
    build_anova_gp, run_experiment, term_counts, term_modes, ExperimentConfig, ExperimentReport, ANOVA_GP,
};
use anova_gp_core::{EmulatorArchive, Error};

#[derive(Parser)]
#[command(name = "anova-gp", version, about = "ANOVA-GP surrogate models for parametric simulators")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive decomposition and print the term table.
    Decompose(RunArgs),
    /// Build the ANOVA-GP emulator (and the S-GP baseline if enabled) and save the archives.
    Train(RunArgs),
    /// Full comparison: train both emulators and score them on random test inputs.
    Benchmark(RunArgs),
    /// Predictive means of a saved emulator at the points of a file.
    Predict {
        #[arg(long)]
        emulator: PathBuf,
        /// Points as CSV rows, or TOML/JSON with a `points` array.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Print the term table and retained PCA modes of a saved emulator.
    Inspect {
        #[arg(long)]
        emulator: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    kind: &'a str,
    stage: Option<&'a str>,
    message: String,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid-argument",
        Error::DimensionMismatch { .. } => "dimension-mismatch",
        Error::Simulator { .. } => "simulator",
        Error::DegenerateReference { .. } => "degenerate-reference",
        Error::IllConditionedKernel => "ill-conditioned-kernel",
        Error::TrainingFailed(_) => "training-failed",
        Error::UndefinedIndicator => "undefined-indicator",
        Error::Solver(_) => "solver",
        Error::DecompositionAborted { .. } => "decomposition-aborted",
        Error::Stage { source, .. } => error_kind(source),
        Error::Config(_) => "config",
        Error::Archive(_) => "archive",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

fn report_error(e: &Error) -> ExitCode {
    let stage = match e {
        Error::Stage { stage, .. } => Some(*stage),
        _ => None,
    };
    let kind = error_kind(e);
    let record = ErrorRecord {
        kind,
        stage,
        message: e.to_string(),
    };
    eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
    if kind == "config" {
        ExitCode::from(2)
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli.command, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read {}: {io}", args.config.display())),
        other => other,
    })?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: Command, out: &mut dyn Write) -> Result<(), Error> {
    match cmd {
        Command::Decompose(args) => decompose(&args, out),
        Command::Train(args) => train(&args, out),
        Command::Benchmark(args) => benchmark(&args, out),
        Command::Predict {
            emulator,
            config,
            format,
        } => predict(&emulator, &config, format, out),
        Command::Inspect { emulator, format } => inspect(&emulator, format, out),
    }
}

fn decompose(args: &RunArgs, out: &mut dyn Write) -> Result<(), Error> {
    let cfg = load_config(args)?;
    let sim = cfg.problem.build()?;
    let cache = SimCache::new();
    let dec = adaptive_decompose(sim.as_ref(), &cfg.decomposition, &cache).map_err(|e| e.at_stage("decompose"))?;
    let counts = term_counts(&dec);
    let weights: Vec<_> = dec
        .selection
        .weights
        .iter()
        .map(|(t, w)| serde_json::json!({ "index": t.label(), "weight": w, "selected": dec.selection.contains(t) }))
        .collect();
    let doc = serde_json::json!({
        "problem": cfg.problem.describe(),
        "term_counts": counts,
        "unscored_candidates": dec.selection.unscored_candidates,
        "simulator_calls": cache.misses(),
        "weights": weights,
    });
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("decomposition.json"), serde_json::to_string_pretty(&doc)?)?;
    }
    match args.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?,
        Format::Csv => {
            let mut w = csv_writer(out);
            w.write_record(["order", "candidates", "selected"])?;
            for c in &counts {
                w.write_record([c.order.to_string(), c.candidates.to_string(), c.selected.to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn csv_writer(out: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::Writer::from_writer(out)
}

fn train(args: &RunArgs, out: &mut dyn Write) -> Result<(), Error> {
    let cfg = load_config(args)?;
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("train needs --out or output_dir".into()))?;
    std::fs::create_dir_all(&dir)?;
    let sim = cfg.problem.build()?;
    let cache = SimCache::new();
    let (dec, em) = build_anova_gp(sim.as_ref(), &cfg, &cache)?;
    let modes = term_modes(&em);
    EmulatorArchive::anova_gp(em).save(&dir.join("anova_gp.json"))?;
    let mut sgp_modes = None;
    if cfg.sgp.enabled {
        let n = cfg.sgp.budget_for(cfg.training.n_train, dec.selection.len() - 1);
        let s = anova_gp_core::seed::derive(cfg.seed, "sgp", &[]);
        let sgp = anova_gp_core::emulator::train_sgp(sim.as_ref(), n, &cfg.sgp.train_config(), &cache, s)
            .map_err(|e| e.at_stage("sgp"))?;
        sgp_modes = Some(sgp.rank());
        EmulatorArchive::sgp(sgp).save(&dir.join("sgp.json"))?;
    }
    match args.format {
        Format::Json => {
            let doc = serde_json::json!({
                "term_counts": term_counts(&dec),
                "term_modes": modes,
                "sgp_modes": sgp_modes,
                "simulator_calls": cache.misses(),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        Format::Csv => write_modes_csv(out, &modes)?,
    }
    Ok(())
}

fn write_modes_csv(out: &mut dyn Write, modes: &[anova_gp_core::experiment::TermModes]) -> Result<(), Error> {
    let mut w = csv_writer(out);
    w.write_record(["index", "modes", "training_points"])?;
    for m in modes {
        w.write_record([m.index.clone(), m.modes.to_string(), m.training_points.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn benchmark(args: &RunArgs, out: &mut dyn Write) -> Result<(), Error> {
    let cfg = load_config(args)?;
    let outcome = run_experiment(&cfg)?;
    print_report(&outcome.report, args.format, out)
}

fn print_report(report: &ExperimentReport, format: Format, out: &mut dyn Write) -> Result<(), Error> {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(report)?)?,
        Format::Csv => {
            let mut w = csv_writer(out);
            w.write_record(["method", "min", "q1", "median", "q3", "max", "undefined"])?;
            for m in &report.methods {
                let Some(s) = &m.summary else {
                    w.write_record([m.method.as_str(), "", "", "", "", "", &m.errors.len().to_string()])?;
                    continue;
                };
                w.write_record([
                    m.method.clone(),
                    s.min.to_string(),
                    s.q1.to_string(),
                    s.median.to_string(),
                    s.q3.to_string(),
                    s.max.to_string(),
                    s.undefined.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct PointsFile {
    points: Vec<Vec<f64>>,
}

fn read_points(path: &Path) -> Result<Vec<Vec<f64>>, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let points = match ext {
        "csv" => {
            let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
            let mut points = Vec::new();
            for (i, rec) in rd.records().enumerate() {
                let rec = rec?;
                let row: Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
                match row {
                    Ok(r) => points.push(r),
                    // A non-numeric first row is a header.
                    Err(_) if i == 0 => {}
                    Err(e) => return Err(Error::Config(format!("row {}: {e}", i + 1))),
                }
            }
            points
        }
        "json" => serde_json::from_str::<PointsFile>(&text)
            .map_err(|e| Error::Config(e.to_string()))?
            .points,
        _ => toml::from_str::<PointsFile>(&text)
            .map_err(|e| Error::Config(e.to_string()))?
            .points,
    };
    if points.is_empty() {
        return Err(Error::Config(format!("{} contains no points", path.display())));
    }
    Ok(points)
}

fn predict(emulator: &Path, points: &Path, format: Format, out: &mut dyn Write) -> Result<(), Error> {
    let archive = EmulatorArchive::load(emulator)?;
    let points = read_points(points)?;
    let preds = points
        .iter()
        .map(|x| archive.predict_mean(x))
        .collect::<Result<Vec<_>, _>>()?;
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string(&preds)?)?,
        Format::Csv => {
            let mut w = csv_writer(out);
            let d = preds[0].len();
            let mut header = vec!["point".to_string()];
            header.extend((0..d).map(|k| format!("y{k}")));
            w.write_record(&header)?;
            for (i, p) in preds.iter().enumerate() {
                let mut row = vec![i.to_string()];
                row.extend(p.iter().map(f64::to_string));
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn inspect(emulator: &Path, format: Format, out: &mut dyn Write) -> Result<(), Error> {
    let archive = EmulatorArchive::load(emulator)?;
    match (&archive.model, format) {
        (ArchivedModel::AnovaGp(em), Format::Csv) => write_modes_csv(out, &term_modes(em))?,
        (ArchivedModel::AnovaGp(em), Format::Json) => {
            let sel = &em.selection;
            let orders: Vec<_> = (0..sel.orders.len())
                .map(|i| serde_json::json!({ "order": i, "candidates": sel.candidate_count(i), "selected": sel.selected_count(i) }))
                .collect();
            let doc = serde_json::json!({
                "kind": ANOVA_GP,
                "input_dim": em.input_dim(),
                "output_dim": em.output_dim(),
                "term_counts": orders,
                "term_modes": term_modes(em),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        (ArchivedModel::Sgp(em), Format::Csv) => {
            let mut w = csv_writer(out);
            w.write_record(["index", "modes", "training_points"])?;
            w.write_record(["all".to_string(), em.rank().to_string(), em.training_inputs.len().to_string()])?;
            w.flush()?;
        }
        (ArchivedModel::Sgp(em), Format::Json) => {
            let doc = serde_json::json!({
                "kind": anova_gp_core::experiment::S_GP,
                "input_dim": em.input_dim(),
                "modes": em.rank(),
                "training_points": em.training_inputs.len(),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
    }
    Ok(())
}
