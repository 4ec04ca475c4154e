//! `jawbench`: replicated coverage/width/AUROC experiments and λ tuning.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jaw_core::harness::tune::LAMBDA_GRID;
use jaw_core::harness::{run_experiment, tune_lambda, write_lambda, ExperimentConfig, RawConfig};
use jaw_core::Error;

#[derive(Parser)]
#[command(name = "jawbench", version, about = "Jackknife+ under covariate shift: benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated experiment and write the result CSV.
    Run(Overrides),
    /// Grid-search the L2 strength and write `lambda=` into the config file.
    TuneLambda {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated grid; defaults to 0.5,1,2,4,8,16,32,64,96,128.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
    },
}

#[derive(Args, Default)]
struct Overrides {
    /// key=value config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV path (header row, last column is the label) or `synthetic`.
    #[arg(long)]
    dataset: Option<String>,
    /// Comma-separated methods, e.g. `jaw,jawa,jackknife-plus,split`.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    #[arg(long)]
    train_size: Option<String>,
    /// Comma-separated tilting vector on standardized features.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    /// `oracle` or `estimated`.
    #[arg(long)]
    weights: Option<String>,
    /// `ridge`, `mlp` or `constant-mean`.
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Comma-separated influence orders in 1..=3.
    #[arg(long)]
    if_order: Option<String>,
    #[arg(long)]
    cv_folds: Option<String>,
    /// Number of τ values for error-assessment AUROC rows (0 disables).
    #[arg(long)]
    tau_grid: Option<String>,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    max_rows: Option<String>,
    /// Record wall-clock milliseconds (output is then not reproducible).
    #[arg(long)]
    timing: bool,
}

impl Overrides {
    fn raw(&self) -> Result<RawConfig, Error> {
        let mut raw = match &self.config {
            Some(p) => RawConfig::read(p)?,
            None => RawConfig::default(),
        };
        let flags = [
            ("dataset", &self.dataset),
            ("methods", &self.methods),
            ("alpha", &self.alpha),
            ("replicates", &self.replicates),
            ("train-size", &self.train_size),
            ("beta", &self.beta),
            ("weights", &self.weights),
            ("predictor", &self.predictor),
            ("lambda", &self.lambda),
            ("if-order", &self.if_order),
            ("cv-folds", &self.cv_folds),
            ("tau-grid", &self.tau_grid),
            ("out", &self.out),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("max-rows", &self.max_rows),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                raw.set(key, vec![v.clone()]);
            }
        }
        if self.timing {
            raw.set("timing", vec!["true".into()]);
        }
        Ok(raw)
    }

    fn config(&self) -> Result<ExperimentConfig, Error> {
        ExperimentConfig::from_raw(&self.raw()?)
    }
}

fn config_error(e: Error) -> ExitCode {
    eprintln!("jawbench: {e}");
    ExitCode::from(2)
}

fn run(overrides: &Overrides) -> ExitCode {
    let cfg = match overrides.config() {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let out = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => return config_error(e),
    };
    for f in &out.failures {
        eprintln!("jawbench: aborted {f}");
    }
    let written = match &cfg.out {
        Some(path) => std::fs::File::create(path)
            .map_err(Error::from)
            .and_then(|f| out.write_csv(std::io::BufWriter::new(f))),
        None => out.write_csv(std::io::stdout().lock()),
    };
    if let Err(e) = written {
        eprintln!("jawbench: {e}");
        return ExitCode::from(1);
    }
    if out.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn tune(overrides: &Overrides, grid: Option<&str>) -> ExitCode {
    let Some(path) = &overrides.config else {
        return config_error(Error::InvalidConfig("tune-lambda needs --config to write to".into()));
    };
    let cfg = match overrides.config() {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let grid: Vec<f64> = match grid {
        None => LAMBDA_GRID.to_vec(),
        Some(g) => match g.split(',').map(|v| v.trim().parse::<f64>()).collect() {
            Ok(v) => v,
            Err(_) => return config_error(Error::InvalidConfig(format!("grid: cannot parse {g:?}"))),
        },
    };
    let outcome = match tune_lambda(&cfg, &grid) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("jawbench: {e}");
            return ExitCode::from(1);
        }
    };
    for (lambda, cov) in &outcome.coverages {
        println!("lambda={lambda} coverage={cov}");
    }
    if !outcome.threshold_met {
        eprintln!("jawbench: no lambda reached the coverage threshold; using the largest");
    }
    if let Err(e) = write_lambda(path, outcome.chosen) {
        eprintln!("jawbench: {e}");
        return ExitCode::from(1);
    }
    println!("chosen lambda={}", outcome.chosen);
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(o) => run(o),
        Command::TuneLambda { overrides, grid } => tune(overrides, grid.as_deref()),
    }
}
