//! L2 strength selection by first-order influence jackknife+ coverage.

use std::path::Path;

use crate::error::{Error, Result};
use crate::predictors::Predictor;

use super::config::{ExperimentConfig, Method};
use super::experiment::run_experiment;

pub const LAMBDA_GRID: [f64; 10] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 96.0, 128.0];
pub const COVERAGE_THRESHOLD: f64 = 0.875;

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    /// `(λ, mean coverage)` in grid order.
    pub coverages: Vec<(f64, f64)>,
    pub chosen: f64,
    /// False when no λ cleared the threshold and the largest was chosen.
    pub threshold_met: bool,
}

fn with_lambda(predictor: Predictor, lambda: f64) -> Result<Predictor> {
    match predictor {
        Predictor::Ridge(mut c) => {
            c.lambda = lambda;
            Ok(Predictor::Ridge(c))
        }
        Predictor::Mlp(mut c) => {
            c.l2_lambda = lambda;
            Ok(Predictor::Mlp(c))
        }
        Predictor::ConstantMean => Err(Error::UnsupportedFamily("constant-mean")),
    }
}

/// Smallest λ in `grid` whose mean jackknife-plus-if-1 coverage exceeds
/// the threshold, running the other settings of `cfg` unchanged.
pub fn tune_lambda(cfg: &ExperimentConfig, grid: &[f64]) -> Result<TuneOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    let method = Method::JackknifePlusIf(1);
    let mut coverages = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let run = ExperimentConfig {
            predictor: with_lambda(cfg.predictor, lambda)?,
            methods: vec![method],
            tau_grid: 0,
            ..cfg.clone()
        };
        let out = run_experiment(&run)?;
        if let Some(f) = out.failures.first() {
            return Err(f.error.clone());
        }
        let cov = out
            .mean_row(method)
            .and_then(|r| r.coverage)
            .ok_or(Error::EmptyTestSet)?;
        coverages.push((lambda, cov));
        if cov > COVERAGE_THRESHOLD {
            return Ok(TuneOutcome {
                coverages,
                chosen: lambda,
                threshold_met: true,
            });
        }
    }
    Ok(TuneOutcome {
        chosen: *grid.last().expect("nonempty"),
        coverages,
        threshold_met: false,
    })
}

/// Rewrites `path` with every `lambda=` line replaced by one final line.
pub fn write_lambda(path: &Path, lambda: f64) -> Result<()> {
    let text = if path.exists() {
        std::fs::read_to_string(path)?
    } else {
        String::new()
    };
    let mut out: String = text
        .lines()
        .filter(|l| l.split_once('=').map_or(true, |(k, _)| k.trim() != "lambda"))
        .flat_map(|l| [l, "\n"])
        .collect();
    out.push_str(&format!("lambda={lambda}\n"));
    std::fs::write(path, out)?;
    Ok(())
}
