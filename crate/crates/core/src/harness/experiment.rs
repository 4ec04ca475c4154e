//! Seeded replicated experiments producing one flat CSV schema.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audit::{
    cv_plus_error_assessment, jackknife_plus_error_assessment, jaw_error_assessment,
    split_error_assessment, weighted_split_error_assessment, ErrorCriteria,
};
use crate::empdist::{ExtReal, PredictionInterval};
use crate::error::{Error, Result};
use crate::iflow::approx_loo_models_from;
use crate::infer::{
    jackknife_interval, jackknife_mm_interval, jackknife_plus_interval, jaw_interval, CvPlus,
    LooArtifacts, LooModels, MethodRequest, NaiveConformal, SplitConformal,
};
use crate::metrics::{
    auroc, coverage, fraction_infinite, mean_and_standard_error, median_width, ReplicateResult,
};
use crate::predictors::{fit, predict, Dataset, ModelParams, Predictor};
use crate::shift::{effective_sample_size, normalize, oracle_weight, sample_shifted_test, ShiftSpec};
use crate::weights_est::{estimated_density_ratio, fit_ratio};

use super::config::{DatasetSource, ExperimentConfig, Method, WeightSource};
use super::data::{load_csv, Standardizer};

pub const COLUMNS: [&str; 10] = [
    "replicate",
    "method",
    "alpha",
    "coverage",
    "median_width",
    "frac_infinite",
    "ess",
    "runtime_ms",
    "tau",
    "auroc",
];

/// Seed of replicate `r`: stream `r` of a ChaCha8 generator keyed by the
/// master seed.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(r as u64);
    rng.next_u64()
}

/// Loads the configured dataset once; `None` for the synthetic generator,
/// which draws fresh data per replicate.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Option<Dataset>> {
    match &cfg.dataset {
        DatasetSource::Synthetic(_) => Ok(None),
        DatasetSource::Csv(path) => {
            let data = load_csv(path)?;
            Ok(Some(match cfg.max_rows {
                Some(m) if m < data.len() => data.subset(&(0..m).collect::<Vec<_>>()),
                _ => data,
            }))
        }
    }
}

/// One replicate's data after splitting, standardization, shift sampling
/// and weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedReplicate {
    pub replicate: usize,
    /// Seed handed to every fit of this replicate.
    pub fit_seed: u64,
    /// Standardized features; labels in model scale.
    pub train: Dataset,
    /// Standardized features; labels in the original scale.
    pub test: Dataset,
    /// Maps model-scale labels back to the original scale.
    pub labels: Standardizer,
    pub train_weights: Vec<f64>,
    pub test_weights: Vec<f64>,
    pub ess: f64,
}

impl PreparedReplicate {
    fn to_original(&self, v: f64) -> f64 {
        self.labels.invert(0, v)
    }

    fn interval_to_original(&self, iv: PredictionInterval) -> Result<PredictionInterval> {
        let map = |e: ExtReal| match e {
            ExtReal::Finite(v) => ExtReal::Finite(self.to_original(v)),
            inf => inf,
        };
        PredictionInterval::new(map(iv.lower), map(iv.upper))
    }
}

pub fn prepare_replicate(
    cfg: &ExperimentConfig,
    base: Option<&Dataset>,
    replicate: usize,
) -> Result<PreparedReplicate> {
    let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(cfg.seed, replicate));
    let data = match (&cfg.dataset, base) {
        (DatasetSource::Synthetic(spec), _) => spec.generate(&mut rng)?,
        (DatasetSource::Csv(_), Some(d)) => d.clone(),
        (DatasetSource::Csv(p), None) => {
            return Err(Error::InvalidDataset(format!("{} was not loaded", p.display())))
        }
    };
    if data.len() <= cfg.train_size {
        return Err(Error::InvalidDataset(format!(
            "{} rows leave no pool after {} training rows",
            data.len(),
            cfg.train_size
        )));
    }
    let dim = data.dim();
    let mut perm: Vec<usize> = (0..data.len()).collect();
    perm.shuffle(&mut rng);
    let (train_idx, pool_idx) = perm.split_at(cfg.train_size);
    let raw_train = data.subset(train_idx);
    let raw_pool = data.subset(pool_idx);

    let features = Standardizer::fit(raw_train.features(), dim);
    let labels = match cfg.predictor {
        Predictor::Mlp(_) => Standardizer::fit(raw_train.labels(), 1),
        _ => Standardizer::identity(1),
    };
    let train = Dataset::new(
        features.apply(raw_train.features()),
        labels.apply(raw_train.labels()),
        dim,
    )?;
    let pool = Dataset::new(features.apply(raw_pool.features()), raw_pool.labels().to_vec(), dim)?;

    let beta = if cfg.beta.is_empty() {
        vec![0.0; dim]
    } else {
        cfg.beta.clone()
    };
    let shift = ShiftSpec::new(beta, cfg.test_fraction, rng.next_u64())?;
    let m = shift.test_size(pool.len());
    if m == 0 {
        return Err(Error::EmptyTestSet);
    }
    let test = pool.subset(&sample_shifted_test(&pool, &shift, m)?);

    let (train_weights, test_weights) = match cfg.weights {
        WeightSource::Oracle => {
            let w = |d: &Dataset| {
                (0..d.len())
                    .map(|i| oracle_weight(&shift, d.row(i)))
                    .collect::<Result<Vec<_>>>()
            };
            (w(&train)?, w(&test)?)
        }
        WeightSource::Estimated => {
            let est = fit_ratio(train.features(), test.features(), dim, rng.next_u64())?;
            let w = |d: &Dataset| {
                (0..d.len())
                    .map(|i| estimated_density_ratio(&est, d.row(i)))
                    .collect::<Result<Vec<_>>>()
            };
            (w(&train)?, w(&test)?)
        }
    };
    let ess = effective_sample_size(&train_weights)?;
    Ok(PreparedReplicate {
        replicate,
        fit_seed: rng.next_u64(),
        train,
        test,
        labels,
        train_weights,
        test_weights,
        ess,
    })
}

/// Fitted artifacts of one replicate, built on first use. Each entry keeps
/// the wall-clock time it took to build, charged to every method using it.
struct Cache<'a> {
    predictor: &'a Predictor,
    prep: &'a PreparedReplicate,
    cv_folds: usize,
    full: Option<(ModelParams, Duration)>,
    exact: Option<(LooModels, Duration)>,
    approx: BTreeMap<usize, (LooModels, Duration)>,
    cv: Option<(CvPlus, Duration)>,
    split: Option<(SplitConformal, Duration)>,
    naive: Option<(NaiveConformal, Duration)>,
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, Duration)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed()))
}

impl<'a> Cache<'a> {
    fn new(predictor: &'a Predictor, prep: &'a PreparedReplicate, cv_folds: usize) -> Self {
        Self {
            predictor,
            prep,
            cv_folds,
            full: None,
            exact: None,
            approx: BTreeMap::new(),
            cv: None,
            split: None,
            naive: None,
        }
    }

    fn full(&mut self) -> Result<(&ModelParams, Duration)> {
        if self.full.is_none() {
            self.full = Some(timed(|| fit(self.predictor, &self.prep.train, self.prep.fit_seed))?);
        }
        let (m, d) = self.full.as_ref().expect("just built");
        Ok((m, *d))
    }

    fn exact(&mut self) -> Result<(&LooModels, Duration)> {
        if self.exact.is_none() {
            self.exact = Some(timed(|| {
                LooModels::fit(self.predictor, &self.prep.train, self.prep.fit_seed)
            })?);
        }
        let (m, d) = self.exact.as_ref().expect("just built");
        Ok((m, *d))
    }

    fn approx(&mut self, order: usize) -> Result<(&LooModels, Duration)> {
        if !self.approx.contains_key(&order) {
            let lambda = self.predictor.lambda()?;
            let (full, full_time) = self.full()?;
            let full = full.clone();
            let (models, time) = timed(|| {
                approx_loo_models_from(full, &self.prep.train, lambda, order, self.prep.fit_seed)
            })?;
            self.approx.insert(order, (models, full_time + time));
        }
        let (m, d) = &self.approx[&order];
        Ok((m, *d))
    }

    fn cv(&mut self) -> Result<(&CvPlus, Duration)> {
        if self.cv.is_none() {
            self.cv = Some(timed(|| {
                CvPlus::fit(self.predictor, &self.prep.train, self.cv_folds, self.prep.fit_seed)
            })?);
        }
        let (m, d) = self.cv.as_ref().expect("just built");
        Ok((m, *d))
    }

    fn split(&mut self) -> Result<(&SplitConformal, Duration)> {
        if self.split.is_none() {
            self.split = Some(timed(|| {
                SplitConformal::fit(self.predictor, &self.prep.train, self.prep.fit_seed)
            })?);
        }
        let (m, d) = self.split.as_ref().expect("just built");
        Ok((m, *d))
    }

    fn naive(&mut self) -> Result<(&NaiveConformal, Duration)> {
        if self.naive.is_none() {
            self.naive = Some(timed(|| {
                NaiveConformal::fit(self.predictor, &self.prep.train, self.prep.fit_seed)
            })?);
        }
        let (m, d) = self.naive.as_ref().expect("just built");
        Ok((m, *d))
    }

    /// LOO models for a jackknife-family method.
    fn loo_for(&mut self, method: Method) -> Result<(&LooModels, Duration)> {
        match method.if_order() {
            Some(k) => self.approx(k),
            None => self.exact(),
        }
    }
}

/// Outcome of one method on one replicate, in the original label scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub result: ReplicateResult,
    pub runtime: Duration,
    /// `(τ, AUROC)`; AUROC is `None` when every test point has the same label.
    pub tau_auroc: Vec<(f64, Option<f64>)>,
}

/// Lower empirical quantile `v_(⌈p·n⌉)`.
fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

/// `points` tolerances evenly spaced between the 0.05 and 0.95 quantiles of
/// `residuals`.
pub fn tau_grid(residuals: &[f64], points: usize) -> Vec<f64> {
    if points == 0 || residuals.is_empty() {
        return Vec::new();
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = empirical_quantile(&sorted, 0.05);
    let hi = empirical_quantile(&sorted, 0.95);
    if points == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn uses_exact_loo(m: Method) -> bool {
    matches!(
        m,
        Method::Jaw | Method::Jackknife | Method::JackknifePlus | Method::JackknifeMm
    )
}

/// Reference LOO residuals (original scale) for the τ grid: exact when any
/// configured method builds exact LOO models or the family is not
/// differentiable, otherwise the lowest configured influence order.
fn reference_residuals(cfg: &ExperimentConfig, cache: &mut Cache) -> Result<Vec<f64>> {
    let lowest_order = cfg.methods.iter().filter_map(|m| m.if_order()).min();
    let exact = cfg.methods.iter().any(|m| uses_exact_loo(*m))
        || cfg.predictor.lambda().is_err()
        || lowest_order.is_none();
    let scale = cache.prep.labels.scale[0];
    let models = if exact {
        cache.exact()?.0
    } else {
        cache.approx(lowest_order.expect("checked above"))?.0
    };
    Ok(models.loo_residuals.iter().map(|r| r * scale).collect())
}

struct PointOutcome {
    interval: PredictionInterval,
    reference: f64,
    p_no_error: Vec<f64>,
}

fn jackknife_point(
    method: Method,
    a: &LooArtifacts,
    alpha: f64,
    weights: &crate::shift::NormalizedWeights,
    crits: &[ErrorCriteria],
) -> Result<(PredictionInterval, Vec<f64>)> {
    let interval = match method {
        Method::Jackknife | Method::JackknifeIf(_) => jackknife_interval(a, alpha)?,
        Method::JackknifeMm | Method::JackknifeMmIf(_) => jackknife_mm_interval(a, alpha)?,
        Method::JackknifePlus | Method::JackknifePlusIf(_) => jackknife_plus_interval(a, alpha)?,
        _ => jaw_interval(
            a,
            &MethodRequest {
                alpha,
                weights: weights.clone(),
            },
        )?,
    };
    let scores = if method.supports_assessment() {
        crits
            .iter()
            .map(|c| {
                Ok(match method {
                    Method::Jaw | Method::Jawa(_) => jaw_error_assessment(a, weights, c)?,
                    _ => jackknife_plus_error_assessment(a, c)?,
                }
                .p_no_error)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok((interval, scores))
}

fn evaluate_point(
    method: Method,
    cache: &mut Cache,
    j: usize,
    alpha: f64,
    crits: &[ErrorCriteria],
) -> Result<PointOutcome> {
    let prep = cache.prep;
    let x = prep.test.row(j);
    let w = prep.test_weights[j];
    let assess = method.supports_assessment();
    match method {
        Method::Naive => {
            let naive = cache.naive()?.0;
            Ok(PointOutcome {
                interval: naive.interval(x, alpha)?,
                reference: predict(&naive.model, x)?,
                p_no_error: Vec::new(),
            })
        }
        Method::CvPlus => {
            let full_pred = predict(cache.full()?.0, x)?;
            let cv = cache.cv()?.0;
            let p_no_error = crits
                .iter()
                .map(|c| Ok(cv_plus_error_assessment(cv, x, full_pred, c)?.p_no_error))
                .collect::<Result<Vec<_>>>()?;
            Ok(PointOutcome {
                interval: cv.interval(x, alpha)?,
                reference: full_pred,
                p_no_error,
            })
        }
        Method::Split | Method::WeightedSplit => {
            let split = cache.split()?.0;
            let weighted = method == Method::WeightedSplit;
            let interval = if weighted {
                split.weighted_interval(x, alpha, &prep.train_weights, w)?
            } else {
                split.interval(x, alpha)?
            };
            let p_no_error = crits
                .iter()
                .filter(|_| assess)
                .map(|c| {
                    Ok(if weighted {
                        weighted_split_error_assessment(split, &prep.train_weights, w, c)?
                    } else {
                        split_error_assessment(split, c)?
                    }
                    .p_no_error)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PointOutcome {
                interval,
                reference: predict(&split.model, x)?,
                p_no_error,
            })
        }
        _ => {
            let a = cache.loo_for(method)?.0.artifacts(x)?;
            let weights = if method.is_weighted() {
                normalize(&prep.train_weights, w)?
            } else {
                crate::shift::NormalizedWeights::uniform(a.len())
            };
            let (interval, p_no_error) = jackknife_point(method, &a, alpha, &weights, crits)?;
            Ok(PointOutcome {
                interval,
                reference: a.full_pred_at_test,
                p_no_error,
            })
        }
    }
}

fn build_time(cache: &mut Cache, method: Method) -> Result<Duration> {
    Ok(match method {
        Method::Naive => cache.naive()?.1,
        Method::CvPlus => cache.cv()?.1 + cache.full()?.1,
        Method::Split | Method::WeightedSplit => cache.split()?.1,
        m => cache.loo_for(m)?.1,
    })
}

fn evaluate_method(
    method: Method,
    cache: &mut Cache,
    alpha: f64,
    taus: &[f64],
) -> Result<MethodOutcome> {
    let prep = cache.prep;
    let scale = prep.labels.scale[0];
    let crits = if method.supports_assessment() {
        taus.iter()
            .map(|t| ErrorCriteria::absolute(t / scale))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let build = build_time(cache, method)?;
    let start = Instant::now();
    let m = prep.test.len();
    let mut intervals = Vec::with_capacity(m);
    let mut references = Vec::with_capacity(m);
    let mut scores = vec![Vec::with_capacity(m); crits.len()];
    for j in 0..m {
        let p = evaluate_point(method, cache, j, alpha, &crits)?;
        intervals.push(prep.interval_to_original(p.interval)?);
        references.push(prep.to_original(p.reference));
        for (s, v) in scores.iter_mut().zip(p.p_no_error) {
            s.push(v);
        }
    }
    let runtime = build + start.elapsed();
    let result = ReplicateResult::from_intervals(&intervals, prep.test.labels())?;
    let tau_auroc = taus
        .iter()
        .zip(&scores)
        .map(|(tau, s)| {
            let labels: Vec<bool> = references
                .iter()
                .zip(prep.test.labels())
                .map(|(r, y)| (y - r).abs() <= *tau)
                .collect();
            match auroc(s, &labels) {
                Ok(v) => Ok((*tau, Some(v))),
                Err(Error::UndefinedAuroc(_)) => Ok((*tau, None)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MethodOutcome {
        method,
        result,
        runtime,
        tau_auroc,
    })
}

/// Runs every configured method on one prepared replicate. Stops at the
/// first failing method.
pub fn run_methods(
    cfg: &ExperimentConfig,
    prep: &PreparedReplicate,
) -> std::result::Result<Vec<MethodOutcome>, (Method, Error)> {
    let mut cache = Cache::new(&cfg.predictor, prep, cfg.cv_folds);
    let taus = if cfg.tau_grid > 0 && cfg.methods.iter().any(|m| m.supports_assessment()) {
        let first = cfg.methods[0];
        let residuals = reference_residuals(cfg, &mut cache).map_err(|e| (first, e))?;
        tau_grid(&residuals, cfg.tau_grid)
    } else {
        Vec::new()
    };
    cfg.methods
        .iter()
        .map(|m| evaluate_method(*m, &mut cache, cfg.alpha, &taus).map_err(|e| (*m, e)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowKey {
    Replicate(usize),
    Mean,
    StdErr,
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowKey::Replicate(r) => write!(f, "{r}"),
            RowKey::Mean => write!(f, "mean"),
            RowKey::StdErr => write!(f, "se"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputRow {
    pub replicate: RowKey,
    pub method: String,
    pub alpha: f64,
    pub coverage: Option<f64>,
    pub median_width: Option<f64>,
    pub frac_infinite: Option<f64>,
    pub ess: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub tau: Option<f64>,
    pub auroc: Option<f64>,
    /// Position of `tau` in the replicate's grid; aggregates group on it.
    pub tau_index: Option<usize>,
}

impl OutputRow {
    fn blank(replicate: RowKey, method: String, alpha: f64) -> Self {
        Self {
            replicate,
            method,
            alpha,
            coverage: None,
            median_width: None,
            frac_infinite: None,
            ess: None,
            runtime_ms: None,
            tau: None,
            auroc: None,
            tau_index: None,
        }
    }

    fn sort_key(&self) -> (RowKey, &str, Option<f64>) {
        (self.replicate, &self.method, self.tau)
    }

    fn numeric(&self) -> [Option<f64>; 6] {
        [
            self.coverage,
            self.median_width,
            self.frac_infinite,
            self.ess,
            self.runtime_ms,
            self.auroc,
        ]
    }

    fn with_numeric(mut self, v: [Option<f64>; 6]) -> Self {
        [
            self.coverage,
            self.median_width,
            self.frac_infinite,
            self.ess,
            self.runtime_ms,
            self.auroc,
        ] = v;
        self
    }

    pub fn fields(&self) -> [String; 10] {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        [
            self.replicate.to_string(),
            self.method.clone(),
            self.alpha.to_string(),
            opt(self.coverage),
            opt(self.median_width),
            opt(self.frac_infinite),
            opt(self.ess),
            opt(self.runtime_ms),
            opt(self.tau),
            opt(self.auroc),
        ]
    }
}

fn compare_rows(a: &OutputRow, b: &OutputRow) -> std::cmp::Ordering {
    let (ra, ma, ta) = a.sort_key();
    let (rb, mb, tb) = b.sort_key();
    ra.cmp(&rb).then(ma.cmp(mb)).then(match (ta, tb) {
        (None, None) => std::cmp::Ordering::Equal,
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    })
    .then(a.tau_index.cmp(&b.tau_index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateFailure {
    pub replicate: usize,
    /// `None` when the failure happened before any method ran.
    pub method: Option<Method>,
    pub error: Error,
}

impl fmt::Display for ReplicateFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.method {
            Some(m) => write!(f, "replicate {} method {m}: {}", self.replicate, self.error),
            None => write!(f, "replicate {}: {}", self.replicate, self.error),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Sorted by (replicate, method, τ); aggregate rows last.
    pub rows: Vec<OutputRow>,
    pub failures: Vec<ReplicateFailure>,
}

impl ExperimentOutput {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(COLUMNS).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.fields()).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }

    /// Per-replicate rows of `method` without a τ.
    pub fn replicate_rows(&self, method: Method) -> impl Iterator<Item = &OutputRow> {
        let name = method.to_string();
        self.rows.iter().filter(move |r| {
            matches!(r.replicate, RowKey::Replicate(_)) && r.method == name && r.tau.is_none()
        })
    }

    /// The aggregate `mean` row of `method` without a τ.
    pub fn mean_row(&self, method: Method) -> Option<&OutputRow> {
        let name = method.to_string();
        self.rows
            .iter()
            .find(|r| r.replicate == RowKey::Mean && r.method == name && r.tau.is_none())
    }
}

fn replicate_rows(
    cfg: &ExperimentConfig,
    prep: &PreparedReplicate,
    outcomes: &[MethodOutcome],
) -> Result<Vec<OutputRow>> {
    let key = RowKey::Replicate(prep.replicate);
    let mut rows = Vec::new();
    for o in outcomes {
        let name = o.method.to_string();
        let mut row = OutputRow::blank(key, name.clone(), cfg.alpha);
        row.coverage = Some(coverage(&o.result)?);
        row.median_width = Some(median_width(&o.result)?.to_f64());
        row.frac_infinite = Some(fraction_infinite(&o.result)?);
        row.ess = Some(prep.ess);
        row.runtime_ms = cfg.timing.then(|| o.runtime.as_secs_f64() * 1e3);
        rows.push(row);
        for (k, (tau, auroc)) in o.tau_auroc.iter().enumerate() {
            let mut row = OutputRow::blank(key, name.clone(), cfg.alpha);
            row.tau = Some(*tau);
            row.tau_index = Some(k);
            row.auroc = *auroc;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Mean and standard error per column, grouped by method and τ-grid
/// position; τ itself is averaged. A column with any infinite value gets
/// mean `+inf` and no standard error.
fn aggregate(rows: &[OutputRow], alpha: f64) -> Vec<OutputRow> {
    let mut groups: BTreeMap<(String, Option<usize>), Vec<&OutputRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method.clone(), r.tau_index)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((method, _), members) in groups {
        let mut mean = [None; 6];
        let mut se = [None; 6];
        for c in 0..6 {
            let values: Vec<f64> = members.iter().filter_map(|r| r.numeric()[c]).collect();
            if values.iter().any(|v| v.is_infinite()) {
                mean[c] = Some(f64::INFINITY);
            } else if let Some((m, s)) = mean_and_standard_error(&values) {
                mean[c] = Some(m);
                se[c] = Some(s);
            }
        }
        let taus: Vec<f64> = members.iter().filter_map(|r| r.tau).collect();
        let tau = mean_and_standard_error(&taus).map(|(m, _)| m);
        let tau_index = members[0].tau_index;
        for (key, v) in [(RowKey::Mean, mean), (RowKey::StdErr, se)] {
            let mut row = OutputRow::blank(key, method.clone(), alpha).with_numeric(v);
            row.tau = tau;
            row.tau_index = tau_index;
            out.push(row);
        }
    }
    out
}

/// Runs all replicates on a pool of `cfg.workers` threads. Failed
/// replicates contribute no rows and are reported in `failures`; errors
/// that precede every replicate are returned directly.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let base = load_dataset(cfg)?;
    let dim = base.as_ref().map_or(1, Dataset::dim);
    if !cfg.beta.is_empty() && cfg.beta.len() != dim {
        return Err(Error::InvalidConfig(format!(
            "beta has {} entries for {dim} features",
            cfg.beta.len()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let per_replicate: Vec<std::result::Result<Vec<OutputRow>, ReplicateFailure>> =
        pool.install(|| {
            (0..cfg.replicates)
                .into_par_iter()
                .map(|r| {
                    let fail = |method, error| ReplicateFailure {
                        replicate: r,
                        method,
                        error,
                    };
                    let prep = prepare_replicate(cfg, base.as_ref(), r).map_err(|e| fail(None, e))?;
                    let outcomes = run_methods(cfg, &prep).map_err(|(m, e)| fail(Some(m), e))?;
                    replicate_rows(cfg, &prep, &outcomes).map_err(|e| fail(None, e))
                })
                .collect()
        });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in per_replicate {
        match r {
            Ok(v) => rows.extend(v),
            Err(f) => failures.push(f),
        }
    }
    rows.sort_by(compare_rows);
    let mut agg = aggregate(&rows, cfg.alpha);
    agg.sort_by(compare_rows);
    rows.extend(agg);
    Ok(ExperimentOutput { rows, failures })
}
