//! Interval generation: naive, jackknife, jackknife+, jackknife-minmax,
//! CV+, split, weighted split and JAW.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::empdist::{quantile_minus, quantile_plus, ExtReal, PredictionInterval, WeightedAtoms};
use crate::error::{Error, Result};
use crate::predictors::{fit, predict, Dataset, ModelParams, Predictor};
use crate::shift::{normalize, NormalizedWeights};

/// Leave-one-out predictions and residuals for one test point.
#[derive(Debug, Clone, PartialEq)]
pub struct LooArtifacts {
    /// `μ̂_{-i}(X_i)`
    pub loo_pred_at_train: Vec<f64>,
    /// `μ̂_{-i}(X_{n+1})`
    pub loo_pred_at_test: Vec<f64>,
    /// `|Y_i - μ̂_{-i}(X_i)|`
    pub loo_residuals: Vec<f64>,
    /// `μ̂(X_{n+1})`
    pub full_pred_at_test: f64,
}

impl LooArtifacts {
    pub fn len(&self) -> usize {
        self.loo_residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loo_residuals.is_empty()
    }
}

/// The full model and the `n` leave-one-out models, reusable across test
/// points.
#[derive(Debug, Clone, PartialEq)]
pub struct LooModels {
    pub full: ModelParams,
    pub loo: Vec<ModelParams>,
    pub loo_pred_at_train: Vec<f64>,
    pub loo_residuals: Vec<f64>,
}

impl LooModels {
    /// `n + 1` fits, all with the same seed. LOO fits run in parallel and are
    /// collected in index order.
    pub fn fit(predictor: &Predictor, data: &Dataset, seed: u64) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::InvalidDataset(
                "leave-one-out needs at least two rows".into(),
            ));
        }
        let full = fit(predictor, data, seed)?;
        let loo = (0..data.len())
            .into_par_iter()
            .map(|i| {
                fit(predictor, &data.without(i), seed).map_err(|e| Error::LooFit {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_params(full, loo, data)
    }

    /// Assembles LOO artifacts from externally computed parameters (e.g.
    /// influence-function approximations).
    pub fn from_params(full: ModelParams, loo: Vec<ModelParams>, data: &Dataset) -> Result<Self> {
        if loo.len() != data.len() {
            return Err(Error::LengthMismatch(format!(
                "{} leave-one-out models for {} rows",
                loo.len(),
                data.len()
            )));
        }
        let loo_pred_at_train = loo
            .iter()
            .enumerate()
            .map(|(i, m)| predict(m, data.row(i)))
            .collect::<Result<Vec<_>>>()?;
        let loo_residuals = loo_pred_at_train
            .iter()
            .zip(data.labels())
            .map(|(p, y)| (y - p).abs())
            .collect();
        Ok(Self {
            full,
            loo,
            loo_pred_at_train,
            loo_residuals,
        })
    }

    pub fn len(&self) -> usize {
        self.loo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loo.is_empty()
    }

    pub fn artifacts(&self, test_x: &[f64]) -> Result<LooArtifacts> {
        Ok(LooArtifacts {
            loo_pred_at_train: self.loo_pred_at_train.clone(),
            loo_pred_at_test: self
                .loo
                .iter()
                .map(|m| predict(m, test_x))
                .collect::<Result<Vec<_>>>()?,
            loo_residuals: self.loo_residuals.clone(),
            full_pred_at_test: predict(&self.full, test_x)?,
        })
    }
}

/// Leave-one-out artifacts for a single test point.
pub fn compute_loo(
    predictor: &Predictor,
    data: &Dataset,
    test_x: &[f64],
    seed: u64,
) -> Result<LooArtifacts> {
    LooModels::fit(predictor, data, seed)?.artifacts(test_x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRequest {
    pub alpha: f64,
    pub weights: NormalizedWeights,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// `[Q⁻_α {p_i δ_{c_i - r_i}} , Q⁺_{1-α} {p_i δ_{c_i + r_i}}]` with the test
/// mass on the infinite tails.
pub fn weighted_jackknife_interval(
    centers: &[f64],
    residuals: &[f64],
    weights: &NormalizedWeights,
    alpha: f64,
) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    if centers.len() != residuals.len() || centers.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} centers, {} residuals, {} weights",
            centers.len(),
            residuals.len(),
            weights.len()
        )));
    }
    let lower_values: Vec<f64> = centers.iter().zip(residuals).map(|(c, r)| c - r).collect();
    let upper_values: Vec<f64> = centers.iter().zip(residuals).map(|(c, r)| c + r).collect();
    let lower = WeightedAtoms::from_parts(&lower_values, &weights.train, weights.test, 0.0)?;
    let upper = WeightedAtoms::from_parts(&upper_values, &weights.train, 0.0, weights.test)?;
    PredictionInterval::new(
        quantile_minus(&lower, alpha)?,
        quantile_plus(&upper, 1.0 - alpha)?,
    )
}

fn require_two(loo: &LooArtifacts) -> Result<()> {
    if loo.len() < 2 {
        return Err(Error::InvalidDataset(
            "jackknife intervals need at least two training points".into(),
        ));
    }
    Ok(())
}

/// JAW: jackknife+ with normalized likelihood-ratio weights.
pub fn jaw_interval(loo: &LooArtifacts, req: &MethodRequest) -> Result<PredictionInterval> {
    weighted_jackknife_interval(&loo.loo_pred_at_test, &loo.loo_residuals, &req.weights, req.alpha)
}

pub fn jackknife_plus_interval(loo: &LooArtifacts, alpha: f64) -> Result<PredictionInterval> {
    require_two(loo)?;
    jaw_interval(
        loo,
        &MethodRequest {
            alpha,
            weights: NormalizedWeights::uniform(loo.len()),
        },
    )
}

/// Classic jackknife: every atom centered at the full-model prediction.
pub fn jackknife_interval(loo: &LooArtifacts, alpha: f64) -> Result<PredictionInterval> {
    require_two(loo)?;
    let centers = vec![loo.full_pred_at_test; loo.len()];
    weighted_jackknife_interval(
        &centers,
        &loo.loo_residuals,
        &NormalizedWeights::uniform(loo.len()),
        alpha,
    )
}

/// Upper `1 - α` quantile of `{r_i}` with masses `p_i` and `p_test` at `+∞`.
fn residual_quantile(residuals: &[f64], weights: &NormalizedWeights, alpha: f64) -> Result<ExtReal> {
    let d = WeightedAtoms::from_parts(residuals, &weights.train, 0.0, weights.test)?;
    quantile_plus(&d, 1.0 - alpha)
}

fn symmetric(center_lo: f64, center_hi: f64, half_width: ExtReal) -> Result<PredictionInterval> {
    match half_width {
        ExtReal::Finite(q) => PredictionInterval::new(
            ExtReal::Finite(center_lo - q),
            ExtReal::Finite(center_hi + q),
        ),
        _ => Ok(PredictionInterval::unbounded()),
    }
}

/// `[min_i μ̂_{-i}(X_{n+1}) - Q⁺, max_i μ̂_{-i}(X_{n+1}) + Q⁺]`.
pub fn jackknife_mm_interval(loo: &LooArtifacts, alpha: f64) -> Result<PredictionInterval> {
    require_two(loo)?;
    check_alpha(alpha)?;
    let q = residual_quantile(&loo.loo_residuals, &NormalizedWeights::uniform(loo.len()), alpha)?;
    let lo = loo.loo_pred_at_test.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = loo.loo_pred_at_test.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    symmetric(lo, hi, q)
}

/// K-fold cross-validation+ with fold models fit once.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlus {
    pub fold_of: Vec<usize>,
    pub fold_models: Vec<ModelParams>,
    pub residuals: Vec<f64>,
}

/// Seeded assignment of `n` rows to `k` folds of near-equal size.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::FoldsOutOfRange { k, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(fold_of)
}

impl CvPlus {
    pub fn fit(predictor: &Predictor, data: &Dataset, k: usize, seed: u64) -> Result<Self> {
        let fold_of = fold_assignment(data.len(), k, seed)?;
        let fold_models = (0..k)
            .into_par_iter()
            .map(|f| {
                let keep: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != f).collect();
                fit(predictor, &data.subset(&keep), seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let residuals = (0..data.len())
            .map(|i| Ok((data.label(i) - predict(&fold_models[fold_of[i]], data.row(i))?).abs()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fold_of,
            fold_models,
            residuals,
        })
    }

    pub fn interval(&self, test_x: &[f64], alpha: f64) -> Result<PredictionInterval> {
        let centers = self.centers(test_x)?;
        weighted_jackknife_interval(
            &centers,
            &self.residuals,
            &NormalizedWeights::uniform(self.residuals.len()),
            alpha,
        )
    }

    /// `μ̂_{-fold(i)}(X_{n+1})` for every training row.
    pub fn centers(&self, test_x: &[f64]) -> Result<Vec<f64>> {
        let per_fold = self
            .fold_models
            .iter()
            .map(|m| predict(m, test_x))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.fold_of.iter().map(|&f| per_fold[f]).collect())
    }
}

pub fn cv_plus_interval(
    predictor: &Predictor,
    data: &Dataset,
    test_x: &[f64],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<PredictionInterval> {
    CvPlus::fit(predictor, data, k, seed)?.interval(test_x, alpha)
}

/// Split conformal: fit on `⌊n/2⌋` seeded rows, calibrate on the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitConformal {
    pub model: ModelParams,
    /// Indices (into the training data) of the calibration rows.
    pub calibration: Vec<usize>,
    pub residuals: Vec<f64>,
}

impl SplitConformal {
    pub fn fit(predictor: &Predictor, data: &Dataset, seed: u64) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::InvalidDataset("split needs at least two rows".into()));
        }
        let mut perm: Vec<usize> = (0..data.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (train, calib) = perm.split_at(data.len() / 2);
        let model = fit(predictor, &data.subset(train), seed)?;
        let residuals = calib
            .iter()
            .map(|&i| Ok((data.label(i) - predict(&model, data.row(i))?).abs()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            calibration: calib.to_vec(),
            residuals,
        })
    }

    pub fn interval(&self, test_x: &[f64], alpha: f64) -> Result<PredictionInterval> {
        let ones = vec![1.0; self.residuals.len()];
        self.interval_with_calibration_weights(test_x, alpha, &ones, 1.0)
    }

    /// Weighted split: `train_weights` are likelihood ratios for every row
    /// of the training data; only calibration rows and the test point enter
    /// the normalization.
    pub fn weighted_interval(
        &self,
        test_x: &[f64],
        alpha: f64,
        train_weights: &[f64],
        test_weight: f64,
    ) -> Result<PredictionInterval> {
        let calib_w: Vec<f64> = self
            .calibration
            .iter()
            .map(|&i| {
                train_weights.get(i).copied().ok_or_else(|| {
                    Error::LengthMismatch(format!("no weight for training row {i}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.interval_with_calibration_weights(test_x, alpha, &calib_w, test_weight)
    }

    pub fn normalized_weights(&self, calib_w: &[f64], test_weight: f64) -> Result<NormalizedWeights> {
        normalize(calib_w, test_weight)
    }

    fn interval_with_calibration_weights(
        &self,
        test_x: &[f64],
        alpha: f64,
        calib_w: &[f64],
        test_weight: f64,
    ) -> Result<PredictionInterval> {
        check_alpha(alpha)?;
        let weights = normalize(calib_w, test_weight)?;
        let q = residual_quantile(&self.residuals, &weights, alpha)?;
        let center = predict(&self.model, test_x)?;
        symmetric(center, center, q)
    }
}

pub fn split_interval(
    predictor: &Predictor,
    data: &Dataset,
    test_x: &[f64],
    alpha: f64,
    seed: u64,
) -> Result<PredictionInterval> {
    SplitConformal::fit(predictor, data, seed)?.interval(test_x, alpha)
}

pub fn weighted_split_interval(
    predictor: &Predictor,
    data: &Dataset,
    test_x: &[f64],
    alpha: f64,
    seed: u64,
    train_weights: &[f64],
    test_weight: f64,
) -> Result<PredictionInterval> {
    SplitConformal::fit(predictor, data, seed)?.weighted_interval(
        test_x,
        alpha,
        train_weights,
        test_weight,
    )
}

/// In-sample residual quantile around the full fit.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveConformal {
    pub model: ModelParams,
    pub residuals: Vec<f64>,
}

impl NaiveConformal {
    pub fn fit(predictor: &Predictor, data: &Dataset, seed: u64) -> Result<Self> {
        let model = fit(predictor, data, seed)?;
        let residuals = (0..data.len())
            .map(|i| Ok((data.label(i) - predict(&model, data.row(i))?).abs()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, residuals })
    }

    pub fn interval(&self, test_x: &[f64], alpha: f64) -> Result<PredictionInterval> {
        check_alpha(alpha)?;
        let q = residual_quantile(
            &self.residuals,
            &NormalizedWeights::uniform(self.residuals.len()),
            alpha,
        )?;
        let center = predict(&self.model, test_x)?;
        symmetric(center, center, q)
    }
}

pub fn naive_interval(
    predictor: &Predictor,
    data: &Dataset,
    test_x: &[f64],
    alpha: f64,
    seed: u64,
) -> Result<PredictionInterval> {
    NaiveConformal::fit(predictor, data, seed)?.interval(test_x, alpha)
}
