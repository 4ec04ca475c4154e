//! Likelihood-ratio estimation by probabilistic classification.
//!
//! A logistic regression separates training rows (class 0) from test rows
//! (class 1); its odds `p̂(x) / (1 - p̂(x))` are proportional to the density
//! ratio `dP̃_X / dP_X`, and the constant cancels once weights are
//! normalized.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jet::Scalar;

pub const DEFAULT_CLIP: f64 = 0.01;
const L2_PENALTY: f64 = 1e-4;
const GRAD_TOLERANCE: f64 = 1e-6;
const MAX_ITER: usize = 100_000;
const DIVERGENCE_NORM: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimator {
    /// Feature weights followed by the intercept.
    pub coef: Vec<f64>,
    pub clip_epsilon: f64,
    /// `#train / #test`; multiplying the odds by it recovers the ratio itself.
    pub odds_scale: f64,
}

impl RatioEstimator {
    pub fn new(coef: Vec<f64>, clip_epsilon: f64, odds_scale: f64) -> Result<Self> {
        if !(clip_epsilon > 0.0 && clip_epsilon < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "clip epsilon {clip_epsilon} outside (0, 0.5)"
            )));
        }
        if coef.is_empty() || coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("classifier parameters must be finite".into()));
        }
        Ok(Self {
            coef,
            clip_epsilon,
            odds_scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.coef.len() - 1
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(logit(&self.coef, x))
    }

    /// Classifier probability that `x` came from the test distribution.
    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        Ok(Scalar::logistic(self.logit(x)?))
    }
}

fn logit(coef: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    coef[d] + coef[..d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
}

/// Fits the train-vs-test classifier by gradient descent on the mean
/// log-loss plus a small fixed L2 term. `train` and `test` are row-major
/// with `dim` columns.
pub fn fit_ratio(train: &[f64], test: &[f64], dim: usize, seed: u64) -> Result<RatioEstimator> {
    if dim == 0 || train.is_empty() || test.is_empty() {
        return Err(Error::InvalidDataset("both samples must be nonempty".into()));
    }
    if train.len() % dim != 0 || test.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: train.len() % dim + test.len() % dim,
        });
    }
    let n0 = train.len() / dim;
    let n1 = test.len() / dim;
    let total = (n0 + n1) as f64;
    let rows = || {
        train
            .chunks(dim)
            .map(|r| (r, 0.0))
            .chain(test.chunks(dim).map(|r| (r, 1.0)))
    };

    // Lipschitz constant of the gradient: 0.25 λ_max(ZᵀZ / N) + penalty,
    // with Z the design augmented by a constant column.
    let p = dim + 1;
    let mut gram = vec![0.0; p * p];
    for (r, _) in rows() {
        for a in 0..p {
            let za = if a < dim { r[a] } else { 1.0 };
            for b in 0..p {
                let zb = if b < dim { r[b] } else { 1.0 };
                gram[a * p + b] += za * zb / total;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut top = 0.0;
    for _ in 0..100 {
        let w: Vec<f64> = (0..p).map(|a| (0..p).map(|b| gram[a * p + b] * v[b]).sum()).collect();
        top = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if top == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / top).collect();
    }
    let step = 1.0 / (0.25 * top * 1.01 + L2_PENALTY);

    let mut coef = vec![0.0; p];
    let mut grad = vec![0.0; p];
    for _ in 0..MAX_ITER {
        grad.iter_mut().zip(&coef).for_each(|(g, c)| *g = L2_PENALTY * c);
        for (r, label) in rows() {
            let resid = Scalar::logistic(logit(&coef, r)) - label;
            for a in 0..dim {
                grad[a] += resid * r[a] / total;
            }
            grad[dim] += resid / total;
        }
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() <= GRAD_TOLERANCE {
            break;
        }
        for (c, g) in coef.iter_mut().zip(&grad) {
            *c -= step * g;
        }
        let norm = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Separation { norm });
        }
    }
    let separated = train.chunks(dim).all(|r| logit(&coef, r) < 0.0)
        && test.chunks(dim).all(|r| logit(&coef, r) > 0.0);
    if separated {
        let norm = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
        return Err(Error::Separation { norm });
    }
    RatioEstimator::new(coef, DEFAULT_CLIP, n0 as f64 / n1 as f64)
}

/// Odds `p̂ / (1 - p̂)` with `p̂` clipped to `[ε, 1 - ε]`.
pub fn estimated_weight(est: &RatioEstimator, x: &[f64]) -> Result<f64> {
    Ok(clipped_odds(est.probability(x)?, est.clip_epsilon))
}

/// Estimated density ratio: the clipped odds times the class-size ratio.
pub fn estimated_density_ratio(est: &RatioEstimator, x: &[f64]) -> Result<f64> {
    Ok(estimated_weight(est, x)? * est.odds_scale)
}

pub fn clipped_odds(p: f64, eps: f64) -> f64 {
    let p = p.clamp(eps, 1.0 - eps);
    p / (1.0 - p)
}
