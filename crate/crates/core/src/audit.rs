//! Error assessment: the smallest miscoverage level whose interval fits
//! inside a user tolerance, and the resulting no-error probability.

use crate::empdist::{
    mass_strictly_above, mass_strictly_below, ExtReal, WeightedAtoms, LEVEL_SLACK,
};
use crate::error::{Error, Result};
use crate::iflow::approx_loo_models;
use crate::infer::{CvPlus, LooArtifacts, SplitConformal};
use crate::predictors::{Dataset, Predictor};
use crate::shift::{normalize, NormalizedWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    /// `y - μ̂(x)`
    SignedResidual,
    /// `|y - μ̂(x)|`
    AbsoluteResidual,
}

/// No-error set `{y : τ⁻ ≤ S(x, y) ≤ τ⁺}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorCriteria {
    pub kind: ScoreKind,
    pub tau_minus: ExtReal,
    pub tau_plus: ExtReal,
}

impl ErrorCriteria {
    pub fn signed(tau_minus: ExtReal, tau_plus: ExtReal) -> Result<Self> {
        if tau_minus > tau_plus || tau_minus == ExtReal::PosInf || tau_plus == ExtReal::NegInf {
            return Err(Error::InvalidConfig(format!(
                "tolerance [{tau_minus}, {tau_plus}] is empty"
            )));
        }
        Ok(Self {
            kind: ScoreKind::SignedResidual,
            tau_minus,
            tau_plus,
        })
    }

    /// `|y - μ̂(x)| ≤ τ`.
    pub fn absolute(tau: f64) -> Result<Self> {
        if !(tau >= 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance {tau} must be >= 0")));
        }
        Ok(Self {
            kind: ScoreKind::AbsoluteResidual,
            tau_minus: ExtReal::Finite(0.0),
            tau_plus: ExtReal::from_f64(tau)?,
        })
    }

    /// Bounds on `y - μ̂(x)`.
    pub fn signed_bounds(&self) -> (ExtReal, ExtReal) {
        match self.kind {
            ScoreKind::SignedResidual => (self.tau_minus, self.tau_plus),
            ScoreKind::AbsoluteResidual => (negate(self.tau_plus), self.tau_plus),
        }
    }

    /// Largest `τ` with `[μ̂ - τ, μ̂ + τ]` inside the no-error set.
    pub fn absolute_bound(&self) -> ExtReal {
        match self.kind {
            ScoreKind::AbsoluteResidual => self.tau_plus,
            ScoreKind::SignedResidual => negate(self.tau_minus).min(self.tau_plus),
        }
    }
}

fn negate(v: ExtReal) -> ExtReal {
    match v {
        ExtReal::NegInf => ExtReal::PosInf,
        ExtReal::PosInf => ExtReal::NegInf,
        ExtReal::Finite(x) => ExtReal::Finite(-x),
    }
}

/// Coverage guarantee `1 - c1 α - c2` of the generating method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuaranteeSpec {
    pub c1: f64,
    pub c2: f64,
}

impl GuaranteeSpec {
    pub const JACKKNIFE_PLUS: Self = Self { c1: 2.0, c2: 0.0 };
    pub const SPLIT: Self = Self { c1: 1.0, c2: 0.0 };

    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 > 0.0 && c2 >= 0.0) {
            return Err(Error::InvalidConfig(format!("guarantee ({c1}, {c2})")));
        }
        Ok(Self { c1, c2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaE {
    pub value: f64,
    /// Whether the interval at level `value` itself fits; otherwise `value`
    /// is an infimum over feasible levels.
    pub attained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorAssessment {
    pub alpha_e: Option<AlphaE>,
    pub p_no_error: f64,
    pub guaranteed_lower_bound: f64,
}

/// `inf {α' : [Q⁻_α'(lower), Q⁺_{1-α'}(upper)] ⊆ [τ⁻, τ⁺]}`.
///
/// Feasible levels are `α' > t_L` and `α' ≥ t_U`, with `t_L` the lower mass
/// strictly below `τ⁻` and `t_U` the upper mass strictly above `τ⁺`. `None`
/// when `t_L ≥ 1`.
pub fn alpha_e(
    lower: &WeightedAtoms,
    upper: &WeightedAtoms,
    tau_minus: ExtReal,
    tau_plus: ExtReal,
) -> Result<Option<AlphaE>> {
    if lower.pos_inf_mass() > 0.0 {
        return Err(Error::InvalidAtom("lower atoms carry mass at +inf".into()));
    }
    if upper.neg_inf_mass() > 0.0 {
        return Err(Error::InvalidAtom("upper atoms carry mass at -inf".into()));
    }
    let t_lower = mass_strictly_below(lower, tau_minus);
    let t_upper = mass_strictly_above(upper, tau_plus);
    if t_lower >= 1.0 - LEVEL_SLACK {
        return Ok(None);
    }
    Ok(Some(AlphaE {
        value: t_lower.max(t_upper).min(1.0),
        attained: t_upper > t_lower + LEVEL_SLACK,
    }))
}

pub fn assess(alpha: Option<AlphaE>, spec: GuaranteeSpec) -> ErrorAssessment {
    match alpha {
        None => ErrorAssessment {
            alpha_e: None,
            p_no_error: 0.0,
            guaranteed_lower_bound: 0.0,
        },
        Some(a) => ErrorAssessment {
            alpha_e: Some(a),
            p_no_error: 1.0 - a.value,
            guaranteed_lower_bound: if a.value < (1.0 - spec.c2) / spec.c1 {
                (1.0 - spec.c1 * a.value - spec.c2).max(0.0)
            } else {
                0.0
            },
        },
    }
}

/// Score-space atoms `μ̂_{-i}(X_{n+1}) - μ̂(X_{n+1}) ∓ R_i` with the test
/// mass on the infinite tails.
pub fn jackknife_score_atoms(
    centers: &[f64],
    residuals: &[f64],
    full_pred: f64,
    weights: &NormalizedWeights,
) -> Result<(WeightedAtoms, WeightedAtoms)> {
    if centers.len() != residuals.len() || centers.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} centers, {} residuals, {} weights",
            centers.len(),
            residuals.len(),
            weights.len()
        )));
    }
    let lo: Vec<f64> = centers.iter().zip(residuals).map(|(c, r)| c - full_pred - r).collect();
    let hi: Vec<f64> = centers.iter().zip(residuals).map(|(c, r)| c - full_pred + r).collect();
    Ok((
        WeightedAtoms::from_parts(&lo, &weights.train, weights.test, 0.0)?,
        WeightedAtoms::from_parts(&hi, &weights.train, 0.0, weights.test)?,
    ))
}

/// Split atoms in absolute-residual space: lower atoms all at `0`, upper at
/// the holdout residuals.
pub fn split_score_atoms(
    residuals: &[f64],
    weights: &NormalizedWeights,
) -> Result<(WeightedAtoms, WeightedAtoms)> {
    if residuals.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} residuals, {} weights",
            residuals.len(),
            weights.len()
        )));
    }
    Ok((
        WeightedAtoms::from_parts(&vec![0.0; residuals.len()], &weights.train, weights.test, 0.0)?,
        WeightedAtoms::from_parts(residuals, &weights.train, 0.0, weights.test)?,
    ))
}

fn assess_jackknife_family(
    centers: &[f64],
    residuals: &[f64],
    full_pred: f64,
    weights: &NormalizedWeights,
    crit: &ErrorCriteria,
) -> Result<ErrorAssessment> {
    let (lo, hi) = jackknife_score_atoms(centers, residuals, full_pred, weights)?;
    let (tm, tp) = crit.signed_bounds();
    Ok(assess(alpha_e(&lo, &hi, tm, tp)?, GuaranteeSpec::JACKKNIFE_PLUS))
}

pub fn jaw_error_assessment(
    loo: &LooArtifacts,
    weights: &NormalizedWeights,
    crit: &ErrorCriteria,
) -> Result<ErrorAssessment> {
    assess_jackknife_family(
        &loo.loo_pred_at_test,
        &loo.loo_residuals,
        loo.full_pred_at_test,
        weights,
        crit,
    )
}

pub fn jackknife_plus_error_assessment(
    loo: &LooArtifacts,
    crit: &ErrorCriteria,
) -> Result<ErrorAssessment> {
    jaw_error_assessment(loo, &NormalizedWeights::uniform(loo.len()), crit)
}

/// JAW assessment on influence-approximated LOO artifacts.
#[allow(clippy::too_many_arguments)]
pub fn jawa_error_assessment(
    predictor: &Predictor,
    data: &Dataset,
    test_x: &[f64],
    weights: &NormalizedWeights,
    crit: &ErrorCriteria,
    order: usize,
    seed: u64,
) -> Result<ErrorAssessment> {
    let models = approx_loo_models(predictor, data, order, seed)?;
    jaw_error_assessment(&models.artifacts(test_x)?, weights, crit)
}

/// CV+ scores are taken relative to `full_pred`, the full-data model at the
/// test point.
pub fn cv_plus_error_assessment(
    cv: &CvPlus,
    test_x: &[f64],
    full_pred: f64,
    crit: &ErrorCriteria,
) -> Result<ErrorAssessment> {
    let centers = cv.centers(test_x)?;
    assess_jackknife_family(
        &centers,
        &cv.residuals,
        full_pred,
        &NormalizedWeights::uniform(centers.len()),
        crit,
    )
}

fn assess_split(residuals: &[f64], weights: &NormalizedWeights, crit: &ErrorCriteria) -> Result<ErrorAssessment> {
    let (lo, hi) = split_score_atoms(residuals, weights)?;
    Ok(assess(
        alpha_e(&lo, &hi, ExtReal::Finite(0.0), crit.absolute_bound())?,
        GuaranteeSpec::SPLIT,
    ))
}

pub fn split_error_assessment(split: &SplitConformal, crit: &ErrorCriteria) -> Result<ErrorAssessment> {
    assess_split(&split.residuals, &NormalizedWeights::uniform(split.residuals.len()), crit)
}

/// `train_weights` covers every training row; only calibration rows are used.
pub fn weighted_split_error_assessment(
    split: &SplitConformal,
    train_weights: &[f64],
    test_weight: f64,
    crit: &ErrorCriteria,
) -> Result<ErrorAssessment> {
    let calib = split
        .calibration
        .iter()
        .map(|&i| {
            train_weights
                .get(i)
                .copied()
                .ok_or_else(|| Error::LengthMismatch(format!("no weight for training row {i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    assess_split(&split.residuals, &normalize(&calib, test_weight)?, crit)
}
