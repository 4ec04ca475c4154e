//! Weighted empirical distributions over the extended reals and the two
//! quantile operators every interval in the crate is built from.
//!
//! A [`WeightedAtoms`] holds finitely many point masses at real values plus
//! optional mass at `-inf` and `+inf`. Both [`quantile_plus`] and
//! [`quantile_minus`] use the left-continuous generalized inverse
//! `inf { v : F(v) >= beta }`; they differ only in which tail the caller is
//! expected to load with mass.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Slack used when comparing a cumulative mass against a quantile level, so
/// that e.g. ten masses of `0.1` reach level `1.0`.
pub const LEVEL_SLACK: f64 = 1e-12;

/// A value in `R ∪ {-inf, +inf}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    /// Maps IEEE infinities onto the tagged variants. NaN is rejected.
    pub fn from_f64(v: f64) -> Result<Self> {
        if v.is_nan() {
            Err(Error::InvalidAtom("NaN is not an extended real".into()))
        } else if v == f64::INFINITY {
            Ok(ExtReal::PosInf)
        } else if v == f64::NEG_INFINITY {
            Ok(ExtReal::NegInf)
        } else {
            Ok(ExtReal::Finite(v))
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    fn rank(self) -> u8 {
        match self {
            ExtReal::NegInf => 0,
            ExtReal::Finite(_) => 1,
            ExtReal::PosInf => 2,
        }
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl From<f64> for ExtReal {
    /// Panics on NaN; use [`ExtReal::from_f64`] for untrusted input.
    fn from(v: f64) -> Self {
        ExtReal::from_f64(v).expect("NaN converted to ExtReal")
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "inf"),
        }
    }
}

/// Closed interval `[lower, upper]` over the extended reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lower: ExtReal,
    pub upper: ExtReal,
}

impl PredictionInterval {
    pub fn new(lower: ExtReal, upper: ExtReal) -> Result<Self> {
        if lower == ExtReal::PosInf || upper == ExtReal::NegInf || lower > upper {
            return Err(Error::InvalidAtom(format!(
                "interval endpoints out of order: [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded() -> Self {
        Self {
            lower: ExtReal::NegInf,
            upper: ExtReal::PosInf,
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        let y = ExtReal::Finite(y);
        self.lower <= y && y <= self.upper
    }

    /// `true` when `other` is a subset of `self`.
    pub fn contains_interval(&self, other: &PredictionInterval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }

    /// `upper - lower`, `+inf` if either endpoint is infinite.
    pub fn width(&self) -> ExtReal {
        match (self.lower, self.upper) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(b - a),
            _ => ExtReal::PosInf,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

/// A finite discrete distribution of point masses with optional tail mass
/// at `-inf` and `+inf`.
///
/// Atoms are stored sorted by value with equal values merged, so every
/// query is independent of the order the atoms were supplied in.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAtoms {
    atoms: Vec<(f64, f64)>,
    neg_inf_mass: f64,
    pos_inf_mass: f64,
}

impl WeightedAtoms {
    pub fn new(
        atoms: impl IntoIterator<Item = (f64, f64)>,
        neg_inf_mass: f64,
        pos_inf_mass: f64,
    ) -> Result<Self> {
        let mut raw: Vec<(f64, f64)> = atoms.into_iter().collect();
        for &(v, m) in &raw {
            if !v.is_finite() {
                return Err(Error::InvalidAtom(format!(
                    "atom value {v} must be finite; use the tail masses"
                )));
            }
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidAtom(format!("atom mass {m} must be >= 0")));
            }
        }
        for m in [neg_inf_mass, pos_inf_mass] {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::InvalidAtom(format!("tail mass {m} must be >= 0")));
            }
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (v, m) in raw {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += m,
                _ => merged.push((v, m)),
            }
        }
        let total = neg_inf_mass + merged.iter().map(|a| a.1).sum::<f64>() + pos_inf_mass;
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Unnormalized { total });
        }
        Ok(Self {
            atoms: merged,
            neg_inf_mass,
            pos_inf_mass,
        })
    }

    /// Atoms `values[i]` each carrying `masses[i]`.
    pub fn from_parts(
        values: &[f64],
        masses: &[f64],
        neg_inf_mass: f64,
        pos_inf_mass: f64,
    ) -> Result<Self> {
        if values.len() != masses.len() {
            return Err(Error::LengthMismatch(format!(
                "{} values vs {} masses",
                values.len(),
                masses.len()
            )));
        }
        Self::new(
            values.iter().copied().zip(masses.iter().copied()),
            neg_inf_mass,
            pos_inf_mass,
        )
    }

    /// Sorted, merged `(value, mass)` pairs.
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn neg_inf_mass(&self) -> f64 {
        self.neg_inf_mass
    }

    pub fn pos_inf_mass(&self) -> f64 {
        self.pos_inf_mass
    }

    /// `inf { v : F(v) >= beta }` over the full extended-real CDF.
    fn generalized_inverse(&self, beta: f64) -> Result<ExtReal> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidLevel(beta));
        }
        let target = beta - LEVEL_SLACK;
        let mut cumulative = self.neg_inf_mass;
        if self.neg_inf_mass > 0.0 && cumulative >= target {
            return Ok(ExtReal::NegInf);
        }
        for &(v, m) in &self.atoms {
            cumulative += m;
            if m > 0.0 && cumulative >= target {
                return Ok(ExtReal::Finite(v));
            }
        }
        Ok(ExtReal::PosInf)
    }
}

/// Level-`beta` quantile of a distribution whose tail mass sits at `+inf`.
///
/// Returns `+inf` when only the `+inf` atom reaches `beta`.
pub fn quantile_plus(d: &WeightedAtoms, beta: f64) -> Result<ExtReal> {
    d.generalized_inverse(beta)
}

/// Level-`beta` quantile of a distribution whose tail mass sits at `-inf`.
///
/// Returns `-inf` when the `-inf` mass alone reaches `beta`.
pub fn quantile_minus(d: &WeightedAtoms, beta: f64) -> Result<ExtReal> {
    d.generalized_inverse(beta)
}

/// `negInfMass + Σ { m : (v, m) atom, v < t }`.
pub fn mass_strictly_below(d: &WeightedAtoms, t: ExtReal) -> f64 {
    match t {
        ExtReal::NegInf => 0.0,
        ExtReal::PosInf => d.neg_inf_mass + d.atoms.iter().map(|a| a.1).sum::<f64>(),
        ExtReal::Finite(t) => {
            d.neg_inf_mass + d.atoms.iter().take_while(|a| a.0 < t).map(|a| a.1).sum::<f64>()
        }
    }
}

/// `posInfMass + Σ { m : (v, m) atom, v > t }`.
pub fn mass_strictly_above(d: &WeightedAtoms, t: ExtReal) -> f64 {
    match t {
        ExtReal::PosInf => 0.0,
        ExtReal::NegInf => d.pos_inf_mass + d.atoms.iter().map(|a| a.1).sum::<f64>(),
        ExtReal::Finite(t) => {
            d.pos_inf_mass
                + d.atoms
                    .iter()
                    .rev()
                    .take_while(|a| a.0 > t)
                    .map(|a| a.1)
                    .sum::<f64>()
        }
    }
}
