//! Coverage, width and AUROC summaries of experiment replicates.

use crate::empdist::{ExtReal, PredictionInterval};
use crate::error::{Error, Result};

/// Per-test-point outcomes of one replicate of one method.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicateResult {
    pub covered: Vec<bool>,
    pub widths: Vec<ExtReal>,
    pub p_no_error: Option<Vec<f64>>,
    pub no_error: Option<Vec<bool>>,
}

impl ReplicateResult {
    pub fn new(
        covered: Vec<bool>,
        widths: Vec<ExtReal>,
        p_no_error: Option<Vec<f64>>,
        no_error: Option<Vec<bool>>,
    ) -> Result<Self> {
        let n = covered.len();
        let bad = widths.len() != n
            || p_no_error.as_ref().is_some_and(|s| s.len() != n)
            || no_error.as_ref().is_some_and(|s| s.len() != n);
        if bad {
            return Err(Error::LengthMismatch("replicate columns differ in length".into()));
        }
        Ok(Self {
            covered,
            widths,
            p_no_error,
            no_error,
        })
    }

    pub fn from_intervals(intervals: &[PredictionInterval], labels: &[f64]) -> Result<Self> {
        if intervals.len() != labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} intervals for {} labels",
                intervals.len(),
                labels.len()
            )));
        }
        Ok(Self {
            covered: intervals.iter().zip(labels).map(|(i, y)| i.contains(*y)).collect(),
            widths: intervals.iter().map(PredictionInterval::width).collect(),
            p_no_error: None,
            no_error: None,
        })
    }

    pub fn len(&self) -> usize {
        self.covered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covered.is_empty()
    }
}

pub fn coverage(result: &ReplicateResult) -> Result<f64> {
    if result.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    Ok(result.covered.iter().filter(|c| **c).count() as f64 / result.len() as f64)
}

/// Lower median of the widths; infinite widths sort last.
pub fn median_width(result: &ReplicateResult) -> Result<ExtReal> {
    if result.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut w = result.widths.clone();
    w.sort();
    Ok(w[(w.len() - 1) / 2])
}

pub fn fraction_infinite(result: &ReplicateResult) -> Result<f64> {
    if result.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    Ok(result.widths.iter().filter(|w| !w.is_finite()).count() as f64 / result.len() as f64)
}

/// Population variance.
pub fn coverage_variance(coverages: &[f64]) -> Result<f64> {
    if coverages.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let n = coverages.len() as f64;
    let mean = coverages.iter().sum::<f64>() / n;
    Ok(coverages.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n)
}

/// Mann-Whitney AUROC with ties counted one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidConfig("NaN score".into()));
    }
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return Err(Error::UndefinedAuroc("no positive labels"));
    }
    if negatives == 0 {
        return Err(Error::UndefinedAuroc("no negative labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    // count negatives strictly below each positive, ties as 1/2
    let mut wins = 0.0;
    let mut negatives_below = 0usize;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let group = &order[start..end];
        let pos = group.iter().filter(|i| labels[**i]).count();
        let neg = group.len() - pos;
        wins += pos as f64 * (negatives_below as f64 + 0.5 * neg as f64);
        negatives_below += neg;
        start = end;
    }
    Ok(wins / (positives as f64 * negatives as f64))
}

/// Mean and standard error of the mean (sample standard deviation / √n).
pub fn mean_and_standard_error(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fin(v: f64) -> ExtReal {
        ExtReal::Finite(v)
    }

    fn pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for (i, li) in labels.iter().enumerate() {
            for (j, lj) in labels.iter().enumerate() {
                if *li && !*lj {
                    pairs += 1.0;
                    total += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        total / pairs
    }

    #[test]
    fn coverage_examples() {
        let all = ReplicateResult::from_intervals(&[PredictionInterval::unbounded(); 3], &[1.0, -1e9, 1e9]).unwrap();
        assert_eq!(coverage(&all).unwrap(), 1.0);
        let unit = PredictionInterval::new(fin(0.0), fin(1.0)).unwrap();
        let half = ReplicateResult::from_intervals(&[unit, unit], &[0.5, 2.0]).unwrap();
        assert_eq!(coverage(&half).unwrap(), 0.5);
        let edge = ReplicateResult::from_intervals(&[unit, unit], &[0.0, 1.0]).unwrap();
        assert_eq!(coverage(&edge).unwrap(), 1.0);
        assert_eq!(coverage(&ReplicateResult::default()), Err(Error::EmptyTestSet));
    }

    #[test]
    fn median_width_examples() {
        let r = |w: Vec<ExtReal>| ReplicateResult::new(vec![true; w.len()], w, None, None).unwrap();
        assert_eq!(median_width(&r(vec![fin(3.0), fin(1.0), fin(2.0)])).unwrap(), fin(2.0));
        assert_eq!(median_width(&r(vec![ExtReal::PosInf, fin(1.0)])).unwrap(), fin(1.0));
        assert_eq!(median_width(&r(vec![fin(0.7); 4])).unwrap(), fin(0.7));
        assert_eq!(fraction_infinite(&r(vec![ExtReal::PosInf, fin(1.0)])).unwrap(), 0.5);
        assert!(ReplicateResult::new(vec![true], vec![], None, None).is_err());
    }

    #[test]
    fn coverage_variance_examples() {
        assert_eq!(coverage_variance(&[0.9, 0.9, 0.9]).unwrap(), 0.0);
        assert_eq!(coverage_variance(&[0.0, 1.0]).unwrap(), 0.25);
        assert_eq!(coverage_variance(&[0.4]).unwrap(), 0.0);
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedAuroc("no negative labels")));
        assert_eq!(auroc(&[0.1, 0.2], &[false, false]), Err(Error::UndefinedAuroc("no positive labels")));
    }

    #[test]
    fn auroc_matches_pairwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = rng.random_range(2..=200);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64 / 20.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            labels[0] = true;
            labels[1] = false;
            let got = auroc(&scores, &labels).unwrap();
            assert!((got - pairwise(&scores, &labels)).abs() <= 1e-12);
        }
    }

    #[test]
    fn standard_error() {
        assert_eq!(mean_and_standard_error(&[]), None);
        assert_eq!(mean_and_standard_error(&[2.0]), Some((2.0, 0.0)));
        let (m, se) = mean_and_standard_error(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn auroc_complement(scores in prop::collection::hash_set(0u32..100_000, 2..60), seed in 0u64..1000) {
            let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<bool> = scores.iter().map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            let flipped: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
            let a = auroc(&scores, &labels).unwrap();
            let b = auroc(&flipped, &labels).unwrap();
            prop_assert!((a + b - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn coverage_permutation_invariant(flags in prop::collection::vec(any::<bool>(), 1..50), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let r = ReplicateResult::new(flags.clone(), vec![fin(1.0); flags.len()], None, None).unwrap();
            let mut shuffled = flags.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let s = ReplicateResult::new(shuffled, vec![fin(1.0); flags.len()], None, None).unwrap();
            prop_assert_eq!(coverage(&r).unwrap(), coverage(&s).unwrap());
        }
    }
}
