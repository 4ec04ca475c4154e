//! Covariate shift by exponential tilting, likelihood-ratio weight
//! normalization and the effective-sample-size diagnostic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::predictors::Dataset;

/// Largest tilting exponent `xᵀβ` accepted before `exp` would overflow.
pub const MAX_TILT_EXPONENT: f64 = 700.0;

/// Tilting direction `β` and sampling parameters of a synthetic shift.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    pub beta: Vec<f64>,
    pub sample_fraction: f64,
    pub seed: u64,
}

impl ShiftSpec {
    pub fn new(beta: Vec<f64>, sample_fraction: f64, seed: u64) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig("tilting vector must be finite".into()));
        }
        if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sample fraction {sample_fraction} outside (0, 1]"
            )));
        }
        Ok(Self {
            beta,
            sample_fraction,
            seed,
        })
    }

    pub fn exponent(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                got: x.len(),
            });
        }
        let s: f64 = x.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        if s > MAX_TILT_EXPONENT {
            return Err(Error::TiltOverflow { exponent: s });
        }
        Ok(s)
    }

    /// Number of test points drawn from a pool of `pool` rows.
    pub fn test_size(&self, pool: usize) -> usize {
        (self.sample_fraction * pool as f64).floor() as usize
    }
}

/// Oracle likelihood ratio `w(x) = exp(xᵀβ)`.
pub fn oracle_weight(spec: &ShiftSpec, x: &[f64]) -> Result<f64> {
    Ok(spec.exponent(x)?.exp())
}

/// Likelihood-ratio weights normalized over the `n` training points and the
/// test point.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWeights {
    pub train: Vec<f64>,
    pub test: f64,
}

impl NormalizedWeights {
    /// `1/(n+1)` everywhere, the exchangeable case.
    pub fn uniform(n: usize) -> Self {
        normalize(&vec![1.0; n], 1.0).expect("uniform weights are positive")
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }
}

/// `p_i = w_i / (Σ_j w_j + w_test)`, `p_test = w_test / (Σ_j w_j + w_test)`.
pub fn normalize(train: &[f64], test: f64) -> Result<NormalizedWeights> {
    if let Some(w) = train.iter().chain(std::iter::once(&test)).find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidConfig(format!("weight {w} must be finite and >= 0")));
    }
    let total = train.iter().sum::<f64>() + test;
    if total <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(NormalizedWeights {
        train: train.iter().map(|w| w / total).collect(),
        test: test / total,
    })
}

/// `(Σ|w_i|)² / Σ w_i²`.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    let l1: f64 = weights.iter().map(|w| w.abs()).sum();
    let l2: f64 = weights.iter().map(|w| w * w).sum();
    if l2 <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(l1 * l1 / l2)
}

/// Draws `m` distinct indices, each draw proportional to the remaining
/// weights, using exponential keys `u_i^(1/w_i)`. Returned in draw order.
pub fn weighted_sample_without_replacement(
    log_weights: &[f64],
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if m > log_weights.len() {
        return Err(Error::SampleTooLarge {
            requested: m,
            pool: log_weights.len(),
        });
    }
    // log key = ln(u) / w; zero weights give -inf and are drawn last
    let mut keyed: Vec<(f64, usize)> = log_weights
        .iter()
        .enumerate()
        .map(|(i, &lw)| {
            let u: f64 = 1.0 - rng.random::<f64>();
            let key = if lw == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                u.ln() * (-lw).exp()
            };
            (key, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(keyed.into_iter().take(m).map(|(_, i)| i).collect())
}

/// Biased test sample from `pool`: `m` rows without replacement with
/// probabilities proportional to `exp(xᵀβ)`.
pub fn sample_shifted_test(pool: &Dataset, spec: &ShiftSpec, m: usize) -> Result<Vec<usize>> {
    let log_w = (0..pool.len())
        .map(|i| spec.exponent(pool.row(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    weighted_sample_without_replacement(&log_w, m, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn oracle_weight_examples() {
        let flat = ShiftSpec::new(vec![0.0; 3], 0.5, 0).unwrap();
        assert_eq!(oracle_weight(&flat, &[1.0, -4.0, 9.0]).unwrap(), 1.0);
        let airfoil = ShiftSpec::new(vec![-0.85, 0.0, 0.0, 0.0, 0.85], 0.5, 0).unwrap();
        assert_eq!(oracle_weight(&airfoil, &[0.0; 5]).unwrap(), 1.0);
        let one = ShiftSpec::new(vec![1.0], 0.5, 0).unwrap();
        assert_relative_eq!(oracle_weight(&one, &[2f64.ln()]).unwrap(), 2.0, epsilon = 1e-15);
        assert!(matches!(oracle_weight(&one, &[701.0]), Err(Error::TiltOverflow { .. })));
        assert!(matches!(oracle_weight(&one, &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn normalize_examples() {
        let u = normalize(&[1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(u.train, vec![0.25; 3]);
        assert_eq!(u.test, 0.25);
        let w = normalize(&[1.0, 2.0, 3.0], 4.0).unwrap();
        for (a, b) in w.train.iter().zip([0.1, 0.2, 0.3]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert_relative_eq!(w.test, 0.4, epsilon = 1e-15);
        let t = normalize(&[0.0, 0.0], 5.0).unwrap();
        assert_eq!((t.train, t.test), (vec![0.0, 0.0], 1.0));
        assert_eq!(normalize(&[0.0], 0.0), Err(Error::DegenerateWeights));
    }

    #[test]
    fn ess_examples() {
        assert_relative_eq!(effective_sample_size(&[0.7; 200]).unwrap(), 200.0, epsilon = 1e-10);
        assert_eq!(effective_sample_size(&[0.0, 3.0, 0.0]).unwrap(), 1.0);
        assert_relative_eq!(effective_sample_size(&[1.0, 1.0, 2.0]).unwrap(), 16.0 / 6.0, epsilon = 1e-15);
        assert_eq!(effective_sample_size(&[0.0, 0.0]), Err(Error::DegenerateWeights));
    }

    #[test]
    fn zero_weight_never_drawn_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let pick = weighted_sample_without_replacement(&[0.0, f64::NEG_INFINITY], 1, &mut rng).unwrap();
            assert_eq!(pick, vec![0]);
        }
    }

    #[test]
    fn exhaustive_draw_returns_everything() {
        let pool = Dataset::new((0..7).map(f64::from).collect(), vec![0.0; 7], 1).unwrap();
        let spec = ShiftSpec::new(vec![0.9], 0.5, 4).unwrap();
        let mut got = sample_shifted_test(&pool, &spec, 7).unwrap();
        got.sort();
        assert_eq!(got, (0..7).collect::<Vec<_>>());
        assert!(matches!(
            sample_shifted_test(&pool, &spec, 8),
            Err(Error::SampleTooLarge { .. })
        ));
        assert_eq!(spec.test_size(7), 3);
    }

    #[test]
    fn untilted_sampling_is_uniform() {
        let (n, m, reps) = (10usize, 3usize, 100_000usize);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = vec![0usize; n];
        for _ in 0..reps {
            for i in weighted_sample_without_replacement(&vec![0.0; n], m, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let p = m as f64 / n as f64;
        let sigma = (reps as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - reps as f64 * p).abs() <= 3.0 * sigma, "{c}");
        }
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let pool = Dataset::new((0..50).map(|i| i as f64 / 10.0).collect(), vec![0.0; 50], 1).unwrap();
        let spec = ShiftSpec::new(vec![1.0], 0.5, 17).unwrap();
        assert_eq!(
            sample_shifted_test(&pool, &spec, 20).unwrap(),
            sample_shifted_test(&pool, &spec, 20).unwrap()
        );
    }

    proptest! {
        #[test]
        fn normalize_is_scale_invariant(w in prop::collection::vec(0.0f64..10.0, 1..30), t in 0.01f64..10.0, c in 0.001f64..1000.0) {
            let a = normalize(&w, t).unwrap();
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let b = normalize(&scaled, t * c).unwrap();
            for (x, y) in a.train.iter().zip(&b.train) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            prop_assert!((a.test - b.test).abs() <= 1e-12);
            let total: f64 = a.train.iter().sum::<f64>() + a.test;
            prop_assert!((total - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn ess_within_bounds(w in prop::collection::vec(0.001f64..100.0, 1..60)) {
            let e = effective_sample_size(&w).unwrap();
            prop_assert!(e >= 1.0 - 1e-9 && e <= w.len() as f64 + 1e-9);
        }
    }
}
