//! Higher-order influence-function approximations of leave-one-out
//! parameters, and the JAWA-K interval built from them.
//!
//! Along `ω(t) = 1_n + tΔω` the fitted parameters satisfy
//! `G(θ(t), ω(t)) = 0`. Writing `θ(t) = Σ c_k t^k`, the order-`k`
//! coefficient of `G` evaluated on the jet `c_0 + … + c_{k-1} t^{k-1}` plus
//! `H c_k` must vanish, so each order costs one Hessian solve and one jet
//! pass over the data. `δᵏθ = k! c_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::empdist::PredictionInterval;
use crate::error::{Error, Result};
use crate::infer::{jaw_interval, LooModels, MethodRequest};
use crate::jet::Jet;
use crate::predictors::{
    dense_hessian, estimating_equation, fit, point_gradient, Dataset, ModelParams, Predictor,
};
use crate::shift::NormalizedWeights;

/// Smallest eigenvalue enforced on the Hessian before solving.
pub const EIGEN_FLOOR: f64 = 0.5;
pub const STATIONARITY_TOLERANCE: f64 = 1e-6;
pub const MAX_ORDER: usize = 3;
const POWER_ITERATIONS: usize = 200;
const CG_TOLERANCE: f64 = 1e-8;

type TaylorJet = Jet<{ MAX_ORDER + 1 }>;

/// `H + cI` with `c = max(0, EIGEN_FLOOR - λ_min(H))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DampenedHessian {
    dim: usize,
    matrix: Vec<f64>,
    min_eigenvalue: f64,
    shift: f64,
}

impl DampenedHessian {
    /// Hessian of `G(·, 1_n)` at `params`, assembled once.
    pub fn new(params: &ModelParams, data: &Dataset, lambda: f64, seed: u64) -> Result<Self> {
        Self::from_matrix(dense_hessian(params, data, lambda)?, seed)
    }

    pub fn from_matrix(rows: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidConfig("empty Hessian".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        let matrix: Vec<f64> = rows.into_iter().flatten().collect();
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite Hessian entry".into()));
        }
        let min_eigenvalue = min_eigenvalue(&matrix, dim, seed);
        Ok(Self {
            dim,
            matrix,
            min_eigenvalue,
            shift: (EIGEN_FLOOR - min_eigenvalue).max(0.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Power-iteration estimate of `λ_min(H)`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `(H + cI) v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks(self.dim)
            .zip(v)
            .map(|(row, vi)| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + self.shift * vi)
            .collect()
    }

    /// Conjugate gradient on `H + cI`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: rhs.len(),
            });
        }
        let rhs_norm = norm(rhs);
        let mut x = vec![0.0; self.dim];
        if rhs_norm == 0.0 {
            return Ok(x);
        }
        let target = CG_TOLERANCE * rhs_norm;
        let mut r = rhs.to_vec();
        let mut p = r.clone();
        let mut rs = dot(&r, &r);
        for _ in 0..10 * self.dim {
            if rs.sqrt() <= target {
                return Ok(x);
            }
            let ap = self.apply(&p);
            let curvature = dot(&p, &ap);
            if !(curvature > 0.0) {
                break;
            }
            let step = rs / curvature;
            for k in 0..self.dim {
                x[k] += step * p[k];
                r[k] -= step * ap[k];
            }
            let next = dot(&r, &r);
            let beta = next / rs;
            rs = next;
            for k in 0..self.dim {
                p[k] = r[k] + beta * p[k];
            }
        }
        if rs.sqrt() <= target {
            Ok(x)
        } else {
            Err(Error::CgNotConverged {
                residual: rs.sqrt() / rhs_norm,
            })
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

// power iteration on σI - H, σ the Gershgorin bound on λ_max(H)
fn min_eigenvalue(h: &[f64], dim: usize, seed: u64) -> f64 {
    let sigma = h
        .chunks(dim)
        .enumerate()
        .map(|(r, row)| row[r] + row.iter().enumerate().filter(|(c, _)| *c != r).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = |v: &[f64]| -> Vec<f64> {
        h.chunks(dim)
            .zip(v)
            .map(|(row, vi)| sigma * vi - dot(row, v))
            .collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    for _ in 0..POWER_ITERATIONS {
        let w = shifted(&v);
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    sigma - dot(&v, &shifted(&v))
}

/// `(H + cI)⁻¹ rhs` for the Hessian of `G(·, 1_n)` at `params`.
pub fn dampened_hessian_solve(
    params: &ModelParams,
    data: &Dataset,
    lambda: f64,
    rhs: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    DampenedHessian::new(params, data, lambda, seed)?.solve(rhs)
}

/// `Δω = ω - 1_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDirection {
    pub delta: Vec<f64>,
}

impl PerturbationDirection {
    pub fn new(delta: Vec<f64>) -> Result<Self> {
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidConfig("non-finite perturbation".into()));
        }
        Ok(Self { delta })
    }

    /// `-e_i`.
    pub fn leave_one_out(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::LengthMismatch(format!("index {i} out of {n} rows")));
        }
        let mut delta = vec![0.0; n];
        delta[i] = -1.0;
        Ok(Self { delta })
    }
}

/// `terms[k-1] = δᵏθ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct LooDerivatives {
    pub order: usize,
    pub terms: Vec<Vec<f64>>,
}

fn check_order(order: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&order) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "influence order {order} outside 1..={MAX_ORDER}"
        )))
    }
}

/// Fails unless `‖G(θ̂, 1_n)‖∞ ≤ 1e-6`.
pub fn check_stationary(params: &ModelParams, data: &Dataset, lambda: f64) -> Result<()> {
    if !params.layout.is_differentiable() {
        return Err(Error::UnsupportedFamily("constant-mean"));
    }
    let g = estimating_equation(&params.layout, &params.theta, data, None, lambda);
    let grad_norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if grad_norm > STATIONARITY_TOLERANCE || !grad_norm.is_finite() {
        return Err(Error::NotStationary { grad_norm });
    }
    Ok(())
}

/// `δ¹θ̂, …, δᴷθ̂` along an arbitrary weight perturbation.
pub fn directional_derivatives(
    params: &ModelParams,
    data: &Dataset,
    lambda: f64,
    direction: &PerturbationDirection,
    order: usize,
    hessian: &DampenedHessian,
) -> Result<LooDerivatives> {
    check_order(order)?;
    check_stationary(params, data, lambda)?;
    if direction.delta.len() != data.len() {
        return Err(Error::LengthMismatch(format!(
            "perturbation of length {} for {} rows",
            direction.delta.len(),
            data.len()
        )));
    }
    if hessian.dim() != params.theta.len() {
        return Err(Error::DimensionMismatch {
            expected: params.theta.len(),
            got: hessian.dim(),
        });
    }
    derivatives_unchecked(params, data, lambda, &direction.delta, order, hessian)
}

/// Influence terms for dropping row `i`.
pub fn loo_directional_derivatives(
    params: &ModelParams,
    data: &Dataset,
    lambda: f64,
    i: usize,
    order: usize,
    hessian: &DampenedHessian,
) -> Result<LooDerivatives> {
    let direction = PerturbationDirection::leave_one_out(data.len(), i)?;
    directional_derivatives(params, data, lambda, &direction, order, hessian)
}

fn derivatives_unchecked(
    params: &ModelParams,
    data: &Dataset,
    lambda: f64,
    delta: &[f64],
    order: usize,
    hessian: &DampenedHessian,
) -> Result<LooDerivatives> {
    let p = params.theta.len();
    let layout = &params.layout;
    let inv_n = 1.0 / data.len() as f64;
    let mut jet: Vec<TaylorJet> = params.theta.iter().map(|&t| TaylorJet::constant(t)).collect();
    let mut terms = Vec::with_capacity(order);
    let mut factorial = 1.0;
    let mut g = vec![TaylorJet::constant(0.0); p];
    for k in 1..=order {
        factorial *= k as f64;
        let mut total = estimating_equation(layout, &jet, data, None, lambda);
        for (j, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            point_gradient(layout, &jet, data.row(j), data.label(j), &mut g);
            for ((t, gj), th) in total.iter_mut().zip(&g).zip(&jet) {
                *t += ((*gj + *th * lambda) * (d * inv_n)).shift_up();
            }
        }
        let rhs: Vec<f64> = total.iter().map(|t| -t.coeffs[k]).collect();
        let c = hessian.solve(&rhs)?;
        for (th, ck) in jet.iter_mut().zip(&c) {
            th.coeffs[k] = *ck;
        }
        terms.push(c.into_iter().map(|v| v * factorial).collect());
    }
    Ok(LooDerivatives { order, terms })
}

/// `θ̂ + Σ_k δᵏθ̂ / k!`.
pub fn approx_loo_params(params: &ModelParams, derivs: &LooDerivatives) -> Result<ModelParams> {
    let mut theta = params.theta.clone();
    let mut factorial = 1.0;
    for (k, term) in derivs.terms.iter().enumerate() {
        if term.len() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: term.len(),
            });
        }
        factorial *= (k + 1) as f64;
        for (t, d) in theta.iter_mut().zip(term) {
            *t += d / factorial;
        }
    }
    ModelParams::new(params.layout, theta)
}

/// One full fit and `n·K` Hessian solves; no refits.
pub fn approx_loo_models(
    predictor: &Predictor,
    data: &Dataset,
    order: usize,
    seed: u64,
) -> Result<LooModels> {
    let lambda = predictor.lambda()?;
    let full = fit(predictor, data, seed)?;
    approx_loo_models_from(full, data, lambda, order, seed)
}

/// IF-approximated leave-one-out models around an already fitted `full`.
pub fn approx_loo_models_from(
    full: ModelParams,
    data: &Dataset,
    lambda: f64,
    order: usize,
    seed: u64,
) -> Result<LooModels> {
    check_order(order)?;
    if data.len() < 2 {
        return Err(Error::InvalidDataset(
            "leave-one-out needs at least two rows".into(),
        ));
    }
    check_stationary(&full, data, lambda)?;
    let hessian = DampenedHessian::new(&full, data, lambda, seed)?;
    let loo = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut delta = vec![0.0; data.len()];
            delta[i] = -1.0;
            let derivs = derivatives_unchecked(&full, data, lambda, &delta, order, &hessian)?;
            approx_loo_params(&full, &derivs)
        })
        .collect::<Result<Vec<_>>>()?;
    LooModels::from_params(full, loo, data)
}

/// JAWA-K: the JAW construction on influence-approximated LOO models.
pub fn jawa_interval(
    predictor: &Predictor,
    data: &Dataset,
    test_x: &[f64],
    weights: &NormalizedWeights,
    alpha: f64,
    order: usize,
    seed: u64,
) -> Result<PredictionInterval> {
    let models = approx_loo_models(predictor, data, order, seed)?;
    jaw_interval(
        &models.artifacts(test_x)?,
        &MethodRequest {
            alpha,
            weights: weights.clone(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::compute_loo;
    use crate::predictors::{exact_loo_ridge, fit_weighted, Layout, MlpConfig, RidgeConfig};
    use approx::assert_relative_eq;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    fn tiny_ridge() -> (Dataset, Predictor, ModelParams) {
        let data = Dataset::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], 1).unwrap();
        let ridge = Predictor::Ridge(RidgeConfig::new(0.1));
        let full = fit(&ridge, &data, 0).unwrap();
        (data, ridge, full)
    }

    #[test]
    fn explicit_two_by_two() {
        let h = DampenedHessian::from_matrix(vec![vec![2.0, 0.0], vec![0.0, 0.1]], 3).unwrap();
        assert_relative_eq!(h.shift(), 0.4, epsilon = 1e-9);
        let x = h.solve(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(x[0], 1.0 / 2.4, epsilon = 1e-9);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-9);
        assert_eq!(h.solve(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(h.solve(&[1.0]).is_err());
    }

    #[test]
    fn floor_inactive_for_well_conditioned_ridge() {
        let data = Dataset::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).unwrap();
        let params = fit(&Predictor::Ridge(RidgeConfig::new(0.5)), &data, 0).unwrap();
        let h = DampenedHessian::new(&params, &data, 0.5, 0).unwrap();
        assert_eq!(h.shift(), 0.0);
        // H = diag(1/2 + 1/2) = I
        let x = dampened_hessian_solve(&params, &data, 0.5, &[3.0, -1.0], 0).unwrap();
        assert_relative_eq!(x[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn power_iteration_finds_negative_eigenvalue() {
        let h = DampenedHessian::from_matrix(vec![vec![1.0, 2.0], vec![2.0, 1.0]], 0).unwrap();
        assert_relative_eq!(h.min_eigenvalue(), -1.0, epsilon = 1e-9);
        assert_relative_eq!(h.shift(), 1.5, epsilon = 1e-9);
    }

    #[test]
    fn exactly_fit_point_has_zero_influence() {
        let data = Dataset::new(vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], 1).unwrap();
        let ridge = Predictor::Ridge(RidgeConfig::new(0.0));
        let full = fit(&ridge, &data, 0).unwrap();
        let h = DampenedHessian::new(&full, &data, 0.0, 0).unwrap();
        for i in 0..3 {
            let d = loo_directional_derivatives(&full, &data, 0.0, i, 3, &h).unwrap();
            assert!(d.terms.iter().flatten().all(|v| v.abs() < 1e-12));
            let approx = approx_loo_params(&full, &d).unwrap();
            assert_relative_eq!(approx.theta[0], full.theta[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn taylor_sum_scaling() {
        let base = ModelParams::new(Layout::Linear { inputs: 2, intercept: false }, vec![1.0, 2.0]).unwrap();
        let zero = LooDerivatives { order: 2, terms: vec![vec![0.0; 2]; 2] };
        assert_eq!(approx_loo_params(&base, &zero).unwrap(), base);
        let one = LooDerivatives { order: 1, terms: vec![vec![0.5, -1.0]] };
        assert_eq!(approx_loo_params(&base, &one).unwrap().theta, vec![1.5, 1.0]);
        let two = LooDerivatives { order: 2, terms: vec![vec![0.5, -1.0], vec![4.0, 2.0]] };
        assert_eq!(approx_loo_params(&base, &two).unwrap().theta, vec![3.5, 2.0]);
    }

    #[test]
    fn first_order_matches_finite_difference_ridge() {
        let (data, ridge, full) = tiny_ridge();
        let h = DampenedHessian::new(&full, &data, 0.1, 0).unwrap();
        let d = loo_directional_derivatives(&full, &data, 0.1, 2, 1, &h).unwrap();
        let eps = 1e-4;
        let at = |w3: f64| fit_weighted(&ridge, &data, &[1.0, 1.0, w3], &full).unwrap().theta[0];
        // ω_3 = 1 - t
        let slope = (at(1.0 - eps) - at(1.0 + eps)) / (2.0 * eps);
        assert!((d.terms[0][0] - slope).abs() <= 1e-3 * slope.abs(), "{} vs {slope}", d.terms[0][0]);
    }

    #[test]
    fn error_shrinks_with_order_on_tiny_ridge() {
        let (data, _, full) = tiny_ridge();
        let exact = exact_loo_ridge(&data, RidgeConfig::new(0.1), 2).unwrap();
        let h = DampenedHessian::new(&full, &data, 0.1, 0).unwrap();
        let errs: Vec<f64> = (1..=3)
            .map(|k| {
                let d = loo_directional_derivatives(&full, &data, 0.1, 2, k, &h).unwrap();
                dist(&approx_loo_params(&full, &d).unwrap().theta, &exact.theta)
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn higher_orders_match_closed_form_series() {
        // θ(t) = (14 - 9t) / (14.3 - 9.1t) when row 3 is downweighted to 1 - t
        let (data, _, full) = tiny_ridge();
        let h = DampenedHessian::new(&full, &data, 0.1, 0).unwrap();
        let d = loo_directional_derivatives(&full, &data, 0.1, 2, 3, &h).unwrap();
        let (a, r): (f64, f64) = (-(14.0 - 9.0 * 14.3 / 9.1) / 14.3, 9.1 / 14.3);
        for k in 1..=3 {
            let fact: f64 = (1..=k).map(|v| v as f64).product();
            assert_relative_eq!(d.terms[k - 1][0], -a * r.powi(k as i32) * fact, max_relative = 1e-9);
        }
    }

    #[test]
    fn non_stationary_params_rejected() {
        let (data, _, full) = tiny_ridge();
        let h = DampenedHessian::new(&full, &data, 0.1, 0).unwrap();
        let off = ModelParams::new(full.layout, vec![full.theta[0] + 0.1]).unwrap();
        assert!(matches!(
            loo_directional_derivatives(&off, &data, 0.1, 0, 1, &h),
            Err(Error::NotStationary { .. })
        ));
        assert!(loo_directional_derivatives(&full, &data, 0.1, 0, 4, &h).is_err());
        let mean = ModelParams::new(Layout::Constant, vec![2.0]).unwrap();
        assert!(matches!(
            check_stationary(&mean, &data, 0.0),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn jawa_reproduces_jaw_when_taylor_is_exact() {
        let data = Dataset::new(vec![1.0, 2.0, 3.0, -1.0], vec![2.0, 4.0, 6.0, -2.0], 1).unwrap();
        let ridge = Predictor::Ridge(RidgeConfig::new(0.0));
        let w = NormalizedWeights::uniform(4);
        let exact = jaw_interval(
            &compute_loo(&ridge, &data, &[1.5], 0).unwrap(),
            &MethodRequest { alpha: 0.3, weights: w.clone() },
        )
        .unwrap();
        for k in 1..=3 {
            let approx = jawa_interval(&ridge, &data, &[1.5], &w, 0.3, k, 0).unwrap();
            assert!((approx.lower.finite().unwrap() - exact.lower.finite().unwrap()).abs() < 1e-12);
            assert!((approx.upper.finite().unwrap() - exact.upper.finite().unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn jawa_gap_on_tiny_ridge_matches_series_remainder() {
        // lower endpoint is (x + 3) θ_{-3} - 3; the order-K remainder of
        // θ(t) = c + A / (1 - r t) at t = 1 is -A r^{K+1} / (1 - r)
        let (data, ridge, _) = tiny_ridge();
        let w = NormalizedWeights::uniform(3);
        let x = 2.5;
        let exact = jaw_interval(
            &compute_loo(&ridge, &data, &[x], 0).unwrap(),
            &MethodRequest { alpha: 0.3, weights: w.clone() },
        )
        .unwrap();
        let (a, r): (f64, f64) = ((14.0 - 9.0 * 14.3 / 9.1) / 14.3, 9.1 / 14.3);
        let mut gaps = Vec::new();
        for k in 1..=3 {
            let approx = jawa_interval(&ridge, &data, &[x], &w, 0.3, k, 0).unwrap();
            let gap = approx.lower.finite().unwrap() - exact.lower.finite().unwrap();
            let remainder = -a * r.powi(k as i32 + 1) / (1.0 - r);
            assert_relative_eq!(gap, (x + 3.0) * remainder, max_relative = 1e-6);
            gaps.push(gap.abs());
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn mlp_first_order_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin() + 0.1 * rng.random_range(-1.0..1.0)).collect();
        let data = Dataset::new(xs, ys, 1).unwrap();
        let cfg = MlpConfig {
            hidden_units: 5,
            l2_lambda: 1.0,
            epochs: 50,
            batch_size: 20,
            learning_rate: 0.05,
            seed: 0,
        };
        let mlp = Predictor::Mlp(cfg);
        let full = fit(&mlp, &data, 1).unwrap();
        let h = DampenedHessian::new(&full, &data, 1.0, 0).unwrap();
        assert_eq!(h.shift(), 0.0, "λ_min = {}", h.min_eigenvalue());
        let i = 7;
        let d = loo_directional_derivatives(&full, &data, 1.0, i, 1, &h).unwrap();
        let eps = 1e-4;
        let at = |wi: f64| {
            let mut w = vec![1.0; 20];
            w[i] = wi;
            fit_weighted(&mlp, &data, &w, &full).unwrap().theta
        };
        let (plus, minus) = (at(1.0 - eps), at(1.0 + eps));
        let slope: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let rel = dist(&d.terms[0], &slope) / dist(&slope, &vec![0.0; slope.len()]);
        assert!(rel <= 1e-3, "relative error {rel}");
    }
}
