//! Symmetric regression algorithms.
//!
//! Every differentiable family minimizes the per-point objective
//!
//! ```text
//! L(θ, ω) = (1/n) Σ_i ω_i ( ½ (y_i - f(x_i; θ))² + (λ/2) |θ|² )
//! ```
//!
//! whose gradient is the estimating equation
//! `G(θ, ω) = (1/n) Σ_i ω_i (g_i(θ) + λθ)`. Each training point carries its
//! share of the regularizer, so dropping a point (`ω_i = 0`) is exactly a
//! refit on the remaining `n - 1` rows. Ridge therefore solves
//! `(XᵀX + λ n I) θ = Xᵀy`.

mod lbfgs;
mod mlp;
mod ridge;

use crate::error::{Error, Result};
use crate::jet::{Jet, Scalar};

pub use lbfgs::{minimize as lbfgs_minimize, LbfgsOutcome};
pub use ridge::exact_loo_ridge;

/// Training rows `(x_i, y_i)`, features stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidDataset("no rows".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::InvalidDataset(format!(
                "{} feature values for {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(p) = features.iter().chain(&labels).position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite entry at position {p}")));
        }
        Ok(Self {
            features,
            labels,
            dim,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::InvalidDataset(format!("row {i} has the wrong width")));
        }
        Self::new(rows.concat(), labels, dim)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            dim: self.dim,
        }
    }

    /// Every row except `i`.
    pub fn without(&self, i: usize) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&j| j != i).collect();
        self.subset(&keep)
    }

    /// Row order sorted lexicographically by (features, label); fitting in
    /// this order makes every algorithm a function of the multiset of rows.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.row(a)
                .iter()
                .zip(self.row(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(self.labels[a].total_cmp(&self.labels[b]))
        });
        idx
    }

    pub fn canonicalized(&self) -> Self {
        self.subset(&self.canonical_order())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeConfig {
    pub lambda: f64,
    /// Appends a constant feature (penalized like the others).
    pub intercept: bool,
}

impl RidgeConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            intercept: false,
        }
    }
}

/// One-hidden-layer network with logistic activations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig {
    pub hidden_units: usize,
    pub l2_lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_units: 25,
            l2_lambda: 1.0,
            epochs: 2000,
            batch_size: 50,
            learning_rate: 1e-4,
            seed: 0,
        }
    }
}

impl MlpConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "hidden units, epochs and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.l2_lambda >= 0.0) {
            return Err(Error::InvalidConfig(
                "learning rate must be positive and l2 lambda nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Model-fitting algorithm `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Predictor {
    ConstantMean,
    Ridge(RidgeConfig),
    Mlp(MlpConfig),
}

impl Predictor {
    pub fn name(&self) -> &'static str {
        match self {
            Predictor::ConstantMean => "constant-mean",
            Predictor::Ridge(_) => "ridge",
            Predictor::Mlp(_) => "mlp",
        }
    }

    /// L2 strength of a differentiable family.
    pub fn lambda(&self) -> Result<f64> {
        match self {
            Predictor::ConstantMean => Err(Error::UnsupportedFamily("constant-mean")),
            Predictor::Ridge(c) => Ok(c.lambda),
            Predictor::Mlp(c) => Ok(c.l2_lambda),
        }
    }

    pub fn layout(&self, inputs: usize) -> Layout {
        match self {
            Predictor::ConstantMean => Layout::Constant,
            Predictor::Ridge(c) => Layout::Linear {
                inputs,
                intercept: c.intercept,
            },
            Predictor::Mlp(c) => Layout::Mlp {
                inputs,
                hidden: c.hidden_units,
            },
        }
    }
}

/// Shape of a parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    Constant,
    Linear { inputs: usize, intercept: bool },
    /// `[W1 (hidden × inputs, row-major), b1 (hidden), w2 (hidden), b2]`.
    Mlp { inputs: usize, hidden: usize },
}

impl Layout {
    pub fn n_params(&self) -> usize {
        match *self {
            Layout::Constant => 1,
            Layout::Linear { inputs, intercept } => inputs + usize::from(intercept),
            Layout::Mlp { inputs, hidden } => hidden * (inputs + 2) + 1,
        }
    }

    pub fn inputs(&self) -> Option<usize> {
        match *self {
            Layout::Constant => None,
            Layout::Linear { inputs, .. } | Layout::Mlp { inputs, .. } => Some(inputs),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self, Layout::Constant)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layout: Layout,
    pub theta: Vec<f64>,
}

impl ModelParams {
    pub fn new(layout: Layout, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != layout.n_params() {
            return Err(Error::DimensionMismatch {
                expected: layout.n_params(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("non-finite parameter".into()));
        }
        Ok(Self { layout, theta })
    }
}

/// Fits `predictor` on `data`. The result depends only on the multiset of
/// rows and the seed.
pub fn fit(predictor: &Predictor, data: &Dataset, seed: u64) -> Result<ModelParams> {
    let canon = data.canonicalized();
    match predictor {
        Predictor::ConstantMean => {
            let mean = canon.labels.iter().sum::<f64>() / canon.len() as f64;
            ModelParams::new(Layout::Constant, vec![mean])
        }
        Predictor::Ridge(cfg) => ridge::fit_weighted(&canon, cfg, None),
        Predictor::Mlp(cfg) => {
            cfg.validate()?;
            mlp::fit(&canon, cfg, seed)
        }
    }
}

/// Minimizer of `L(·, ω)` for a differentiable family. Ridge is solved in
/// closed form; the network is refined by L-BFGS from `start`.
pub fn fit_weighted(
    predictor: &Predictor,
    data: &Dataset,
    weights: &[f64],
    start: &ModelParams,
) -> Result<ModelParams> {
    if weights.len() != data.len() {
        return Err(Error::LengthMismatch(format!(
            "{} weights for {} rows",
            weights.len(),
            data.len()
        )));
    }
    match predictor {
        Predictor::ConstantMean => Err(Error::UnsupportedFamily("constant-mean")),
        Predictor::Ridge(cfg) => ridge::fit_weighted(data, cfg, Some(weights)),
        Predictor::Mlp(cfg) => mlp::refine(data, cfg.l2_lambda, Some(weights), start.clone()),
    }
}

pub fn predict(params: &ModelParams, x: &[f64]) -> Result<f64> {
    if let Some(d) = params.layout.inputs() {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    Ok(predict_unchecked(&params.layout, &params.theta, x))
}

pub(crate) fn predict_unchecked(layout: &Layout, theta: &[f64], x: &[f64]) -> f64 {
    match *layout {
        Layout::Constant => theta[0],
        Layout::Linear { inputs, intercept } => {
            let mut s: f64 = theta[..inputs].iter().zip(x).map(|(t, v)| t * v).sum();
            if intercept {
                s += theta[inputs];
            }
            s
        }
        Layout::Mlp { inputs, hidden } => mlp::forward(theta, inputs, hidden, x),
    }
}

/// Writes `g_i(θ) = (f(x; θ) - y) ∇_θ f(x; θ)` into `out` and returns the
/// residual `f(x; θ) - y`.
pub fn point_gradient<S: Scalar>(
    layout: &Layout,
    theta: &[S],
    x: &[f64],
    y: f64,
    out: &mut [S],
) -> S {
    match *layout {
        Layout::Constant => {
            let r = theta[0] + (-y);
            out[0] = r;
            r
        }
        Layout::Linear { inputs, intercept } => {
            let mut f = S::zero();
            for j in 0..inputs {
                f += theta[j] * x[j];
            }
            if intercept {
                f += theta[inputs];
            }
            let r = f + (-y);
            for j in 0..inputs {
                out[j] = r * x[j];
            }
            if intercept {
                out[inputs] = r;
            }
            r
        }
        Layout::Mlp { inputs, hidden } => mlp::point_gradient(theta, inputs, hidden, x, y, out),
    }
}

/// `G(θ, ω) = (1/n) Σ_i ω_i (g_i(θ) + λθ)`, all-ones weights when `weights`
/// is `None`.
pub fn estimating_equation<S: Scalar>(
    layout: &Layout,
    theta: &[S],
    data: &Dataset,
    weights: Option<&[f64]>,
    lambda: f64,
) -> Vec<S> {
    let p = theta.len();
    let mut total = vec![S::zero(); p];
    let mut g = vec![S::zero(); p];
    let mut weight_sum = 0.0;
    for i in 0..data.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        weight_sum += w;
        point_gradient(layout, theta, data.row(i), data.label(i), &mut g);
        if w == 1.0 {
            for (t, gi) in total.iter_mut().zip(&g) {
                *t += *gi;
            }
        } else {
            for (t, gi) in total.iter_mut().zip(&g) {
                *t += *gi * w;
            }
        }
    }
    let inv_n = 1.0 / data.len() as f64;
    total
        .into_iter()
        .zip(theta)
        .map(|(t, th)| (t + *th * (lambda * weight_sum)) * inv_n)
        .collect()
}

/// `L(θ, ω)` in plain floating point.
pub fn objective_value(
    layout: &Layout,
    theta: &[f64],
    data: &Dataset,
    weights: Option<&[f64]>,
    lambda: f64,
) -> f64 {
    let sq_norm: f64 = theta.iter().map(|t| t * t).sum();
    let mut total = 0.0;
    for i in 0..data.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        let r = predict_unchecked(layout, theta, data.row(i)) - data.label(i);
        total += w * (0.5 * r * r + 0.5 * lambda * sq_norm);
    }
    total / data.len() as f64
}

/// Per-point gradient pieces at `params`: the loss term `g_i(θ)` and the
/// point's share `λθ` of the regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PointGradient {
    pub loss: Vec<f64>,
    pub regularizer: Vec<f64>,
}

pub fn objective_gradient(
    params: &ModelParams,
    data: &Dataset,
    i: usize,
    lambda: f64,
) -> Result<PointGradient> {
    check_differentiable(params, data)?;
    let mut loss = vec![0.0; params.theta.len()];
    point_gradient(&params.layout, &params.theta, data.row(i), data.label(i), &mut loss);
    Ok(PointGradient {
        loss,
        regularizer: params.theta.iter().map(|t| lambda * t).collect(),
    })
}

/// `H(θ, ω) v` with `H = ∂G/∂θ`, by forward-mode differentiation of `G`
/// along `v`.
pub fn objective_hvp(
    params: &ModelParams,
    data: &Dataset,
    weights: Option<&[f64]>,
    lambda: f64,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_differentiable(params, data)?;
    if v.len() != params.theta.len() {
        return Err(Error::DimensionMismatch {
            expected: params.theta.len(),
            got: v.len(),
        });
    }
    Ok(hvp_unchecked(&params.layout, &params.theta, data, weights, lambda, v))
}

pub(crate) fn hvp_unchecked(
    layout: &Layout,
    theta: &[f64],
    data: &Dataset,
    weights: Option<&[f64]>,
    lambda: f64,
    v: &[f64],
) -> Vec<f64> {
    let dual: Vec<Jet<2>> = theta
        .iter()
        .zip(v)
        .map(|(&t, &d)| Jet::from_coeffs([t, d]))
        .collect();
    estimating_equation(layout, &dual, data, weights, lambda)
        .into_iter()
        .map(|j| j.coeffs[1])
        .collect()
}

/// Dense `H(θ, 1_n)` assembled column by column from Hessian-vector products.
pub fn dense_hessian(params: &ModelParams, data: &Dataset, lambda: f64) -> Result<Vec<Vec<f64>>> {
    check_differentiable(params, data)?;
    let p = params.theta.len();
    let mut cols = Vec::with_capacity(p);
    let mut e = vec![0.0; p];
    for k in 0..p {
        e[k] = 1.0;
        cols.push(hvp_unchecked(&params.layout, &params.theta, data, None, lambda, &e));
        e[k] = 0.0;
    }
    // symmetrize away rounding
    let mut h = vec![vec![0.0; p]; p];
    for r in 0..p {
        for c in 0..p {
            h[r][c] = 0.5 * (cols[c][r] + cols[r][c]);
        }
    }
    Ok(h)
}

fn check_differentiable(params: &ModelParams, data: &Dataset) -> Result<()> {
    if !params.layout.is_differentiable() {
        return Err(Error::UnsupportedFamily("constant-mean"));
    }
    if let Some(d) = params.layout.inputs() {
        if d != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: data.dim(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_d(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::new(xs.to_vec(), ys.to_vec(), 1).unwrap()
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
        let features: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = (0..n)
            .map(|i| features[i * d..(i + 1) * d].iter().sum::<f64>().sin() + rng.random_range(-0.3..0.3))
            .collect();
        Dataset::new(features, labels, d).unwrap()
    }

    #[test]
    fn constant_mean_fit() {
        let p = fit(&Predictor::ConstantMean, &one_d(&[0.0, 0.0, 0.0], &[0.0, 3.0, 6.0]), 0).unwrap();
        assert_eq!(p.theta, vec![3.0]);
        assert_eq!(predict(&p, &[123.0]).unwrap(), 3.0);
    }

    #[test]
    fn ridge_fit_examples() {
        let exact = Predictor::Ridge(RidgeConfig::new(1e-12));
        let p = fit(&exact, &one_d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0).unwrap();
        assert_relative_eq!(p.theta[0], 1.0, epsilon = 1e-9);

        let p = fit(&Predictor::Ridge(RidgeConfig::new(1.0)), &one_d(&[1.0], &[2.0]), 0).unwrap();
        assert_relative_eq!(p.theta[0], 1.0, epsilon = 1e-15);

        let p = ModelParams::new(Layout::Linear { inputs: 1, intercept: false }, vec![1.0]).unwrap();
        assert_eq!(predict(&p, &[5.0]).unwrap(), 5.0);
        assert!(matches!(predict(&p, &[5.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ridge_singular_without_penalty() {
        let data = one_d(&[0.0, 0.0], &[1.0, 2.0]);
        assert_eq!(
            fit(&Predictor::Ridge(RidgeConfig::new(0.0)), &data, 0),
            Err(Error::SingularSystem)
        );
    }

    #[test]
    fn ridge_intercept_recovers_offset() {
        let xs = [-1.0, 0.0, 1.0, 2.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 10.0).collect();
        let cfg = RidgeConfig { lambda: 1e-12, intercept: true };
        let p = fit(&Predictor::Ridge(cfg), &one_d(&xs, &ys), 0).unwrap();
        assert_relative_eq!(p.theta[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(p.theta[1], 10.0, epsilon = 1e-8);
    }

    #[test]
    fn zero_mlp_predicts_zero() {
        let layout = Layout::Mlp { inputs: 3, hidden: 25 };
        let p = ModelParams::new(layout, vec![0.0; layout.n_params()]).unwrap();
        assert_eq!(predict(&p, &[1.0, -2.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn ridge_stationary_after_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let data = random_data(&mut rng, 40, 3);
            let p = fit(&Predictor::Ridge(RidgeConfig::new(0.3)), &data, 0).unwrap();
            let g = estimating_equation(&p.layout, &p.theta, &data, None, 0.3);
            assert!(g.iter().all(|v| v.abs() <= 1e-8), "{g:?}");
            let hv = objective_hvp(&p, &data, None, 0.3, &[0.0; 3]).unwrap();
            assert_eq!(hv, vec![0.0; 3]);
        }
    }

    #[test]
    fn hand_differentiated_ridge_gradient() {
        let params = ModelParams::new(Layout::Linear { inputs: 1, intercept: false }, vec![1.0]).unwrap();
        let g = objective_gradient(&params, &one_d(&[2.0], &[0.0]), 0, 0.0).unwrap();
        assert_eq!(g.loss, vec![4.0]);
        assert_eq!(g.regularizer, vec![0.0]);
    }

    #[test]
    fn constant_mean_not_differentiable() {
        let p = ModelParams::new(Layout::Constant, vec![1.0]).unwrap();
        let data = one_d(&[0.0], &[1.0]);
        assert_eq!(
            objective_gradient(&p, &data, 0, 0.0),
            Err(Error::UnsupportedFamily("constant-mean"))
        );
        assert!(objective_hvp(&p, &data, None, 0.0, &[1.0]).is_err());
    }

    #[test]
    fn fits_are_symmetric_in_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mlp = Predictor::Mlp(MlpConfig {
            hidden_units: 4,
            l2_lambda: 0.5,
            epochs: 5,
            batch_size: 7,
            learning_rate: 0.05,
            seed: 1,
        });
        for trial in 0..50 {
            let data = random_data(&mut rng, 15, 2);
            let mut perm: Vec<usize> = (0..data.len()).collect();
            perm.shuffle(&mut rng);
            let shuffled = data.subset(&perm);
            for pred in [Predictor::ConstantMean, Predictor::Ridge(RidgeConfig::new(0.1))] {
                assert_eq!(fit(&pred, &data, 0).unwrap(), fit(&pred, &shuffled, 0).unwrap());
            }
            if trial % 5 == 0 {
                let a = fit(&mlp, &data, 9).unwrap();
                let b = fit(&mlp, &shuffled, 9).unwrap();
                for (x, y) in a.theta.iter().zip(&b.theta) {
                    assert!((x - y).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn mlp_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = Layout::Mlp { inputs: 3, hidden: 5 };
        let data = random_data(&mut rng, 12, 3);
        let lambda = 0.2;
        let h = 1e-5;
        for _ in 0..20 {
            let theta: Vec<f64> = (0..layout.n_params()).map(|_| rng.random_range(-1.5..1.5)).collect();
            let g = estimating_equation(&layout, &theta, &data, None, lambda);
            for k in 0..theta.len() {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (objective_value(&layout, &up, &data, None, lambda)
                    - objective_value(&layout, &dn, &data, None, lambda))
                    / (2.0 * h);
                let rel = (g[k] - fd).abs() / g[k].abs().max(1.0);
                assert!(rel <= 1e-5, "coordinate {k}: {} vs {fd}", g[k]);
            }
        }
    }

    #[test]
    fn mlp_hvp_matches_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layout = Layout::Mlp { inputs: 2, hidden: 4 };
        let data = random_data(&mut rng, 10, 2);
        let lambda = 0.3;
        let h = 1e-5;
        for _ in 0..10 {
            let theta: Vec<f64> = (0..layout.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..layout.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let params = ModelParams::new(layout, theta.clone()).unwrap();
            let hv = objective_hvp(&params, &data, None, lambda, &v).unwrap();
            let shift = |s: f64| -> Vec<f64> {
                let t: Vec<f64> = theta.iter().zip(&v).map(|(a, b)| a + s * b).collect();
                estimating_equation(&layout, &t, &data, None, lambda)
            };
            let (up, dn) = (shift(h), shift(-h));
            for k in 0..theta.len() {
                let fd = (up[k] - dn[k]) / (2.0 * h);
                let rel = (hv[k] - fd).abs() / hv[k].abs().max(1.0);
                assert!(rel <= 1e-4, "coordinate {k}: {} vs {fd}", hv[k]);
            }
        }
    }

    #[test]
    fn mlp_fit_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = random_data(&mut rng, 30, 2);
        let cfg = MlpConfig {
            hidden_units: 5,
            l2_lambda: 0.5,
            epochs: 20,
            batch_size: 10,
            learning_rate: 0.01,
            seed: 3,
        };
        let p = fit(&Predictor::Mlp(cfg), &data, cfg.seed).unwrap();
        let g = estimating_equation(&p.layout, &p.theta, &data, None, cfg.l2_lambda);
        let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(norm <= 1e-8, "{norm}");
    }

    #[test]
    fn mlp_divergence_reports_epoch() {
        let data = one_d(&[1e3, -1e3, 5e2], &[1e6, -1e6, 3.0]);
        let cfg = MlpConfig {
            hidden_units: 3,
            l2_lambda: 0.0,
            epochs: 50,
            batch_size: 3,
            learning_rate: 1e6,
            seed: 0,
        };
        assert!(matches!(
            fit(&Predictor::Mlp(cfg), &data, 0),
            Err(Error::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn subset_and_without() {
        let data = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]], vec![1.0, 2.0, 3.0]).unwrap();
        let w = data.without(1);
        assert_eq!(w.len(), 2);
        assert_eq!(w.row(1), &[5.0, 6.0]);
        assert!(Dataset::from_rows(&[vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]).is_err());
        assert!(Dataset::new(vec![f64::NAN], vec![0.0], 1).is_err());
    }
}
