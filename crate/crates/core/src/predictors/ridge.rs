use nalgebra::{DMatrix, DVector};

use super::{Dataset, Layout, ModelParams, RidgeConfig};
use crate::error::{Error, Result};

/// Solves `(Σ ω_i x_i x_iᵀ + λ (Σ ω_i) I) θ = Σ ω_i x_i y_i`, accumulating in
/// row order.
pub(super) fn fit_weighted(
    data: &Dataset,
    cfg: &RidgeConfig,
    weights: Option<&[f64]>,
) -> Result<ModelParams> {
    let layout = Layout::Linear {
        inputs: data.dim(),
        intercept: cfg.intercept,
    };
    let p = layout.n_params();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut x = vec![0.0; p];
    let mut weight_sum = 0.0;
    for i in 0..data.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        x[..data.dim()].copy_from_slice(data.row(i));
        if cfg.intercept {
            x[p - 1] = 1.0;
        }
        for r in 0..p {
            let wx = w * x[r];
            rhs[r] += wx * data.label(i);
            for c in 0..=r {
                gram[(r, c)] += wx * x[c];
            }
        }
        weight_sum += w;
    }
    for r in 0..p {
        gram[(r, r)] += cfg.lambda * weight_sum;
        for c in 0..r {
            gram[(c, r)] = gram[(r, c)];
        }
    }
    let chol = gram.cholesky().ok_or(Error::SingularSystem)?;
    let theta = chol.solve(&rhs);
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::SingularSystem);
    }
    ModelParams::new(layout, theta.iter().copied().collect())
}

/// Ridge refit on `data` with row `i` removed, by a direct closed-form
/// solve on the reduced rows.
pub fn exact_loo_ridge(data: &Dataset, cfg: RidgeConfig, i: usize) -> Result<ModelParams> {
    if data.len() < 2 {
        return Err(Error::InvalidDataset(
            "leave-one-out needs at least two rows".into(),
        ));
    }
    fit_weighted(&data.without(i).canonicalized(), &cfg, None)
}
