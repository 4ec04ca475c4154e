use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{estimating_equation, lbfgs, objective_value, Dataset, Layout, MlpConfig, ModelParams};
use crate::error::{Error, Result};
use crate::jet::Scalar;

/// Gradient tolerance for the full-batch refinement after the epoch schedule.
const POLISH_TOLERANCE: f64 = 1e-10;
const POLISH_MAX_ITER: usize = 5000;

pub(super) fn forward(theta: &[f64], inputs: usize, hidden: usize, x: &[f64]) -> f64 {
    let (w1, rest) = theta.split_at(hidden * inputs);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(hidden);
    let mut out = b2[0];
    for k in 0..hidden {
        let z = b1[k]
            + w1[k * inputs..(k + 1) * inputs]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>();
        out += w2[k] * Scalar::logistic(z);
    }
    out
}

pub(super) fn point_gradient<S: Scalar>(
    theta: &[S],
    inputs: usize,
    hidden: usize,
    x: &[f64],
    y: f64,
    out: &mut [S],
) -> S {
    let b1_at = hidden * inputs;
    let w2_at = b1_at + hidden;
    let b2_at = w2_at + hidden;
    let mut f = theta[b2_at];
    // stash activations in the w2 slots of `out` until the residual is known
    for k in 0..hidden {
        let mut z = theta[b1_at + k];
        for j in 0..inputs {
            z += theta[k * inputs + j] * x[j];
        }
        let a = z.logistic();
        out[w2_at + k] = a;
        f += theta[w2_at + k] * a;
    }
    let r = f + (-y);
    for k in 0..hidden {
        let a = out[w2_at + k];
        let back = r * theta[w2_at + k] * a * (-a + 1.0);
        for j in 0..inputs {
            out[k * inputs + j] = back * x[j];
        }
        out[b1_at + k] = back;
        out[w2_at + k] = r * a;
    }
    out[b2_at] = r;
    r
}

fn init(inputs: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let layout = Layout::Mlp { inputs, hidden };
    let mut theta = vec![0.0; layout.n_params()];
    let a1 = (6.0 / (inputs + hidden) as f64).sqrt();
    for w in &mut theta[..hidden * inputs] {
        *w = rng.random_range(-a1..a1);
    }
    let a2 = (6.0 / (hidden + 1) as f64).sqrt();
    let w2_at = hidden * (inputs + 1);
    for w in &mut theta[w2_at..w2_at + hidden] {
        *w = rng.random_range(-a2..a2);
    }
    theta
}

/// Seeded mini-batch gradient descent for the configured epochs, then a
/// full-batch L-BFGS refinement to stationarity. `data` must already be in
/// canonical row order.
pub(super) fn fit(data: &Dataset, cfg: &MlpConfig, seed: u64) -> Result<ModelParams> {
    let inputs = data.dim();
    let hidden = cfg.hidden_units;
    let layout = Layout::Mlp { inputs, hidden };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = init(inputs, hidden, &mut rng);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; theta.len()];
    let mut g = vec![0.0; theta.len()];
    for epoch in 0..cfg.epochs {
        if cfg.batch_size < n {
            order.shuffle(&mut rng);
        }
        let mut loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|v| *v = 0.0);
            for &i in batch {
                let r = point_gradient(&theta, inputs, hidden, data.row(i), data.label(i), &mut g);
                loss += 0.5 * r * r;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (t, gr) in theta.iter_mut().zip(&grad) {
                *t -= scale * (gr + cfg.l2_lambda * batch.len() as f64 * *t);
            }
        }
        if !loss.is_finite() || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
    }
    let start = ModelParams { layout, theta };
    refine(data, cfg.l2_lambda, None, start).map_err(|e| match e {
        Error::NonFiniteLoss { .. } => Error::NonFiniteLoss { epoch: cfg.epochs },
        other => other,
    })
}

/// L-BFGS on `L(·, ω)` from `start`.
pub(super) fn refine(
    data: &Dataset,
    lambda: f64,
    weights: Option<&[f64]>,
    start: ModelParams,
) -> Result<ModelParams> {
    let layout = start.layout;
    let outcome = lbfgs::minimize(
        start.theta,
        |theta| {
            (
                objective_value(&layout, theta, data, weights, lambda),
                estimating_equation(&layout, theta, data, weights, lambda),
            )
        },
        POLISH_TOLERANCE,
        POLISH_MAX_ITER,
    );
    if !outcome.value.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    ModelParams::new(layout, outcome.theta)
}
