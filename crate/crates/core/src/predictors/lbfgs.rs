//! Limited-memory BFGS with backtracking (Armijo) line search.

use std::collections::VecDeque;

const MEMORY: usize = 10;
/// Consecutive iterations without a measurable decrease before giving up.
const STALL_LIMIT: usize = 10;

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub theta: Vec<f64>,
    pub value: f64,
    /// `max |∇f|` at the returned point.
    pub grad_inf_norm: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes `f` from `x0`, stopping once `max |∇f| <= tol`, after
/// `max_iter` iterations, when no descent step can be found, or when the
/// objective stops decreasing beyond rounding.
pub fn minimize<F>(x0: Vec<f64>, mut f: F, tol: f64, max_iter: usize) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(MEMORY);
    let mut iterations = 0;
    let mut stalled = 0;
    while iterations < max_iter && fx.is_finite() && inf_norm(&g) > tol {
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map_or(1.0 / inf_norm(&g).max(1.0), |(s, y, _)| dot(s, y) / dot(y, y));
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && (ft <= fx + 1e-4 * step * slope || (ft <= fx && inf_norm(&gt) < inf_norm(&g))) {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        if fx - fn_ <= 4.0 * f64::EPSILON * fx.abs() {
            stalled += 1;
        } else {
            stalled = 0;
        }
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
        if stalled >= STALL_LIMIT {
            break;
        }
    }
    LbfgsOutcome {
        grad_inf_norm: inf_norm(&g),
        theta: x,
        value: fx,
        iterations,
    }
}
