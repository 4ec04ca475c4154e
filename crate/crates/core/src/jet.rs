//! Truncated Taylor polynomials ("jets") for forward-mode propagation of
//! higher-order directional derivatives.
//!
//! A `Jet<N>` stores the normalized coefficients `c_k = f^(k)(0) / k!` of
//! `t -> f(x0 + t v)` for `k < N`. Arithmetic truncates at order `N - 1`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Scalar arithmetic shared by `f64` and jets, enough to write objective
/// gradients once and evaluate them on either.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn exp(self) -> Self;
    fn recip(self) -> Self;
    /// Order-zero coefficient.
    fn value(self) -> f64;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    /// Logistic sigmoid `1 / (1 + e^-x)`.
    fn logistic(self) -> Self {
        ((-self).exp() + 1.0).recip()
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn value(self) -> f64 {
        self
    }
    fn logistic(self) -> Self {
        if self >= 0.0 {
            1.0 / (1.0 + (-self).exp())
        } else {
            let e = self.exp();
            e / (1.0 + e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub coeffs: [f64; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        let mut coeffs = [0.0; N];
        coeffs[0] = v;
        Self { coeffs }
    }

    /// `x0 + t`.
    pub fn variable(x0: f64) -> Self {
        let mut j = Self::constant(x0);
        if N > 1 {
            j.coeffs[1] = 1.0;
        }
        j
    }

    pub fn from_coeffs(coeffs: [f64; N]) -> Self {
        Self { coeffs }
    }

    /// Multiplies by the jet variable `t`, shifting coefficients up one order.
    pub fn shift_up(self) -> Self {
        let mut out = [0.0; N];
        out[1..N].copy_from_slice(&self.coeffs[..N - 1]);
        Self { coeffs: out }
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> AddAssign for Jet<N> {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(mut self) -> Self {
        for a in self.coeffs.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = [0.0; N];
        for (k, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..=k {
                s += self.coeffs[j] * rhs.coeffs[k - j];
            }
            *o = s;
        }
        Self { coeffs: out }
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.coeffs[0] += rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for a in self.coeffs.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl<const N: usize> Scalar for Jet<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }

    // e' = a' e  =>  k e_k = Σ_{j=1..k} j a_j e_{k-j}
    fn exp(self) -> Self {
        let a = self.coeffs;
        let mut e = [0.0; N];
        e[0] = a[0].exp();
        for k in 1..N {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * a[j] * e[k - j];
            }
            e[k] = s / k as f64;
        }
        Self { coeffs: e }
    }

    // a b = 1  =>  b_k = -(1/a_0) Σ_{j=1..k} a_j b_{k-j}
    fn recip(self) -> Self {
        let a = self.coeffs;
        let mut b = [0.0; N];
        b[0] = 1.0 / a[0];
        for k in 1..N {
            let mut s = 0.0;
            for j in 1..=k {
                s += a[j] * b[k - j];
            }
            b[k] = -s * b[0];
        }
        Self { coeffs: b }
    }

    fn value(self) -> f64 {
        self.coeffs[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_series() {
        let e = Jet::<5>::variable(0.0).exp();
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for k in 0..5 {
            assert_relative_eq!(e.coeffs[k], want[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn geometric_series() {
        let x = Jet::<5>::variable(0.0);
        let g = (-x + 1.0).recip();
        for k in 0..5 {
            assert_relative_eq!(g.coeffs[k], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn logistic_derivatives_match_closed_form() {
        let x0 = 0.7;
        let s = Jet::<4>::variable(x0).logistic();
        let p = 1.0 / (1.0 + (-x0).exp());
        let d1 = p * (1.0 - p);
        let d2 = d1 * (1.0 - 2.0 * p);
        let d3 = d1 * (1.0 - 6.0 * p + 6.0 * p * p);
        assert_relative_eq!(s.coeffs[0], p, epsilon = 1e-14);
        assert_relative_eq!(s.coeffs[1], d1, epsilon = 1e-14);
        assert_relative_eq!(s.coeffs[2], d2 / 2.0, epsilon = 1e-14);
        assert_relative_eq!(s.coeffs[3], d3 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(Scalar::logistic(x0), p, epsilon = 1e-15);
    }

    #[test]
    fn product_truncates() {
        let x = Jet::<3>::variable(2.0);
        let cube = x * x * x;
        // (2 + t)^3 = 8 + 12 t + 6 t^2 + t^3
        assert_eq!(cube.coeffs, [8.0, 12.0, 6.0]);
        assert_eq!(Jet::<3>::from_coeffs([1.0, 2.0, 3.0]).shift_up().coeffs, [0.0, 1.0, 2.0]);
    }
}
