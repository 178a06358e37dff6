//! Second-order forward-mode differentiation.
//!
//! A [`Jet`] carries a value together with its gradient and Hessian with
//! respect to a fixed set of independent variables. Arithmetic on jets
//! applies the chain rule exactly, so derivatives are accurate to rounding
//! rather than to a difference step. A jet with an empty gradient is a
//! constant and mixes with jets of any dimension.
//!
//! Code written against [`Scalar`] runs on plain `f64` and on jets alike,
//! which is how kernels and transforms get exact derivatives without a
//! second implementation.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Jet {
    pub fn constant(value: f64) -> Self {
        Self { value, gradient: DVector::zeros(0), hessian: DMatrix::zeros(0, 0) }
    }

    /// The independent variable `index` of `dim`, at `value`.
    pub fn variable(value: f64, index: usize, dim: usize) -> Self {
        let mut gradient = DVector::zeros(dim);
        gradient[index] = 1.0;
        Self { value, gradient, hessian: DMatrix::zeros(dim, dim) }
    }

    /// One independent variable per coordinate of `x`.
    pub fn variables(x: &[f64]) -> Vec<Jet> {
        (0..x.len()).map(|i| Jet::variable(x[i], i, x.len())).collect()
    }

    pub fn is_constant(&self) -> bool {
        self.gradient.is_empty()
    }

    /// True when value, gradient and Hessian are all finite.
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|v| v.is_finite()) && self.hessian.iter().all(|v| v.is_finite())
    }

    /// `f(self)` from `f`, `f'` and `f''` at the current value.
    pub fn chain(&self, f0: f64, f1: f64, f2: f64) -> Jet {
        if self.is_constant() {
            return Jet::constant(f0);
        }
        let mut hessian = &self.hessian * f1;
        hessian.ger(f2, &self.gradient, &self.gradient, 1.0);
        Jet { value: f0, gradient: &self.gradient * f1, hessian }
    }

    fn scaled(mut self, value: f64, s: f64) -> Jet {
        self.value = value;
        self.gradient *= s;
        self.hessian *= s;
        self
    }
}

impl fmt::Display for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (grad {:?})", self.value, self.gradient.as_slice())
    }
}

fn check_dims(a: &Jet, b: &Jet) {
    assert_eq!(a.gradient.len(), b.gradient.len(), "jets over different variable sets");
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, b: Jet) -> Jet {
        if b.is_constant() {
            self.value += b.value;
            return self;
        }
        if self.is_constant() {
            return b + self.value;
        }
        check_dims(&self, &b);
        self.value += b.value;
        self.gradient += &b.gradient;
        self.hessian += &b.hessian;
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, b: Jet) -> Jet {
        if b.is_constant() {
            self.value -= b.value;
            return self;
        }
        if self.is_constant() {
            return -b + self.value;
        }
        check_dims(&self, &b);
        self.value -= b.value;
        self.gradient -= &b.gradient;
        self.hessian -= &b.hessian;
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, b: Jet) -> Jet {
        if b.is_constant() {
            return self * b.value;
        }
        if self.is_constant() {
            return b * self.value;
        }
        check_dims(&self, &b);
        let (av, bv) = (self.value, b.value);
        let mut hessian = &self.hessian * bv + &b.hessian * av;
        hessian.ger(1.0, &self.gradient, &b.gradient, 1.0);
        hessian.ger(1.0, &b.gradient, &self.gradient, 1.0);
        Jet { value: av * bv, gradient: &self.gradient * bv + &b.gradient * av, hessian }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, b: Jet) -> Jet {
        if b.is_constant() {
            return self / b.value;
        }
        let v = self.value / b.value;
        let mut r = if self.is_constant() { b.recip() * self.value } else { self * b.recip() };
        r.value = v;
        r
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        let v = -self.value;
        self.scaled(v, -1.0)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.value += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.value -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        let v = self.value * c;
        self.scaled(v, c)
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(mut self, c: f64) -> Jet {
        self.value /= c;
        self.gradient /= c;
        self.hessian /= c;
        self
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, j: Jet) -> Jet {
        j + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, j: Jet) -> Jet {
        -j + self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Div<Jet> for f64 {
    type Output = Jet;
    fn div(self, j: Jet) -> Jet {
        let v = self / j.value;
        let mut r = j.recip() * self;
        r.value = v;
        r
    }
}

/// Numbers that kernels, transforms and expressions can be evaluated on.
pub trait Scalar:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn ln_1p(self) -> Self;
    fn exp_m1(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn recip(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, c: f64) -> Self;
    /// `self ^ e` for a general exponent.
    fn pow(self, e: Self) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    fn exp_m1(self) -> Self {
        f64::exp_m1(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn recip(self) -> Self {
        f64::recip(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, c: f64) -> Self {
        f64::powf(self, c)
    }
    fn pow(self, e: Self) -> Self {
        f64::powf(self, e)
    }
}

impl Scalar for Jet {
    fn constant(c: f64) -> Self {
        Jet::constant(c)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn ln(self) -> Self {
        let v = self.value;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }
    fn ln_1p(self) -> Self {
        let v = self.value;
        let d = 1.0 / (1.0 + v);
        self.chain(v.ln_1p(), d, -d * d)
    }
    fn exp_m1(self) -> Self {
        let v = self.value;
        let e = v.exp();
        self.chain(v.exp_m1(), e, e)
    }
    fn sqrt(self) -> Self {
        let v = self.value;
        let s = v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * v))
    }
    fn abs(self) -> Self {
        let v = self.value;
        self.chain(v.abs(), v.signum(), 0.0)
    }
    fn recip(self) -> Self {
        let v = self.value;
        let r = 1.0 / v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
    fn powi(self, n: i32) -> Self {
        let v = self.value;
        let nf = n as f64;
        let (d1, d2) = match n {
            0 => (0.0, 0.0),
            1 => (1.0, 0.0),
            _ => (nf * v.powi(n - 1), nf * (nf - 1.0) * v.powi(n - 2)),
        };
        self.chain(v.powi(n), d1, d2)
    }
    fn powf(self, c: f64) -> Self {
        let v = self.value;
        if c.fract() == 0.0 && c.abs() < i32::MAX as f64 {
            let mut r = self.powi(c as i32);
            r.value = v.powf(c);
            return r;
        }
        self.chain(v.powf(c), c * v.powf(c - 1.0), c * (c - 1.0) * v.powf(c - 2.0))
    }
    fn pow(self, e: Self) -> Self {
        if e.is_constant() {
            return self.powf(e.value);
        }
        let v = self.value.powf(e.value);
        let mut r = (e * self.ln()).exp();
        r.value = v;
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic<S: Scalar>(x: &[S]) -> S {
        // x0^3 / x1 + exp(x0 x1) - ln(1 + x1^2) + sqrt(x0)
        let a = x[0].clone().powi(3) / x[1].clone();
        let b = (x[0].clone() * x[1].clone()).exp();
        let c = (x[1].clone() * x[1].clone()).ln_1p();
        a + b - c + x[0].clone().sqrt()
    }

    #[test]
    fn matches_hand_derivatives() {
        let (x, y) = (0.7, 1.3);
        let j = generic(&Jet::variables(&[x, y]));
        assert_eq!(j.value, generic(&[x, y]));
        let e = (x * y).exp();
        let gx = 3.0 * x * x / y + y * e + 0.5 / x.sqrt();
        let gy = -x.powi(3) / (y * y) + x * e - 2.0 * y / (1.0 + y * y);
        let hxx = 6.0 * x / y + y * y * e - 0.25 / (x * x.sqrt());
        let hxy = -3.0 * x * x / (y * y) + e + x * y * e;
        let hyy = 2.0 * x.powi(3) / y.powi(3) + x * x * e - (2.0 * (1.0 - y * y)) / (1.0 + y * y).powi(2);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * b.abs().max(1.0);
        assert!(close(j.gradient[0], gx) && close(j.gradient[1], gy));
        assert!(close(j.hessian[(0, 0)], hxx) && close(j.hessian[(1, 1)], hyy));
        assert!(close(j.hessian[(0, 1)], hxy) && close(j.hessian[(1, 0)], hxy));
    }

    #[test]
    fn constants_mix_with_variables() {
        let x = Jet::variables(&[2.0]);
        let j = Jet::constant(3.0) * x[0].clone() - Jet::constant(1.0) + 4.0 / x[0].clone();
        assert_eq!(j.value, 7.0);
        assert_eq!(j.gradient[0], 3.0 - 1.0);
        assert_eq!(j.hessian[(0, 0)], 1.0);
        assert!(Jet::constant(2.0).ln().is_constant());
    }

    #[test]
    fn general_power_agrees_with_exp_log() {
        let v = Jet::variables(&[1.5, 0.4]);
        let p = v[0].clone().pow(v[1].clone());
        let q = (v[1].clone() * v[0].clone().ln()).exp();
        assert_eq!(p.value, 1.5f64.powf(0.4));
        for (a, b) in p.hessian.iter().zip(q.hessian.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        let r = v[0].clone().powf(2.0);
        assert_eq!(r.gradient[0], 3.0);
        assert_eq!(r.hessian[(0, 0)], 2.0);
    }
}
