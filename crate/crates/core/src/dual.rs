//! Forward-mode dual numbers and the scalar abstraction shared with `f64`.

use core::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic needed to evaluate a smooth map either on plain floats or on
/// dual numbers.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, e: f64) -> Self;

    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        libm::sin(self)
    }
    fn cos(self) -> Self {
        libm::cos(self)
    }
    fn exp(self) -> Self {
        libm::exp(self)
    }
    fn ln(self) -> Self {
        libm::log(self)
    }
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    fn powf(self, e: f64) -> Self {
        libm::pow(self, e)
    }
}

/// A first-order dual number `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub const fn new(re: f64, eps: f64) -> Self {
        Self { re, eps }
    }

    /// The seed `x + ε` used to differentiate with respect to `x`.
    pub const fn variable(x: f64) -> Self {
        Self { re: x, eps: 1.0 }
    }

    pub const fn constant(x: f64) -> Self {
        Self { re: x, eps: 0.0 }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.eps + rhs.eps)
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.eps - rhs.eps)
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(self.re * rhs.re, self.re * rhs.eps + self.eps * rhs.re)
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        Self::new(self.re * inv, (self.eps * rhs.re - self.re * rhs.eps) * inv * inv)
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl Scalar for Dual {
    fn from_f64(x: f64) -> Self {
        Self::constant(x)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn sin(self) -> Self {
        Self::new(libm::sin(self.re), self.eps * libm::cos(self.re))
    }
    fn cos(self) -> Self {
        Self::new(libm::cos(self.re), -self.eps * libm::sin(self.re))
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.re);
        Self::new(e, self.eps * e)
    }
    fn ln(self) -> Self {
        Self::new(libm::log(self.re), self.eps / self.re)
    }
    fn sqrt(self) -> Self {
        let s = libm::sqrt(self.re);
        Self::new(s, self.eps / (2.0 * s))
    }
    fn powf(self, e: f64) -> Self {
        let v = libm::pow(self.re, e);
        Self::new(v, self.eps * e * libm::pow(self.re, e - 1.0))
    }
    fn scale(self, c: f64) -> Self {
        Self::new(self.re * c, self.eps * c)
    }
}

/// A hyper-dual number `re + e1·ε₁ + e2·ε₂ + e12·ε₁ε₂` with `ε₁² = ε₂² = 0`.
/// Seeding `ε₁` along `u_a` and `ε₂` along `u_b` leaves `∂²f/∂u_a∂u_b` in
/// `e12`, with no truncation error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperDual {
    pub re: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
}

impl HyperDual {
    pub const fn new(re: f64, e1: f64, e2: f64, e12: f64) -> Self {
        Self { re, e1, e2, e12 }
    }

    pub const fn constant(x: f64) -> Self {
        Self::new(x, 0.0, 0.0, 0.0)
    }

    /// `f(self)` given `f`, `f'` and `f''` at `self.re`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        Self::new(
            f0,
            f1 * self.e1,
            f1 * self.e2,
            f1 * self.e12 + f2 * self.e1 * self.e2,
        )
    }
}

impl Add for HyperDual {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.e1 + rhs.e1, self.e2 + rhs.e2, self.e12 + rhs.e12)
    }
}

impl Sub for HyperDual {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.e1 - rhs.e1, self.e2 - rhs.e2, self.e12 - rhs.e12)
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.re * rhs.re,
            self.re * rhs.e1 + self.e1 * rhs.re,
            self.re * rhs.e2 + self.e2 * rhs.re,
            self.re * rhs.e12 + self.e1 * rhs.e2 + self.e2 * rhs.e1 + self.e12 * rhs.re,
        )
    }
}

impl Div for HyperDual {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        self * rhs.chain(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl Neg for HyperDual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.e1, -self.e2, -self.e12)
    }
}

impl Scalar for HyperDual {
    fn from_f64(x: f64) -> Self {
        Self::constant(x)
    }
    fn value(self) -> f64 {
        self.re
    }
    fn sin(self) -> Self {
        let (s, c) = (libm::sin(self.re), libm::cos(self.re));
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = (libm::sin(self.re), libm::cos(self.re));
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = libm::exp(self.re);
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let inv = 1.0 / self.re;
        self.chain(libm::log(self.re), inv, -inv * inv)
    }
    fn sqrt(self) -> Self {
        let s = libm::sqrt(self.re);
        self.chain(s, 0.5 / s, -0.25 / (s * self.re))
    }
    fn powf(self, e: f64) -> Self {
        let v = libm::pow(self.re, e - 2.0);
        self.chain(v * self.re * self.re, e * v * self.re, e * (e - 1.0) * v)
    }
    fn scale(self, c: f64) -> Self {
        Self::new(self.re * c, self.e1 * c, self.e2 * c, self.e12 * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<S: Scalar>(x: S) -> S {
        x.sin() * x.exp() + x.sqrt() / (x + S::from_f64(1.0)) - x.ln().powf(3.0)
    }

    #[test]
    fn derivative_matches_central_difference() {
        let x = 1.7;
        let d = f(Dual::variable(x));
        let h = 1e-6;
        let fd = (f(x + h) - f(x - h)) / (2.0 * h);
        assert!((d.re - f(x)).abs() < 1e-15);
        assert!((d.eps - fd).abs() < 1e-8, "{} vs {}", d.eps, fd);
    }

    #[test]
    fn product_and_quotient_rules() {
        let x = Dual::variable(3.0);
        let y = Dual::constant(2.0);
        assert_eq!((x * x).eps, 6.0);
        assert_eq!((y / x).eps, -2.0 / 9.0);
        assert_eq!((-x).eps, -1.0);
    }

    #[test]
    fn hyper_dual_second_derivative() {
        let x = 1.3;
        let v = f(HyperDual::new(x, 1.0, 1.0, 0.0));
        let h = 1e-4;
        let fd = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        let d1 = f(Dual::variable(x)).eps;
        assert!((v.re - f(x)).abs() < 1e-15);
        assert!((v.e1 - d1).abs() < 1e-14 && (v.e2 - d1).abs() < 1e-14);
        assert!((v.e12 - fd).abs() < 1e-5, "{} vs {}", v.e12, fd);
    }

    #[test]
    fn hyper_dual_mixed_partial() {
        // ∂²(xy / (1 + x))/∂x∂y = 1 / (1 + x)² at any y.
        let x = HyperDual::new(0.5, 1.0, 0.0, 0.0);
        let y = HyperDual::new(2.0, 0.0, 1.0, 0.0);
        let v = x * y / (HyperDual::constant(1.0) + x);
        assert!((v.e12 - 1.0 / 2.25).abs() < 1e-15);
    }
}
