//! Truncated Taylor series `a₀ + a₁t + … + a_K t^K` with the standard
//! power-series recurrences.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::cx::Cx;
use crate::error::{Error, Result};

/// Coefficient field of a jet.
pub trait Scalar:
    Copy + PartialEq + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn abs(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn is_finite(self) -> bool;
    /// Whether `ln`/`sqrt` are defined at this value.
    fn log_ok(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn log_ok(self) -> bool {
        self > 0.0
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    fn ln(self) -> Self {
        Complex64::ln(self)
    }
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        Complex64::powf(self, p)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn log_ok(self) -> bool {
        self != Self::zero()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jet<T> {
    pub c: Vec<T>,
}

impl<T: Scalar> Jet<T> {
    pub fn new(c: Vec<T>) -> Self {
        assert!(!c.is_empty(), "a jet has at least one coefficient");
        Jet { c }
    }

    pub fn constant(a: T, order: usize) -> Self {
        let mut c = vec![T::zero(); order + 1];
        c[0] = a;
        Jet { c }
    }

    /// The jet of `a + t`.
    pub fn variable(a: T, order: usize) -> Self {
        let mut j = Self::constant(a, order);
        if order >= 1 {
            j.c[1] = T::one();
        }
        j
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    /// Horner evaluation at `t`.
    pub fn eval(&self, t: f64) -> T {
        let tt = T::from_f64(t);
        self.c.iter().rev().fold(T::zero(), |acc, a| acc * tt + *a)
    }

    /// Time derivative of the polynomial, evaluated at `t`.
    pub fn eval_deriv(&self, t: f64) -> T {
        let tt = T::from_f64(t);
        self.c.iter().enumerate().skip(1).rev().fold(T::zero(), |acc, (k, a)| acc * tt + *a * T::from_f64(k as f64))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Jet { c: self.c.iter().map(|a| f(*a)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|a| a.is_finite())
    }

    fn same_order(&self, other: &Self) {
        assert_eq!(self.c.len(), other.c.len(), "jets of different orders");
    }

    pub fn try_div(&self, b: &Self) -> Result<Self> {
        if b.c[0] == T::zero() {
            return Err(Error::Singular("jet division by a series with zero constant term".into()));
        }
        Ok(self.div_unchecked(b))
    }

    fn div_unchecked(&self, b: &Self) -> Self {
        self.same_order(b);
        let n = self.c.len();
        let mut q = vec![T::zero(); n];
        for k in 0..n {
            let mut acc = self.c[k];
            for j in 1..=k {
                acc = acc - b.c[j] * q[k - j];
            }
            q[k] = acc / b.c[0];
        }
        Jet { c: q }
    }

    pub fn exp(&self) -> Self {
        let n = self.c.len();
        let mut w = vec![T::zero(); n];
        w[0] = self.c[0].exp();
        for k in 1..n {
            let mut acc = T::zero();
            for j in 1..=k {
                acc = acc + T::from_f64(j as f64) * self.c[j] * w[k - j];
            }
            w[k] = acc / T::from_f64(k as f64);
        }
        Jet { c: w }
    }

    pub fn ln(&self) -> Result<Self> {
        let a0 = self.c[0];
        if !a0.log_ok() {
            return Err(Error::Singular("log of a series with non-admissible constant term".into()));
        }
        let n = self.c.len();
        let mut w = vec![T::zero(); n];
        w[0] = a0.ln();
        for k in 1..n {
            let mut acc = T::zero();
            for j in 1..k {
                acc = acc + T::from_f64(j as f64) * w[j] * self.c[k - j];
            }
            w[k] = (self.c[k] - acc / T::from_f64(k as f64)) / a0;
        }
        Ok(Jet { c: w })
    }

    pub fn sqrt(&self) -> Result<Self> {
        let a0 = self.c[0];
        if !a0.log_ok() {
            return Err(Error::Singular("square root of a series with non-admissible constant term".into()));
        }
        let n = self.c.len();
        let mut w = vec![T::zero(); n];
        w[0] = a0.sqrt();
        for k in 1..n {
            let mut acc = self.c[k];
            for j in 1..k {
                acc = acc - w[j] * w[k - j];
            }
            w[k] = acc / (T::from_f64(2.0) * w[0]);
        }
        Ok(Jet { c: w })
    }

    /// `a^p` for real p.
    pub fn powf(&self, p: f64) -> Result<Self> {
        let a0 = self.c[0];
        if !a0.log_ok() {
            return Err(Error::Singular("power of a series with non-admissible constant term".into()));
        }
        let n = self.c.len();
        let mut w = vec![T::zero(); n];
        w[0] = a0.powf(p);
        for k in 1..n {
            let mut acc = T::zero();
            for j in 1..=k {
                acc = acc + T::from_f64((p + 1.0) * j as f64 - k as f64) * self.c[j] * w[k - j];
            }
            w[k] = acc / (T::from_f64(k as f64) * a0);
        }
        Ok(Jet { c: w })
    }

    /// `a^b = exp(b·log a)`.
    pub fn pow(&self, b: &Self) -> Result<Self> {
        Ok((b.clone() * self.ln()?).exp())
    }
}

impl<T: Scalar> Add for Jet<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.same_order(&o);
        Jet { c: self.c.iter().zip(&o.c).map(|(a, b)| *a + *b).collect() }
    }
}

impl<T: Scalar> Sub for Jet<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.same_order(&o);
        Jet { c: self.c.iter().zip(&o.c).map(|(a, b)| *a - *b).collect() }
    }
}

impl<T: Scalar> Mul for Jet<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.same_order(&o);
        let n = self.c.len();
        let mut r = vec![T::zero(); n];
        for i in 0..n {
            if self.c[i] == T::zero() {
                continue;
            }
            for j in 0..n - i {
                r[i + j] = r[i + j] + self.c[i] * o.c[j];
            }
        }
        Jet { c: r }
    }
}

/// Division without the zero-constant check; a zero divisor yields non-finite
/// coefficients, which callers detect. Use [`Jet::try_div`] for a checked version.
impl<T: Scalar> Div for Jet<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self.div_unchecked(&o)
    }
}

impl<T: Scalar> Neg for Jet<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|a| -a)
    }
}

impl Cx for Jet<Complex64> {
    fn conj(&self) -> Self {
        self.map(|a| a.conj())
    }
    fn scale(&self, c: Complex64) -> Self {
        self.map(|a| a * c)
    }
    fn shift(&self, c: Complex64) -> Self {
        let mut j = self.clone();
        j.c[0] += c;
        j
    }
    fn recip(&self) -> Self {
        Jet::constant(Complex64::new(1.0, 0.0), self.order()).div_unchecked(self)
    }
}
