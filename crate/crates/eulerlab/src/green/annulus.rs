//! Hydrodynamic Green function of the annulus `r0 < |x| < R` through the
//! Schottky–Klein prime function `P(u) = (1−u) Π_k (1−q^{2k}u)(1−q^{2k}/u)`, `q = r0/R`.
//!
//! In unit-scaled variables `z = x/R`, `w = y/R`:
//! `G = (1/2π)(log|P(z/w)| − log|P(z w̄)| + log|w|)`, which vanishes on the
//! outer circle, is constant on the inner one and has zero inner circulation.

use std::f64::consts::TAU;

use crate::cx::Cx;
use crate::geometry::C64;

#[derive(Debug, Clone)]
pub struct AnnulusKernel {
    pub r0: f64,
    pub r: f64,
    pub q: f64,
    /// q^{2k}, k = 1..=K.
    pub powers: Vec<f64>,
}

const SERIES_TOL: f64 = 1e-14;

impl AnnulusKernel {
    /// `terms` overrides the truncation (test hook); by default the series stops
    /// before the first q^{2k} below 1e-14.
    pub fn new(r0: f64, r: f64, terms: Option<usize>) -> AnnulusKernel {
        let q = r0 / r;
        let mut powers = Vec::new();
        let mut p = q * q;
        while match terms {
            Some(n) => powers.len() < n,
            None => p >= SERIES_TOL,
        } {
            powers.push(p);
            p *= q * q;
        }
        AnnulusKernel { r0, r, q, powers }
    }

    /// `log|P(u)|` without the `(1−u)` factor.
    fn log_rest(&self, u: C64) -> f64 {
        self.powers.iter().map(|&p| ((1.0 - p * u).norm() * (1.0 - p / u).norm()).ln()).sum()
    }

    fn log_p(&self, u: C64) -> f64 {
        (1.0 - u).norm().ln() + self.log_rest(u)
    }

    /// `P'/P(u)` with the `−1/(1−u)` term removed.
    fn s<T: Cx>(&self, u: &T) -> T {
        let mut acc: Option<T> = None;
        for &p in &self.powers {
            let a = u.scale_re(p).shift(C64::new(-1.0, 0.0)).recip().scale_re(p);
            let b = (u.clone() * u.shift(C64::new(-p, 0.0))).recip().scale_re(p);
            let term = a + b;
            acc = Some(match acc {
                Some(s) => s + term,
                None => term,
            });
        }
        acc.unwrap_or_else(|| u.scale_re(0.0))
    }

    fn dlog_p<T: Cx>(&self, u: &T) -> T {
        u.shift(C64::new(-1.0, 0.0)).recip() + self.s(u)
    }

    pub fn green(&self, x: C64, y: C64) -> f64 {
        let (z, w) = (x / self.r, y / self.r);
        (self.log_p(z / w) - self.log_p(z * w.conj()) + w.norm().ln()) / TAU
    }

    pub fn regular(&self, x: C64, y: C64) -> f64 {
        let (z, w) = (x / self.r, y / self.r);
        (self.log_rest(z / w) - self.log_p(z * w.conj()) - self.r.ln()) / TAU
    }

    /// `2∂_x G(x, y)`.
    pub fn d<T: Cx>(&self, x: &T, y: &T) -> T {
        let inv_r = 1.0 / self.r;
        let (z, w) = (x.scale_re(inv_r), y.scale_re(inv_r));
        let wb = w.conj();
        let u1 = z.clone() / w.clone();
        let u2 = z * wb.clone();
        let t = self.dlog_p(&u1) / w - wb * self.dlog_p(&u2);
        t.scale_re(inv_r / TAU)
    }

    /// `2∂_x g(x, y)`.
    pub fn d_reg<T: Cx>(&self, x: &T, y: &T) -> T {
        let inv_r = 1.0 / self.r;
        let (z, w) = (x.scale_re(inv_r), y.scale_re(inv_r));
        let wb = w.conj();
        let u1 = z.clone() / w.clone();
        let u2 = z * wb.clone();
        let t = self.s(&u1) / w - wb * self.dlog_p(&u2);
        t.scale_re(inv_r / TAU)
    }

    /// Harmonic measure of the inner circle, `log(|x|/R) / log q`.
    pub fn phi(&self, x: C64) -> f64 {
        (x.norm() / self.r).ln() / self.q.ln()
    }

    /// `2∂_x φ₁ = 1/(x log q)`.
    pub fn d_phi<T: Cx>(&self, x: &T) -> T {
        x.recip().scale_re(1.0 / self.q.ln())
    }

    /// `X₀ = ∇⊥ψ₀` for inner circulation `gamma`: `i·conj(Γ̄/(2π x))`.
    pub fn x0<T: Cx>(&self, gamma: f64, x: &T) -> T {
        crate::cx::rot(&x.recip().conj().scale_re(gamma / TAU))
    }
}
