//! Bounded, possibly multiply connected planar domains.
//!
//! Points are complex numbers. The outer curve is stored counter-clockwise and
//! inner curves clockwise, so the domain lies to the left of every boundary
//! curve. Circulations are always measured counter-clockwise (see
//! [`Domain::circulation`]).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Result};
use crate::quad::gauss_legendre;

pub type C64 = Complex64;

pub fn c64(x: f64, y: f64) -> C64 {
    C64::new(x, y)
}

const POLY_N: usize = 2048;

#[derive(Debug, Clone)]
pub enum CurveShape {
    Circle { center: C64, radius: f64 },
    /// Trigonometric interpolant `z(s) = Σ c_k e^{iks}`.
    Fourier { coeffs: Vec<(i64, C64)> },
}

/// A closed boundary curve parametrized by `s ∈ [0, 2π)`.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    pub shape: CurveShape,
    /// Traverse the shape's natural parametrization backwards.
    pub reversed: bool,
    polygon: Vec<C64>,
}

impl BoundaryCurve {
    pub fn circle(center: C64, radius: f64) -> BoundaryCurve {
        Self::from_shape(CurveShape::Circle { center, radius })
    }

    /// Trigonometric interpolation of equally spaced samples of a closed curve.
    pub fn from_samples(samples: &[C64]) -> Result<BoundaryCurve> {
        let n = samples.len();
        if n < 8 {
            return argument("a sampled curve needs at least 8 points");
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return argument("curve samples must be finite");
        }
        let mut coeffs = Vec::with_capacity(n + 1);
        let half = n as i64 / 2;
        let lo = -((n as i64 - 1) / 2);
        for k in lo..=half {
            let mut c = C64::new(0.0, 0.0);
            for (j, z) in samples.iter().enumerate() {
                c += z * C64::from_polar(1.0, -(k as f64) * TAU * j as f64 / n as f64);
            }
            c /= n as f64;
            if n.is_multiple_of(2) && k == half {
                // split the Nyquist mode symmetrically
                coeffs.push((half, 0.5 * c));
                coeffs.push((-half, 0.5 * c));
            } else {
                coeffs.push((k, c));
            }
        }
        Ok(Self::from_shape(CurveShape::Fourier { coeffs }))
    }

    fn from_shape(shape: CurveShape) -> BoundaryCurve {
        let mut c = BoundaryCurve { shape, reversed: false, polygon: Vec::new() };
        c.polygon = (0..POLY_N).map(|j| c.point(TAU * j as f64 / POLY_N as f64)).collect();
        c
    }

    pub fn reverse(&mut self) {
        self.reversed = !self.reversed;
        self.polygon.reverse();
        self.polygon.rotate_right(1);
    }

    fn param(&self, s: f64) -> f64 {
        if self.reversed {
            -s
        } else {
            s
        }
    }

    /// Point at parameter `s`.
    pub fn point(&self, s: f64) -> C64 {
        let s = self.param(s);
        match &self.shape {
            CurveShape::Circle { center, radius } => center + C64::from_polar(*radius, s),
            CurveShape::Fourier { coeffs } => coeffs.iter().map(|(k, c)| c * C64::from_polar(1.0, *k as f64 * s)).sum(),
        }
    }

    /// `dz/ds` at parameter `s`.
    pub fn deriv(&self, s: f64) -> C64 {
        let sign = if self.reversed { -1.0 } else { 1.0 };
        let t = self.param(s);
        let d: C64 = match &self.shape {
            CurveShape::Circle { radius, .. } => C64::new(0.0, 1.0) * C64::from_polar(*radius, t),
            CurveShape::Fourier { coeffs } => coeffs
                .iter()
                .map(|(k, c)| C64::new(0.0, *k as f64) * c * C64::from_polar(1.0, *k as f64 * t))
                .sum(),
        };
        sign * d
    }

    /// Signed enclosed area, positive for counter-clockwise traversal.
    pub fn signed_area(&self) -> f64 {
        match &self.shape {
            CurveShape::Circle { radius, .. } => {
                let a = PI * radius * radius;
                if self.reversed {
                    -a
                } else {
                    a
                }
            }
            CurveShape::Fourier { .. } => {
                let n = 1024;
                let h = TAU / n as f64;
                (0..n)
                    .map(|j| {
                        let s = j as f64 * h;
                        0.5 * (self.point(s).conj() * self.deriv(s)).im * h
                    })
                    .sum()
            }
        }
    }

    /// Mean of the parametrization (the center for circles).
    pub fn center(&self) -> C64 {
        match &self.shape {
            CurveShape::Circle { center, .. } => *center,
            CurveShape::Fourier { coeffs } => coeffs.iter().filter(|(k, _)| *k == 0).map(|(_, c)| *c).sum(),
        }
    }

    pub fn polygon(&self) -> &[C64] {
        &self.polygon
    }

    /// Whether `p` lies in the bounded region enclosed by the curve.
    pub fn encloses(&self, p: C64) -> bool {
        match &self.shape {
            CurveShape::Circle { center, radius } => (p - center).norm() < *radius,
            CurveShape::Fourier { .. } => {
                let mut inside = false;
                let poly = &self.polygon;
                let n = poly.len();
                for i in 0..n {
                    let (a, b) = (poly[i], poly[(i + 1) % n]);
                    if (a.im > p.im) != (b.im > p.im) {
                        let x = a.re + (p.im - a.im) * (b.re - a.re) / (b.im - a.im);
                        if x > p.re {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }

    /// Euclidean distance from `p` to the curve.
    pub fn distance(&self, p: C64) -> f64 {
        match &self.shape {
            CurveShape::Circle { center, radius } => ((p - center).norm() - radius).abs(),
            CurveShape::Fourier { .. } => {
                let n = self.polygon.len();
                let (j, _) = self
                    .polygon
                    .iter()
                    .enumerate()
                    .map(|(j, z)| (j, (z - p).norm()))
                    .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                let h = TAU / n as f64;
                let s0 = j as f64 * h;
                let (_, d) = crate::germ::golden(|s| (self.point(s) - p).norm(), s0 - h, s0 + h, 1e-13);
                d
            }
        }
    }

    /// Parameters `t > 0` where the ray `o + t·dir` (|dir| = 1) crosses the curve.
    pub fn ray_hits(&self, o: C64, dir: C64) -> Vec<f64> {
        match &self.shape {
            CurveShape::Circle { center, radius } => {
                // |o - c + t d|² = r²
                let w = o - center;
                let b = (w.conj() * dir).re;
                let c = w.norm_sqr() - radius * radius;
                let disc = b * b - c;
                if disc <= 0.0 {
                    return vec![];
                }
                let sq = disc.sqrt();
                [-b - sq, -b + sq].into_iter().filter(|t| *t > 0.0).collect()
            }
            CurveShape::Fourier { .. } => {
                let poly = &self.polygon;
                let n = poly.len();
                let mut hits = Vec::new();
                for i in 0..n {
                    let (a, b) = (poly[i], poly[(i + 1) % n]);
                    let e = b - a;
                    let den = (dir.conj() * e).im;
                    if den == 0.0 {
                        continue;
                    }
                    let w = a - o;
                    let t = (w.conj() * e).im / den;
                    let u = (w.conj() * dir).im / den;
                    if t > 0.0 && (0.0..1.0).contains(&u) {
                        hits.push(t);
                    }
                }
                hits
            }
        }
    }

    /// Periodic trapezoid rule with `n` nodes: (point, dz/ds·h).
    pub fn rule(&self, n: usize) -> Vec<(C64, C64)> {
        let h = TAU / n as f64;
        (0..n).map(|j| {
            let s = j as f64 * h;
            (self.point(s), self.deriv(s) * h)
        })
        .collect()
    }

    pub fn length(&self) -> f64 {
        self.rule(1024).iter().map(|(_, d)| d.norm()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    Disk { r: f64 },
    Annulus { r0: f64, r: f64 },
    General,
}

/// JSON description of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Disk {
        #[serde(rename = "R")]
        r: f64,
    },
    Annulus {
        r0: f64,
        #[serde(rename = "R")]
        r: f64,
    },
    /// First curve is the outer boundary.
    General { curves: Vec<Vec<[f64; 2]>> },
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub kind: DomainKind,
    pub outer: BoundaryCurve,
    pub inner: Vec<BoundaryCurve>,
    diam: f64,
}

/// Outcome of a closed-curve line integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineIntegral {
    pub value: f64,
    pub nodes: usize,
    pub converged: bool,
}

impl Domain {
    pub fn disk(r: f64) -> Result<Domain> {
        if !(r > 0.0) || !r.is_finite() {
            return domain("disk radius must be positive");
        }
        Ok(Domain { kind: DomainKind::Disk { r }, outer: BoundaryCurve::circle(c64(0.0, 0.0), r), inner: vec![], diam: 2.0 * r })
    }

    pub fn annulus(r0: f64, r: f64) -> Result<Domain> {
        if !(r0 > 0.0 && r0 < r) || !r.is_finite() {
            return domain("annulus needs 0 < r0 < R");
        }
        let mut inner = BoundaryCurve::circle(c64(0.0, 0.0), r0);
        inner.reverse();
        Ok(Domain {
            kind: DomainKind::Annulus { r0, r },
            outer: BoundaryCurve::circle(c64(0.0, 0.0), r),
            inner: vec![inner],
            diam: 2.0 * r,
        })
    }

    /// Builds a domain from sampled closed curves, the first being the outer one.
    pub fn general(curves: &[Vec<C64>]) -> Result<Domain> {
        if curves.is_empty() {
            return argument("a general domain needs at least one curve");
        }
        let mut built = curves.iter().map(|c| BoundaryCurve::from_samples(c)).collect::<Result<Vec<_>>>()?;
        let mut outer = built.remove(0);
        if outer.signed_area() < 0.0 {
            outer.reverse();
        }
        for c in built.iter_mut() {
            if c.signed_area() > 0.0 {
                c.reverse();
            }
            if c.polygon().iter().any(|p| !outer.encloses(*p)) {
                return domain("inner curve is not strictly inside the outer curve");
            }
        }
        for i in 0..built.len() {
            for j in 0..built.len() {
                if i != j && built[i].polygon().iter().any(|p| built[j].encloses(*p)) {
                    return domain("inner curves must be pairwise disjoint");
                }
            }
        }
        let poly = outer.polygon();
        let mut diam: f64 = 0.0;
        for a in poly.iter().step_by(4) {
            for b in poly.iter().step_by(4) {
                diam = diam.max((a - b).norm());
            }
        }
        Ok(Domain { kind: DomainKind::General, outer, inner: built, diam })
    }

    pub fn from_spec(spec: &DomainSpec) -> Result<Domain> {
        match spec {
            DomainSpec::Disk { r } => Domain::disk(*r),
            DomainSpec::Annulus { r0, r } => Domain::annulus(*r0, *r),
            DomainSpec::General { curves } => {
                let cs: Vec<Vec<C64>> = curves.iter().map(|c| c.iter().map(|p| c64(p[0], p[1])).collect()).collect();
                Domain::general(&cs)
            }
        }
    }

    /// Number of inner boundary curves.
    pub fn d(&self) -> usize {
        self.inner.len()
    }

    /// Curve `C_i`: 0 is the outer boundary, 1..=d the inner ones.
    pub fn curve(&self, i: usize) -> &BoundaryCurve {
        if i == 0 {
            &self.outer
        } else {
            &self.inner[i - 1]
        }
    }

    pub fn curves(&self) -> impl Iterator<Item = &BoundaryCurve> {
        std::iter::once(&self.outer).chain(self.inner.iter())
    }

    pub fn diam(&self) -> f64 {
        self.diam
    }

    pub fn area(&self) -> f64 {
        self.curves().map(|c| c.signed_area()).sum()
    }

    pub fn contains(&self, p: C64) -> bool {
        self.outer.encloses(p) && !self.inner.iter().any(|c| c.encloses(p))
    }

    pub fn dist_to_boundary(&self, p: C64) -> f64 {
        self.curves().map(|c| c.distance(p)).fold(f64::INFINITY, f64::min)
    }

    /// Sub-intervals `[t_a, t_b]` of the ray `o + t·dir`, `t ≥ 0`, lying in Ω.
    pub fn ray_intervals(&self, o: C64, dir: C64) -> Vec<(f64, f64)> {
        let dir = dir / dir.norm();
        let mut hits: Vec<f64> = self.curves().flat_map(|c| c.ray_hits(o, dir)).collect();
        hits.sort_by(f64::total_cmp);
        let mut inside = self.contains(o);
        let mut start = 0.0;
        let mut out = Vec::new();
        for t in hits {
            if inside {
                if t > start {
                    out.push((start, t));
                }
            } else {
                start = t;
            }
            inside = !inside;
        }
        out
    }

    /// Polar product rule over Ω about `o`: `n_theta` trapezoid angles, `n_r` Gauss nodes per interval.
    pub fn area_rule(&self, o: C64, n_r: usize, n_theta: usize) -> Vec<(C64, f64)> {
        let (x, w) = gauss_legendre(n_r);
        let dth = TAU / n_theta as f64;
        let mut out = Vec::new();
        for k in 0..n_theta {
            let dir = C64::from_polar(1.0, (k as f64 + 0.5) * dth);
            for (a, b) in self.ray_intervals(o, dir) {
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
                for j in 0..n_r {
                    let r = c + h * x[j];
                    out.push((o + dir * r, w[j] * h * r * dth));
                }
            }
        }
        out
    }

    /// Counter-clockwise circulation `∮_{C_i} f·τ ds` of a vector field given as `x + iy`,
    /// by the periodic trapezoid rule with node doubling until successive values agree to `tol`.
    pub fn circulation(&self, i: usize, f: impl Fn(C64) -> C64, tol: f64) -> LineIntegral {
        let curve = self.curve(i);
        let sign = if i == 0 { 1.0 } else { -1.0 };
        let eval = |n: usize| -> f64 {
            curve.rule(n).iter().map(|(z, dz)| (f(*z).conj() * dz).re).sum::<f64>() * sign
        };
        let mut n = 64;
        let mut prev = eval(n);
        while n < 1 << 16 {
            n *= 2;
            let v = eval(n);
            if (v - prev).abs() <= tol * v.abs().max(1.0) {
                return LineIntegral { value: v, nodes: n, converged: true };
            }
            prev = v;
        }
        LineIntegral { value: prev, nodes: n, converged: false }
    }

    /// Outward unit normal of Ω at parameter `s` of curve `C_i`.
    pub fn outward_normal(&self, i: usize, s: f64) -> C64 {
        // the domain lies to the left of every stored curve
        let t = self.curve(i).deriv(s);
        -C64::new(0.0, 1.0) * t / t.norm()
    }
}
