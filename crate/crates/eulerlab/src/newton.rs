//! Newton potential `Ψ = Γ * f` of a bounded density, `Γ(x) = (1/2π) log‖x‖`, and its
//! second derivatives from the difference-compensated volume integral.

use std::cell::Cell;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::geometry::{c64, C64};
use crate::modulus::Modulus;
use crate::quad::Quad;

/// Bounded support region of a density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Disk { center: [f64; 2], radius: f64 },
    /// Simple polygon; either orientation.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Region {
    fn validate(&self) -> Result<()> {
        match self {
            Region::Disk { radius, .. } if !(*radius > 0.0) => argument("disk support needs a positive radius"),
            Region::Polygon { vertices } if vertices.len() < 3 => argument("polygon support needs at least 3 vertices"),
            _ => Ok(()),
        }
    }

    fn vertices(&self) -> Vec<C64> {
        match self {
            Region::Polygon { vertices } => vertices.iter().map(|v| c64(v[0], v[1])).collect(),
            Region::Disk { .. } => vec![],
        }
    }

    /// Centre and radius of a disk containing the region.
    pub fn circumdisk(&self) -> (C64, f64) {
        match self {
            Region::Disk { center, radius } => (c64(center[0], center[1]), *radius),
            Region::Polygon { .. } => {
                let v = self.vertices();
                let (lo, hi) = v.iter().fold((c64(f64::MAX, f64::MAX), c64(f64::MIN, f64::MIN)), |(lo, hi), p| {
                    (c64(lo.re.min(p.re), lo.im.min(p.im)), c64(hi.re.max(p.re), hi.im.max(p.im)))
                });
                let c = (lo + hi) / 2.0;
                (c, v.iter().map(|p| (p - c).norm()).fold(0.0, f64::max))
            }
        }
    }

    pub fn diam(&self) -> f64 {
        match self {
            Region::Disk { radius, .. } => 2.0 * radius,
            Region::Polygon { .. } => {
                let v = self.vertices();
                v.iter().flat_map(|p| v.iter().map(move |q| (p - q).norm())).fold(0.0, f64::max)
            }
        }
    }

    pub fn contains(&self, p: C64) -> bool {
        match self {
            Region::Disk { center, radius } => (p - c64(center[0], center[1])).norm() < *radius,
            Region::Polygon { .. } => {
                let v = self.vertices();
                let n = v.len();
                let mut inside = false;
                for k in 0..n {
                    let (a, b) = (v[k], v[(k + 1) % n]);
                    if (a.im > p.im) != (b.im > p.im) && p.re < a.re + (p.im - a.im) / (b.im - a.im) * (b.re - a.re) {
                        inside = !inside;
                    }
                }
                inside
            }
        }
    }

    pub fn dist_to_boundary(&self, p: C64) -> f64 {
        match self {
            Region::Disk { center, radius } => ((p - c64(center[0], center[1])).norm() - radius).abs(),
            Region::Polygon { .. } => {
                let v = self.vertices();
                let n = v.len();
                (0..n)
                    .map(|k| {
                        let (a, b) = (v[k], v[(k + 1) % n]);
                        let t = (((p - a) * (b - a).conj()).re / (b - a).norm_sqr()).clamp(0.0, 1.0);
                        (p - a - (b - a) * t).norm()
                    })
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Parameter intervals of the ray `o + r·e`, `r ≥ 0`, inside the region.
    pub fn ray_intervals(&self, o: C64, e: C64) -> Vec<(f64, f64)> {
        match self {
            Region::Disk { center, radius } => disk_ray(o, e, c64(center[0], center[1]), *radius),
            Region::Polygon { .. } => {
                let v = self.vertices();
                let n = v.len();
                let mut hits = vec![];
                for k in 0..n {
                    let (a, b) = (v[k], v[(k + 1) % n]);
                    let d = b - a;
                    let den = (e.conj() * d).im;
                    if den == 0.0 {
                        continue;
                    }
                    let w = a - o;
                    let r = (w.conj() * d).im / den;
                    let s = (w.conj() * e).im / den;
                    if r > 0.0 && (0.0..1.0).contains(&s) {
                        hits.push(r);
                    }
                }
                hits.sort_by(f64::total_cmp);
                let mut out = vec![];
                let mut start = if self.contains(o) { Some(0.0) } else { None };
                for h in hits {
                    match start.take() {
                        Some(s) => out.push((s, h)),
                        None => start = Some(h),
                    }
                }
                out
            }
        }
    }
}

fn disk_ray(o: C64, e: C64, c: C64, radius: f64) -> Vec<(f64, f64)> {
    // |o + r e − c|² = R²
    let w = o - c;
    let b = (w * e.conj()).re;
    let disc = b * b - (w.norm_sqr() - radius * radius);
    if disc <= 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    let (r0, r1) = (-b - s, -b + s);
    if r1 <= 0.0 {
        vec![]
    } else {
        vec![(r0.max(0.0), r1)]
    }
}

/// Density profile on the support; zero outside.
#[derive(Clone)]
pub enum Profile {
    Constant(f64),
    /// `c + g·y`.
    Linear { c: f64, g: [f64; 2] },
    /// `amplitude / (3 + log(1/‖y − x₀‖))²`: Dini continuous with modulus `~1/log(1/h)²`, not Hölder at `x₀`.
    DiniRadial { x0: [f64; 2], amplitude: f64 },
    Custom(Arc<dyn Fn(C64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(v) => write!(f, "Constant({v})"),
            Profile::Linear { c, g } => write!(f, "Linear {{ c: {c}, g: {g:?} }}"),
            Profile::DiniRadial { x0, amplitude } => write!(f, "DiniRadial {{ x0: {x0:?}, amplitude: {amplitude} }}"),
            Profile::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Profile {
    fn eval(&self, y: C64) -> f64 {
        match self {
            Profile::Constant(v) => *v,
            Profile::Linear { c, g } => c + g[0] * y.re + g[1] * y.im,
            Profile::DiniRadial { x0, amplitude } => {
                let r = (y - c64(x0[0], x0[1])).norm();
                if r == 0.0 {
                    0.0
                } else {
                    let l = 3.0 + (1.0 / r).ln();
                    amplitude / (l * l)
                }
            }
            Profile::Custom(f) => f(y),
        }
    }

    /// A point where the profile is not smooth, used as a quadrature breakpoint.
    fn kink(&self) -> Option<C64> {
        match self {
            Profile::DiniRadial { x0, .. } => Some(c64(x0[0], x0[1])),
            _ => None,
        }
    }
}

/// Bounded density `f` on `D`, extended by zero outside.
#[derive(Debug, Clone)]
pub struct Density {
    pub support: Region,
    pub profile: Profile,
    /// Claimed modulus of continuity of `f` on `D`, used for error budgets.
    pub modulus: Option<Modulus>,
}

impl Density {
    pub fn new(support: Region, profile: Profile, modulus: Option<Modulus>) -> Result<Density> {
        support.validate()?;
        Ok(Density { support, profile, modulus })
    }

    pub fn eval(&self, y: C64) -> f64 {
        if self.support.contains(y) {
            self.profile.eval(y)
        } else {
            0.0
        }
    }
}

/// Radial breakpoints inside `[a, b]` for a ray from `x`: the closest approach to the
/// kink, and geometric shells towards `x` when the ray starts there.
fn breakpoints(x: C64, e: C64, a: f64, b: f64, kink: Option<C64>, r_min: f64) -> Vec<f64> {
    let mut pts = vec![a];
    if a == 0.0 {
        pts[0] = r_min.min(b);
        let ratio = (b / r_min).powf(0.1);
        let mut r = r_min;
        for _ in 0..9 {
            r *= ratio;
            if r < b {
                pts.push(r);
            }
        }
    }
    if let Some(k) = kink {
        let c = ((k - x) * e.conj()).re;
        if c > pts[0] && c < b {
            pts.push(c);
        }
    }
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

struct Polar<'a> {
    x: C64,
    quad_r: Quad,
    quad_t: Quad,
    kink: Option<C64>,
    r_min: f64,
    ok: Cell<bool>,
    intervals: &'a dyn Fn(C64) -> Vec<(f64, f64)>,
}

impl Polar<'_> {
    /// `∫₀^{2π} ∫_{ray} g(e, r) dr dθ`.
    fn integrate(&self, g: impl Fn(C64, f64) -> f64) -> f64 {
        let ray = |th: f64| {
            let e = C64::from_polar(1.0, th);
            let mut v = 0.0;
            for (a, b) in (self.intervals)(e) {
                let pts = breakpoints(self.x, e, a, b, self.kink, self.r_min);
                let r = self.quad_r.integrate_pieces(|r| g(e, r), &pts);
                if !r.converged {
                    self.ok.set(false);
                }
                v += r.value;
            }
            v
        };
        let r = self.quad_t.integrate(ray, 0.0, TAU);
        if !r.converged {
            self.ok.set(false);
        }
        r.value
    }
}

/// Quadrature tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { abs_tol: 1e-12, rel_tol: 1e-11 }
    }
}

fn polar<'a>(f: &Density, x: C64, opts: &NewtonOptions, intervals: &'a dyn Fn(C64) -> Vec<(f64, f64)>) -> Polar<'a> {
    Polar {
        x,
        quad_r: Quad::new(opts.abs_tol / 10.0, opts.rel_tol / 10.0),
        quad_t: Quad::new(opts.abs_tol, opts.rel_tol),
        kink: f.profile.kink(),
        r_min: 1e-8 * f.support.diam(),
        ok: Cell::new(true),
        intervals,
    }
}

/// `Ψ(x) = ∫_D (1/2π) log‖x − y‖ f(y) dy`, for any point of the plane.
pub fn newton_potential(f: &Density, x: C64, opts: &NewtonOptions) -> Result<f64> {
    let intervals = |e: C64| f.support.ray_intervals(x, e);
    let p = polar(f, x, opts, &intervals);
    let v = p.integrate(|e, r| r.ln() * r * f.profile.eval(x + e * r)) / TAU;
    if !p.ok.get() {
        return Err(Error::Convergence(format!("Newton potential quadrature at ({}, {}), partial value {v}", x.re, x.im)));
    }
    Ok(v)
}

/// `u_ij(x)` with an error budget for the unresolved innermost shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondDerivatives {
    pub u: [[f64; 2]; 2],
    pub x: [f64; 2],
    pub f: f64,
    /// Bound on the dropped `r < 1e-8·diam(D)` contribution, from the claimed modulus (0 if none).
    pub inner_bound: f64,
    /// Radius of the enclosing disk `D₀`.
    pub r0: f64,
}

impl SecondDerivatives {
    pub fn trace(&self) -> f64 {
        self.u[0][0] + self.u[1][1]
    }
}

fn e_comp(e: C64, i: usize) -> f64 {
    if i == 0 {
        e.re
    } else {
        e.im
    }
}

/// `∫_{h<r} μ(h)/h dh` via `h = e^{−u}`.
fn dini_tail(mu: &Modulus, r: f64) -> f64 {
    let r = r.min(mu.a);
    let u0 = (1.0 / r).ln();
    // u = u0/s maps (0, 1] onto [u0, ∞)
    Quad::new(1e-14, 1e-10)
        .integrate(
            |s| {
                if s == 0.0 {
                    return 0.0;
                }
                let h = (-u0 / s).exp();
                mu.eval(h).unwrap_or(0.0) * u0 / (s * s)
            },
            0.0,
            1.0,
        )
        .value
}

/// `u_ij(x) = ∫_{D₀} ∂_ijΓ(x−y)(f(y) − f(x))dy − f(x)∮_{∂D₀} ∂_iΓ(x−y)ν_j(y)ds(y)`,
/// with `D₀` the disk of radius 1.5× the circumradius of `D`.
pub fn newton_second_derivatives(f: &Density, x: C64, opts: &NewtonOptions) -> Result<SecondDerivatives> {
    if !f.support.contains(x) {
        return Err(Error::Domain(format!("({}, {}) is not an interior point of the support", x.re, x.im)));
    }
    let (c0, rc) = f.support.circumdisk();
    let r0 = 1.5 * rc;
    let fx = f.profile.eval(x);
    // split the rays of D₀ where they cross ∂D, since f jumps there
    let intervals = |e: C64| {
        let b0 = disk_ray(x, e, c0, r0).first().map(|iv| iv.1).unwrap_or(0.0);
        let mut cuts: Vec<f64> = f.support.ray_intervals(x, e).into_iter().flat_map(|(a, b)| [a, b]).filter(|r| *r > 0.0 && *r < b0).collect();
        cuts.push(0.0);
        cuts.push(b0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    };
    let mut u = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let p = polar(f, x, opts, &intervals);
            let delta = if i == j { 1.0 } else { 0.0 };
            // ∂_ijΓ(−re)·r = (δ_ij − 2e_ie_j)/(2πr)
            let vol = p.integrate(|e, r| (delta - 2.0 * e_comp(e, i) * e_comp(e, j)) / (TAU * r) * (f.eval(x + e * r) - fx));
            if !p.ok.get() {
                return Err(Error::Convergence(format!(
                    "near-field accumulation of u_{}{} did not settle at ({}, {}); partial value {vol}",
                    i + 1,
                    j + 1,
                    x.re,
                    x.im
                )));
            }
            u[i][j] = vol - fx * boundary_term(x, c0, r0, i, j)?;
        }
    }
    let r_min = 1e-8 * f.support.diam();
    let inner_bound = f.modulus.as_ref().map(|mu| dini_tail(mu, r_min) / PI).unwrap_or(0.0);
    Ok(SecondDerivatives { u, x: [x.re, x.im], f: fx, inner_bound, r0 })
}

/// `∮_{∂D₀} ∂_iΓ(x−y)ν_j(y) ds(y)` by the periodic trapezoid rule with node doubling.
fn boundary_term(x: C64, c0: C64, r0: f64, i: usize, j: usize) -> Result<f64> {
    let eval = |n: usize| {
        let mut s = 0.0;
        for k in 0..n {
            let nu = C64::from_polar(1.0, TAU * k as f64 / n as f64);
            let z = x - (c0 + nu * r0);
            s += e_comp(z, i) / (TAU * z.norm_sqr()) * e_comp(nu, j);
        }
        s * TAU * r0 / n as f64
    };
    let mut n = 64;
    let mut prev = eval(n);
    while n < 1 << 20 {
        n *= 2;
        let v = eval(n);
        if (v - prev).abs() < 1e-15 {
            return Ok(v);
        }
        prev = v;
    }
    Err(Error::Convergence("boundary line integral did not settle".into()))
}

/// `max |trace(u(x)) − f(x)|` over the sample points.
pub fn laplacian_check(f: &Density, samples: &[C64], opts: &NewtonOptions) -> Result<f64> {
    use rayon::prelude::*;
    let errs = samples
        .par_iter()
        .map(|x| newton_second_derivatives(f, *x, opts).map(|d| (d.trace() - d.f).abs()))
        .collect::<Result<Vec<_>>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Cutoff `η` with `η = 0` on `[0, 1]`, `η = 1` on `[2, ∞)` and the quintic smootherstep between.
pub fn cutoff(s: f64) -> f64 {
    let t = (s - 1.0).clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

fn cutoff_deriv(s: f64) -> f64 {
    let t = s - 1.0;
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

/// `∂_j v_{i,ε}(x)` with `v_{i,ε} = Γ_{i,ε} * f` and `Γ_{i,ε}(z) = ∂_iΓ(z)η(‖z‖/ε)`.
pub fn mollified_second_derivatives(f: &Density, x: C64, eps: f64, opts: &NewtonOptions) -> Result<[[f64; 2]; 2]> {
    if !(eps > 0.0) {
        return argument("mollifier width must be positive");
    }
    let intervals = |e: C64| {
        f.support
            .ray_intervals(x, e)
            .into_iter()
            .filter_map(|(a, b)| if b > eps { Some((a.max(eps), b)) } else { None })
            .collect()
    };
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut p = polar(f, x, opts, &intervals);
            p.r_min = eps;
            let delta = if i == j { 1.0 } else { 0.0 };
            // z = x − y = −r e
            let v = p.integrate(|e, r| {
                let (ei, ej) = (e_comp(e, i), e_comp(e, j));
                let s = r / eps;
                let k = (delta - 2.0 * ei * ej) / (TAU * r) * cutoff(s) + ei * ej / (TAU * eps) * cutoff_deriv(s);
                k * f.profile.eval(x + e * r)
            });
            if !p.ok.get() {
                return Err(Error::Convergence(format!("mollified kernel quadrature at eps = {eps}")));
            }
            out[i][j] = v;
        }
    }
    Ok(out)
}

/// The bound `6∫₀^{2ε} μ(r)/r dr` on `|∂_j v_{i,ε} − u_ij|`.
pub fn mollifier_bound(mu: &Modulus, eps: f64) -> f64 {
    6.0 * dini_tail(mu, 2.0 * eps)
}
