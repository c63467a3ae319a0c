//! Velocity recovery `u = X₀ + K[ω]` from distributed vorticity, flow maps with
//! Lagrangian vorticity transport, and modulus-of-continuity diagnostics of
//! computed flow maps.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cx::rot;
use crate::error::{argument, Error, Result};
use crate::geometry::{c64, Domain, DomainKind, C64};
use crate::germ::Germ;
use crate::green::GreenEvaluator;
use crate::modulus::{GammaFamily, Modulus};
use crate::ode::{dopri5, OdeOptions};
use crate::quad::{gauss_legendre, Quad};

/// Radius of the disk around a log-log singularity left out of velocity quadrature.
pub const LOGLOG_CAP: f64 = 1e-6;
/// Angular resolution of polar quadratures about a point.
const N_THETA: usize = 256;

/// JSON description of one vorticity component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VorticitySpec {
    RadialPatch { center: [f64; 2], radius: f64, value: f64 },
    GeneralPatch { vertices: Vec<[f64; 2]>, value: f64 },
    /// Piecewise-linear `ω(ρ)` about `center` from `[ρ, ω]` rows; zero outside the table.
    RadialProfile { center: [f64; 2], table: Vec<[f64; 2]> },
    /// `ω(x) = scale·log log(e·diam(Ω)/‖x − x₀‖)` on Ω, nonnegative there.
    LoglogSingularity { x0: [f64; 2], scale: f64 },
    /// Particles with cell areas `weights` carrying vorticity `values`.
    ParticleCloud {
        positions: Vec<[f64; 2]>,
        weights: Vec<f64>,
        values: Vec<f64>,
        #[serde(default)]
        core: Option<f64>,
    },
}

/// Lagrangian particles: positions, cell areas, carried vorticity and Rankine core radii.
#[derive(Debug, Clone, PartialEq)]
pub struct Particles {
    pub positions: Vec<C64>,
    pub areas: Vec<f64>,
    pub values: Vec<f64>,
    pub cores: Vec<f64>,
}

impl Particles {
    fn empty() -> Self {
        Particles { positions: vec![], areas: vec![], values: vec![], cores: vec![] }
    }

    fn push(&mut self, p: C64, area: f64, value: f64, core: f64) {
        self.positions.push(p);
        self.areas.push(area);
        self.values.push(value);
        self.cores.push(core);
    }

    fn extend(&mut self, o: Particles) {
        self.positions.extend(o.positions);
        self.areas.extend(o.areas);
        self.values.extend(o.values);
        self.cores.extend(o.cores);
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `Σ area·value`, the represented `∫ω`.
    pub fn total(&self) -> f64 {
        self.areas.iter().zip(&self.values).map(|(a, v)| a * v).sum()
    }

    /// `Σ area·|value|^p`.
    pub fn lp_pow(&self, p: f64) -> f64 {
        self.areas.iter().zip(&self.values).map(|(a, v)| a * v.abs().powf(p)).sum()
    }
}

/// Boundary markers of a uniform patch and its vorticity value.
type MarkerLoop = (Vec<C64>, f64);

#[derive(Debug, Clone)]
pub enum Component {
    Disk { center: C64, radius: f64, value: f64 },
    Polygon { vertices: Vec<C64>, value: f64, area: f64, centroid: C64 },
    Radial { center: C64, rho: Vec<f64>, omega: Vec<f64> },
    Loglog { x0: C64, scale: f64, big: f64 },
    Particles(Particles),
}

fn pt(p: [f64; 2]) -> C64 {
    c64(p[0], p[1])
}

fn shoelace(v: &[C64]) -> f64 {
    let n = v.len();
    (0..n).map(|k| (v[k].conj() * v[(k + 1) % n]).im).sum::<f64>() / 2.0
}

/// Mass `∫₀^ρ ω(s) s ds` of a piecewise-linear radial profile.
fn radial_mass(rho: &[f64], omega: &[f64], r: f64) -> f64 {
    let mut m = 0.0;
    for k in 0..rho.len() - 1 {
        let (a, b) = (rho[k], rho[k + 1].min(r));
        if b <= a {
            break;
        }
        let slope = (omega[k + 1] - omega[k]) / (rho[k + 1] - rho[k]);
        let c0 = omega[k] - slope * rho[k];
        m += c0 * (b * b - a * a) / 2.0 + slope * (b * b * b - a * a * a) / 3.0;
    }
    m
}

fn radial_eval(rho: &[f64], omega: &[f64], r: f64) -> f64 {
    if r < rho[0] || r > rho[rho.len() - 1] {
        return 0.0;
    }
    let k = rho.partition_point(|x| *x <= r).clamp(1, rho.len() - 1);
    let u = (r - rho[k - 1]) / (rho[k] - rho[k - 1]);
    omega[k - 1] + u * (omega[k] - omega[k - 1])
}

/// `∫₀¹ log|v + s + ic| ds` via the antiderivative `½v log(v²+c²) − v + c·atan(v/c)`.
fn log_segment(r: f64, c: f64) -> f64 {
    let f = |v: f64| {
        let a = if v == 0.0 { 0.0 } else { 0.5 * v * (v * v + c * c).ln() };
        let b = if c == 0.0 { 0.0 } else { c * (v / c).atan() };
        a - v + b
    };
    f(r + 1.0) - f(r)
}

/// Velocity `rot(d)/(2π|d|²)` of a unit point vortex, with a Rankine core of radius `core`.
fn rankine(d: C64, core: f64) -> C64 {
    let r2 = d.norm_sqr();
    if r2 == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let f = if r2 < core * core { r2 / (core * core) } else { 1.0 };
    rot(&d) * (f / (TAU * r2))
}

fn polar_nodes(center: C64, r0: f64, r1: f64, n_r: usize, n_theta: usize, f: impl Fn(f64) -> f64) -> Vec<(C64, f64)> {
    let (x, w) = gauss_legendre(n_r);
    let (c, h) = (0.5 * (r0 + r1), 0.5 * (r1 - r0));
    let dth = TAU / n_theta as f64;
    let mut out = Vec::with_capacity(n_r * n_theta);
    for k in 0..n_theta {
        let e = C64::from_polar(1.0, (k as f64 + 0.5) * dth);
        for j in 0..n_r {
            let r = c + h * x[j];
            out.push((center + e * r, w[j] * h * r * dth * f(r)));
        }
    }
    out
}

impl Component {
    fn from_spec(spec: &VorticitySpec, domain: &Domain) -> Result<Component> {
        let diam = domain.diam();
        let c = match spec {
            VorticitySpec::RadialPatch { center, radius, value } => {
                if !(*radius > 0.0) || !value.is_finite() {
                    return argument("radial patch needs a positive radius and a finite value");
                }
                Component::Disk { center: pt(*center), radius: *radius, value: *value }
            }
            VorticitySpec::GeneralPatch { vertices, value } => {
                if vertices.len() < 3 || !value.is_finite() {
                    return argument("a polygonal patch needs at least 3 vertices and a finite value");
                }
                let mut v: Vec<C64> = vertices.iter().map(|p| pt(*p)).collect();
                let mut area = shoelace(&v);
                if area < 0.0 {
                    v.reverse();
                    area = -area;
                }
                if !(area > 0.0) {
                    return argument("degenerate polygon");
                }
                let n = v.len();
                let centroid = (0..n).map(|k| (v[k] + v[(k + 1) % n]) * (v[k].conj() * v[(k + 1) % n]).im).sum::<C64>() / (6.0 * area);
                for k in 0..n {
                    let (a, b) = (v[k] - centroid, v[(k + 1) % n] - v[k]);
                    if (a.conj() * b).im <= 0.0 {
                        return argument("polygonal patches must be star-shaped about their centroid");
                    }
                }
                Component::Polygon { vertices: v, value: *value, area, centroid }
            }
            VorticitySpec::RadialProfile { center, table } => {
                if table.len() < 2 {
                    return argument("a radial profile needs at least two rows");
                }
                let rho: Vec<f64> = table.iter().map(|r| r[0]).collect();
                let omega: Vec<f64> = table.iter().map(|r| r[1]).collect();
                if rho[0] < 0.0 || rho.windows(2).any(|w| w[1] <= w[0]) || omega.iter().any(|w| !w.is_finite()) {
                    return argument("radial profile radii must be nonnegative and strictly increasing");
                }
                Component::Radial { center: pt(*center), rho, omega }
            }
            VorticitySpec::LoglogSingularity { x0, scale } => {
                let x0 = pt(*x0);
                if !domain.contains(x0) || !scale.is_finite() {
                    return Err(Error::Domain("log-log singularity must sit at an interior point".into()));
                }
                Component::Loglog { x0, scale: *scale, big: std::f64::consts::E * diam }
            }
            VorticitySpec::ParticleCloud { positions, weights, values, core } => {
                let n = positions.len();
                if weights.len() != n || values.len() != n {
                    return argument("particle positions, weights and values differ in length");
                }
                if weights.iter().any(|w| !(*w > 0.0)) {
                    return argument("particle weights are cell areas and must be positive");
                }
                let mean = weights.iter().sum::<f64>() / n.max(1) as f64;
                let core = core.unwrap_or(mean.sqrt());
                if !(core > 0.0) {
                    return argument("particle core radius must be positive");
                }
                Component::Particles(Particles {
                    positions: positions.iter().map(|p| pt(*p)).collect(),
                    areas: weights.clone(),
                    values: values.clone(),
                    cores: vec![core; n],
                })
            }
        };
        c.check_support(domain)?;
        Ok(c)
    }

    fn check_support(&self, domain: &Domain) -> Result<()> {
        let slack = 1e-12 * domain.diam();
        let inside = |p: C64| domain.contains(p) || domain.dist_to_boundary(p) <= slack;
        let bad = match self {
            Component::Disk { center, radius, .. } => !domain.contains(*center) || domain.dist_to_boundary(*center) < radius - slack,
            Component::Polygon { vertices, .. } => {
                let n = vertices.len();
                (0..n).any(|k| (0..16).any(|j| !inside(vertices[k] + (vertices[(k + 1) % n] - vertices[k]) * (j as f64 / 16.0))))
            }
            Component::Radial { center, rho, omega } => {
                let mut bad = false;
                for k in 0..rho.len() {
                    let nonzero = omega[k] != 0.0 || (k > 0 && omega[k - 1] != 0.0) || (k + 1 < rho.len() && omega[k + 1] != 0.0);
                    if nonzero {
                        bad |= (0..64).any(|j| !inside(center + C64::from_polar(rho[k], TAU * j as f64 / 64.0)));
                    }
                }
                bad
            }
            Component::Loglog { .. } => false,
            Component::Particles(p) => p.positions.iter().any(|x| !domain.contains(*x)),
        };
        if bad {
            return Err(Error::Domain("vorticity support leaves the domain".into()));
        }
        Ok(())
    }

    /// Whether the component is radial about the symmetry centre of a disk or annulus.
    fn concentric(&self, domain: &Domain) -> bool {
        let o = match domain.kind {
            DomainKind::Disk { .. } | DomainKind::Annulus { .. } => domain.outer.center(),
            DomainKind::General => return false,
        };
        let tol = 1e-12 * domain.diam();
        match self {
            Component::Disk { center, .. } | Component::Radial { center, .. } => (center - o).norm() <= tol,
            Component::Loglog { x0, .. } => (x0 - o).norm() <= tol,
            _ => false,
        }
    }

    /// Pointwise vorticity (0 for particle clouds); the log-log profile is not capped.
    pub fn eval(&self, y: C64) -> f64 {
        match self {
            Component::Disk { center, radius, value } => {
                if (y - center).norm() < *radius {
                    *value
                } else {
                    0.0
                }
            }
            Component::Polygon { vertices, value, .. } => {
                let n = vertices.len();
                let mut inside = false;
                for k in 0..n {
                    let (a, b) = (vertices[k], vertices[(k + 1) % n]);
                    if (a.im > y.im) != (b.im > y.im) && y.re < a.re + (y.im - a.im) / (b.im - a.im) * (b.re - a.re) {
                        inside = !inside;
                    }
                }
                if inside {
                    *value
                } else {
                    0.0
                }
            }
            Component::Radial { center, rho, omega } => radial_eval(rho, omega, (y - center).norm()),
            Component::Loglog { x0, scale, big } => {
                let r = (y - x0).norm();
                scale * (big / r).ln().ln()
            }
            Component::Particles(_) => 0.0,
        }
    }

    fn loglog_capped(x0: C64, scale: f64, big: f64, y: C64) -> f64 {
        let r = (y - x0).norm();
        if r < LOGLOG_CAP {
            0.0
        } else {
            scale * (big / r).ln().ln()
        }
    }

    /// Free-space part `∫ rot(x−y)/(2π|x−y|²) ω(y) dy`.
    fn free_velocity(&self, domain: &Domain, x: C64) -> C64 {
        match self {
            Component::Disk { center, radius, value } => {
                let d = x - center;
                let r2 = d.norm_sqr();
                rot(&d) * (0.5 * value * if r2 > radius * radius { radius * radius / r2 } else { 1.0 })
            }
            Component::Polygon { vertices, value, .. } => {
                // −(ω̄/2π)∮ log|x − y| dy, exactly per edge
                let n = vertices.len();
                let mut s = C64::new(0.0, 0.0);
                for k in 0..n {
                    let (a, b) = (vertices[k], vertices[(k + 1) % n]);
                    let d = b - a;
                    let u0 = (a - x) / d;
                    s += d * (d.norm().ln() + log_segment(u0.re, u0.im));
                }
                -s * (value / TAU)
            }
            Component::Radial { center, rho, omega } => {
                let d = x - center;
                let r2 = d.norm_sqr();
                if r2 == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                rot(&d) * (radial_mass(rho, omega, r2.sqrt()) / r2)
            }
            Component::Loglog { x0, scale, big } => {
                if self.concentric(domain) {
                    let d = x - x0;
                    let r = d.norm();
                    if r <= LOGLOG_CAP {
                        return C64::new(0.0, 0.0);
                    }
                    let m = Quad::new(1e-13, 1e-12).integrate(|s| scale * (big / s).ln().ln() * s, LOGLOG_CAP, r).value;
                    return rot(&d) * (m / (r * r));
                }
                // off-centre fields go through the full-kernel polar quadrature
                C64::new(0.0, 0.0)
            }
            Component::Particles(p) => {
                let mut s = C64::new(0.0, 0.0);
                for j in 0..p.len() {
                    s += rankine(x - p.positions[j], p.cores[j]) * (p.areas[j] * p.values[j]);
                }
                s
            }
        }
    }

    /// Quadrature nodes `(y, ω(y)·weight)` for the smooth regular-part integral.
    fn regular_nodes(&self, domain: &Domain) -> Vec<(C64, f64)> {
        match self {
            Component::Disk { center, radius, value } => polar_nodes(*center, 0.0, *radius, 16, 64, |_| *value),
            Component::Polygon { vertices, value, centroid, .. } => {
                let (x, w) = gauss_legendre(10);
                let n = vertices.len();
                let mut out = Vec::new();
                for k in 0..n {
                    let (a, b) = (vertices[k] - centroid, vertices[(k + 1) % n] - vertices[k]);
                    let jac = (a.conj() * b).im;
                    for i in 0..10 {
                        let u = 0.5 * (1.0 + x[i]);
                        for j in 0..10 {
                            let v = 0.5 * (1.0 + x[j]);
                            out.push((centroid + u * (a + v * b), 0.25 * w[i] * w[j] * u * jac * value));
                        }
                    }
                }
                out
            }
            Component::Radial { center, rho, omega } => {
                let mut out = Vec::new();
                for k in 0..rho.len() - 1 {
                    out.extend(polar_nodes(*center, rho[k], rho[k + 1], 8, 64, |r| radial_eval(rho, omega, r)));
                }
                out
            }
            Component::Loglog { x0, scale, big } => domain
                .area_rule(*x0, 32, 128)
                .into_iter()
                .map(|(y, w)| (y, w * Self::loglog_capped(*x0, *scale, *big, y)))
                .collect(),
            Component::Particles(p) => (0..p.len()).map(|j| (p.positions[j], p.areas[j] * p.values[j])).collect(),
        }
    }

    /// `(centre, radius)` of a disk containing the support.
    fn bounding_disk(&self, domain: &Domain) -> (C64, f64) {
        match self {
            Component::Disk { center, radius, .. } => (*center, *radius),
            Component::Polygon { vertices, centroid, .. } => (*centroid, vertices.iter().map(|v| (v - centroid).norm()).fold(0.0, f64::max)),
            Component::Radial { center, rho, .. } => (*center, rho[rho.len() - 1]),
            Component::Loglog { x0, .. } => (*x0, domain.diam()),
            Component::Particles(p) => {
                let c = p.positions.iter().sum::<C64>() / p.len().max(1) as f64;
                (c, p.positions.iter().map(|x| (x - c).norm()).fold(0.0, f64::max))
            }
        }
    }

    /// `∫_Ω |ω|^p` as a logarithm (so that large p does not overflow).
    fn ln_lp_pow(&self, domain: &Domain, p: f64) -> Result<f64> {
        Ok(match self {
            Component::Disk { radius, value, .. } => p * value.abs().ln() + (PI * radius * radius).ln(),
            Component::Polygon { value, area, .. } => p * value.abs().ln() + area.ln(),
            Component::Radial { rho, omega, .. } => {
                let q = Quad::new(1e-14, 1e-12);
                let v: f64 = (0..rho.len() - 1)
                    .map(|k| q.integrate(|r| radial_eval(rho, omega, r).abs().powf(p) * r, rho[k], rho[k + 1]).value)
                    .sum();
                (TAU * v).ln()
            }
            Component::Loglog { x0, scale, big } => return loglog_ln_lp_pow(domain, *x0, *scale, *big, p),
            Component::Particles(c) => c.lp_pow(p).ln(),
        })
    }

    /// Particle discretization with about `cells` cells across a radius, and the
    /// boundary marker loop of uniform patches.
    fn discretize(&self, cells: usize, markers: usize) -> Result<(Particles, Option<MarkerLoop>)> {
        let mut out = Particles::empty();
        match self {
            Component::Disk { center, radius, value } => {
                ring_cells(&mut out, *center, 0.0, *radius, cells, |_| *value);
                let lp = (0..markers).map(|k| center + C64::from_polar(*radius, TAU * k as f64 / markers as f64)).collect();
                Ok((out, Some((lp, *value))))
            }
            Component::Radial { center, rho, omega } => {
                let (r0, r1) = (rho[0], rho[rho.len() - 1]);
                ring_cells(&mut out, *center, r0, r1, cells, |r| radial_eval(rho, omega, r));
                Ok((out, None))
            }
            Component::Polygon { vertices, value, area, .. } => {
                let h = (area / PI).sqrt() / cells as f64;
                let (lo, hi) = vertices.iter().fold((c64(f64::MAX, f64::MAX), c64(f64::MIN, f64::MIN)), |(lo, hi), v| {
                    (c64(lo.re.min(v.re), lo.im.min(v.im)), c64(hi.re.max(v.re), hi.im.max(v.im)))
                });
                let (nx, ny) = (((hi.re - lo.re) / h).ceil() as usize, ((hi.im - lo.im) / h).ceil() as usize);
                for i in 0..nx {
                    for j in 0..ny {
                        let p = lo + c64((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                        if self.eval(p) != 0.0 {
                            out.push(p, h * h, *value, h);
                        }
                    }
                }
                // markers spaced uniformly along the perimeter
                let n = vertices.len();
                let lens: Vec<f64> = (0..n).map(|k| (vertices[(k + 1) % n] - vertices[k]).norm()).collect();
                let total: f64 = lens.iter().sum();
                let mut lp = Vec::with_capacity(markers);
                let (mut k, mut acc) = (0, 0.0);
                for m in 0..markers {
                    let s = total * m as f64 / markers as f64;
                    while acc + lens[k] < s {
                        acc += lens[k];
                        k += 1;
                    }
                    lp.push(vertices[k] + (vertices[(k + 1) % n] - vertices[k]) * ((s - acc) / lens[k]));
                }
                Ok((out, Some((lp, *value))))
            }
            Component::Particles(p) => Ok((p.clone(), None)),
            Component::Loglog { .. } => Err(Error::Unsupported("log-log fields are not transported; only concentric (stationary) ones can drive a flow map".into())),
        }
    }
}

/// Polar cells over the annulus `r0 ≤ ρ ≤ r1` about `center`, about square, one particle per cell.
fn ring_cells(out: &mut Particles, center: C64, r0: f64, r1: f64, cells: usize, f: impl Fn(f64) -> f64) {
    let h = (r1 - r0) / cells as f64;
    for j in 0..cells {
        let (a, b) = (r0 + j as f64 * h, r0 + (j + 1) as f64 * h);
        let mid = (2.0 / 3.0) * (b * b * b - a * a * a) / (b * b - a * a);
        let m = if a == 0.0 { 1 } else { (TAU * 0.5 * (a + b) / h).round().max(3.0) as usize };
        let area = PI * (b * b - a * a) / m as f64;
        let value = f(0.5 * (a + b));
        for k in 0..m {
            let p = if m == 1 { center } else { center + C64::from_polar(mid, TAU * (k as f64 + 0.5) / m as f64) };
            out.push(p, area, value, h);
        }
    }
}

fn loglog_ln_lp_pow(domain: &Domain, x0: C64, scale: f64, big: f64, p: f64) -> Result<f64> {
    // along a ray of length R: ∫₀^R |scale·ln ln(big/r)|^p r dr with r = big·e^{−v}
    let ln_integrand = |v: f64| p * (scale.abs() * v.ln()).ln() + 2.0 * big.ln() - 2.0 * v;
    let v_peak = {
        // maximizer of p ln ln v − 2v: v ln v = p/2
        let mut v: f64 = 2.0;
        for _ in 0..60 {
            v = (p / 2.0) / v.ln().max(1e-3);
            v = v.max(1.0 + 1e-9);
        }
        v
    };
    let concentric = matches!(domain.kind, DomainKind::Disk { .. }) && (x0 - domain.outer.center()).norm() <= 1e-12 * domain.diam();
    let n_theta = if concentric { 1 } else { N_THETA };
    let dth = TAU / n_theta as f64;
    let mut rays = Vec::with_capacity(n_theta);
    for k in 0..n_theta {
        let e = C64::from_polar(1.0, (k as f64 + 0.5) * dth);
        let (a, b) = domain.ray_intervals(x0, e).first().copied().ok_or_else(|| Error::Domain("singularity outside the domain".into()))?;
        if a != 0.0 {
            return Err(Error::Domain("singularity outside the domain".into()));
        }
        rays.push(b);
    }
    let v0_min = rays.iter().map(|r| (big / r).ln()).fold(f64::INFINITY, f64::min);
    let shift = ln_integrand(v_peak.max(v0_min));
    let q = Quad::new(1e-13, 1e-11);
    let mut total = 0.0;
    for r in rays {
        let v0 = (big / r).ln();
        let v1 = v0.max(v_peak) + 60.0 + 10.0 * p.sqrt();
        let mut pts = vec![v0];
        if v_peak > v0 {
            pts.push(v_peak);
        }
        pts.push(v1);
        let res = q.integrate_pieces(|v| (ln_integrand(v) - shift).exp(), &pts);
        if !res.converged {
            return Err(Error::Convergence(format!("log-log L^p quadrature at p = {p}")));
        }
        total += res.value * dth;
    }
    Ok(total.ln() + shift)
}

#[derive(Debug, Clone)]
pub struct VorticityField {
    pub components: Vec<Component>,
}

impl VorticityField {
    pub fn new(specs: &[VorticitySpec], domain: &Domain) -> Result<VorticityField> {
        let components = specs.iter().map(|s| Component::from_spec(s, domain)).collect::<Result<Vec<_>>>()?;
        Ok(VorticityField { components })
    }

    pub fn zero() -> VorticityField {
        VorticityField { components: vec![] }
    }

    /// `ω(y)`, excluding particle clouds.
    pub fn eval(&self, y: C64) -> f64 {
        self.components.iter().map(|c| c.eval(y)).sum()
    }

    /// `‖ω‖_{Lᵖ(Ω)}`; components must have disjoint supports.
    pub fn lp_norm(&self, domain: &Domain, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return argument("Lp norms need p ≥ 1");
        }
        if self.components.is_empty() {
            return Ok(0.0);
        }
        let discs: Vec<(C64, f64)> = self.components.iter().map(|c| c.bounding_disk(domain)).collect();
        for i in 0..discs.len() {
            for j in i + 1..discs.len() {
                if (discs[i].0 - discs[j].0).norm() < discs[i].1 + discs[j].1 {
                    return Err(Error::Unsupported("Lp norms of overlapping components".into()));
                }
            }
        }
        let logs = self.components.iter().map(|c| c.ln_lp_pow(domain, p)).collect::<Result<Vec<_>>>()?;
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
        Ok(((s.ln() + m) / p).exp())
    }

    fn is_stationary(&self, domain: &Domain) -> bool {
        self.components.iter().all(|c| c.concentric(domain))
    }
}

/// `‖ω‖_{Lᵖ}/θ(p)` for each listed p.
pub fn lp_membership_ratio(field: &VorticityField, domain: &Domain, germ: &Germ, ps: &[f64]) -> Result<Vec<f64>> {
    ps.iter()
        .map(|&p| {
            if p < germ.p0 {
                return argument(format!("p = {p} lies below the germ's p0 = {}", germ.p0));
            }
            Ok(field.lp_norm(domain, p)? / germ.eval(p)?)
        })
        .collect()
}

/// Biot–Savart operator `x ↦ X₀(x) + ∫∇⊥ₓG(x,y)ω(y)dy` for a fixed field.
#[derive(Debug, Clone)]
pub struct BiotSavart {
    pub green: Arc<GreenEvaluator>,
    pub circulations: Vec<f64>,
    pub field: VorticityField,
    nodes: Vec<Vec<(C64, f64)>>,
    concentric: Vec<bool>,
}

impl BiotSavart {
    pub fn new(green: Arc<GreenEvaluator>, field: VorticityField, circulations: Vec<f64>) -> Result<BiotSavart> {
        if circulations.len() != green.d() {
            return argument(format!("expected {} circulations, got {}", green.d(), circulations.len()));
        }
        let domain = &green.domain;
        let nodes = field.components.iter().map(|c| c.regular_nodes(domain)).collect();
        let concentric = field.components.iter().map(|c| c.concentric(domain)).collect();
        Ok(BiotSavart { green, circulations, field, nodes, concentric })
    }

    fn check_point(&self, x: C64) -> Result<()> {
        let dom = &self.green.domain;
        if !dom.contains(x) {
            return Err(Error::Domain(format!("({}, {}) is not an interior point", x.re, x.im)));
        }
        Ok(())
    }

    fn regular_sum(&self, nodes: &[(C64, f64)], x: C64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (y, w) in nodes {
            s += self.green.dx_reg(x, *y).conj() * *w;
        }
        rot(&s)
    }

    /// Velocity at an interior point.
    pub fn velocity(&self, x: C64) -> Result<C64> {
        self.check_point(x)?;
        self.field_velocity(x)
    }

    fn field_velocity(&self, x: C64) -> Result<C64> {
        let dom = &self.green.domain;
        let mut u = self.green.x0(&self.circulations, x)?;
        for (k, c) in self.field.components.iter().enumerate() {
            if let (Component::Loglog { x0, scale, big }, false) = (c, self.concentric[k]) {
                u += self.polar_velocity(x, |y| Component::loglog_capped(*x0, *scale, *big, y), Some(*x0));
                continue;
            }
            u += c.free_velocity(dom, x);
            // the regular part of a concentric radial field vanishes: the free stream
            // function is already constant on each circle with zero inner flux
            if !self.concentric[k] {
                u += self.regular_sum(&self.nodes[k], x);
            }
        }
        Ok(u)
    }

    /// `∫ rot(conj(D_x G(x,y)))ω(y)dy` in polar coordinates about `x`, adaptive in both
    /// angle and radius so that boundary-adjacent points are resolved.
    fn polar_velocity(&self, x: C64, omega: impl Fn(C64) -> f64, kink: Option<C64>) -> C64 {
        let dom = &self.green.domain;
        let inner = Quad::new(1e-12, 1e-10);
        let outer = Quad::new(1e-10, 1e-9);
        let ray = |th: f64, part: usize| {
            let e = C64::from_polar(1.0, th);
            let mut v = 0.0;
            for (a, b) in dom.ray_intervals(x, e) {
                let mut pts = vec![a];
                if let Some(k) = kink {
                    let c = ((k - x) * e.conj()).re;
                    if c > a && c < b {
                        pts.push(c);
                    }
                }
                pts.push(b);
                v += inner
                    .integrate_pieces(
                        |r| {
                            let y = x + e * r;
                            let k = rot(&self.green.dx(x, y).conj()) * (omega(y) * r);
                            if part == 0 {
                                k.re
                            } else {
                                k.im
                            }
                        },
                        &pts,
                    )
                    .value;
            }
            v
        };
        c64(outer.integrate(|th| ray(th, 0), 0.0, TAU).value, outer.integrate(|th| ray(th, 1), 0.0, TAU).value)
    }

    /// The regular-part contribution computed by quadrature for every component,
    /// including those where it vanishes in closed form.
    pub fn regular_part_quadrature(&self, x: C64) -> Result<C64> {
        self.check_point(x)?;
        Ok(self.nodes.iter().map(|n| self.regular_sum(n, x)).sum())
    }

    /// Velocity of the transported particle state.
    fn cloud_velocity(&self, cloud: &Particles, pos: &[C64], images: &CloudCache, x: C64) -> Result<C64> {
        let mut u = self.green.x0(&self.circulations, x)?;
        let mut reg = C64::new(0.0, 0.0);
        for j in 0..pos.len() {
            let m = cloud.areas[j] * cloud.values[j];
            u += rankine(x - pos[j], cloud.cores[j]) * m;
            reg += images.dx_reg(&self.green, x, pos[j]) * m;
        }
        Ok(u + rot(&reg.conj()))
    }
}

/// Per-state shortcut for the disk image kernel.
enum CloudCache {
    Disk(f64),
    General,
}

impl CloudCache {
    fn new(green: &GreenEvaluator) -> Self {
        match green.domain.kind {
            DomainKind::Disk { r } if green.analytic().is_some() && green.domain.outer.center() == C64::new(0.0, 0.0) => CloudCache::Disk(r),
            _ => CloudCache::General,
        }
    }

    fn dx_reg(&self, green: &GreenEvaluator, x: C64, y: C64) -> C64 {
        match self {
            // g(x,y) = −(1/2π) log(|y|·|x − R²/ȳ|/R): D_x g = −1/(2π(x − y*))
            CloudCache::Disk(r) => {
                if y.norm_sqr() == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                let ys = r * r / y.conj();
                -1.0 / (TAU * (x - ys))
            }
            CloudCache::General => green.dx_reg(x, y),
        }
    }
}

/// Tracer initial positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TracerSpec {
    /// `n × n` grid over the bounding box, keeping interior points.
    Grid(usize),
    List(Vec<[f64; 2]>),
}

impl TracerSpec {
    pub fn points(&self, domain: &Domain) -> Result<Vec<C64>> {
        match self {
            TracerSpec::Grid(n) => {
                if *n < 2 {
                    return argument("tracer grid needs n ≥ 2");
                }
                let poly = domain.outer.polygon();
                let (lo, hi) = poly.iter().fold((c64(f64::MAX, f64::MAX), c64(f64::MIN, f64::MIN)), |(lo, hi), v| {
                    (c64(lo.re.min(v.re), lo.im.min(v.im)), c64(hi.re.max(v.re), hi.im.max(v.im)))
                });
                let margin = 1e-3 * domain.diam();
                let mut out = vec![];
                for i in 0..*n {
                    for j in 0..*n {
                        let p = lo + c64((hi.re - lo.re) * (i as f64 + 0.5) / *n as f64, (hi.im - lo.im) * (j as f64 + 0.5) / *n as f64);
                        if domain.contains(p) && domain.dist_to_boundary(p) > margin {
                            out.push(p);
                        }
                    }
                }
                Ok(out)
            }
            TracerSpec::List(l) => {
                let pts: Vec<C64> = l.iter().map(|p| pt(*p)).collect();
                if let Some(p) = pts.iter().find(|p| !domain.contains(**p)) {
                    return Err(Error::Domain(format!("tracer ({}, {}) is not interior", p.re, p.im)));
                }
                Ok(pts)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowOptions {
    pub tol: f64,
    /// Number of stored times after t = 0.
    pub n_out: usize,
    /// Particle cells across a patch radius.
    pub cells: usize,
    /// Markers on each patch boundary.
    pub markers: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { tol: 1e-8, n_out: 4, cells: 8, markers: 256 }
    }
}

#[derive(Debug, Clone)]
pub struct FlowMapRun {
    pub times: Vec<f64>,
    /// `Φ(t_k, x_j)`, indexed `[k][j]`.
    pub tracers: Vec<Vec<C64>>,
    /// Boundary marker loops of uniform patches, `[k][loop]`.
    pub markers: Vec<Vec<Vec<C64>>>,
    pub marker_values: Vec<f64>,
    /// Particle discretization (absent for stationary fields).
    pub cloud: Option<Particles>,
    pub cloud_positions: Vec<Vec<C64>>,
    pub stationary: bool,
    pub steps: usize,
}

fn pack(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|p| [p.re, p.im]).collect()
}

fn unpack(y: &[f64]) -> Vec<C64> {
    y.chunks(2).map(|p| c64(p[0], p[1])).collect()
}

/// `Φ(t, x) = x + ∫₀ᵗ u(s, Φ(s, x)) ds` for the given tracers, transporting the
/// vorticity with the flow unless it is stationary.
pub fn flow_map(bs: &BiotSavart, tracers: &[C64], t_end: f64, opts: &FlowOptions) -> Result<FlowMapRun> {
    let domain = &bs.green.domain;
    if !t_end.is_finite() || !(opts.tol > 0.0) || opts.n_out == 0 {
        return argument("flow map needs a finite T, tol > 0 and at least one output time");
    }
    if let Some(p) = tracers.iter().find(|p| !domain.contains(**p)) {
        return Err(Error::Domain(format!("tracer ({}, {}) is not interior", p.re, p.im)));
    }
    let stationary = bs.field.is_stationary(domain);
    let times: Vec<f64> = (0..=opts.n_out).map(|k| t_end * k as f64 / opts.n_out as f64).collect();
    let mut run = FlowMapRun {
        times: times.clone(),
        tracers: vec![],
        markers: vec![],
        marker_values: vec![],
        cloud: None,
        cloud_positions: vec![],
        stationary,
        steps: 0,
    };
    let ode = OdeOptions::with_tol(opts.tol);
    if stationary {
        let sol = dopri5(
            |_, y, dy| {
                let z = unpack(y);
                let v = z.par_iter().map(|p| bs.velocity(*p)).collect::<Result<Vec<_>>>()?;
                dy.copy_from_slice(&pack(&v));
                Ok(())
            },
            0.0,
            &pack(tracers),
            t_end,
            &ode,
            |_, _| vec![],
        )
        .map_err(|e| escaped(e, "tracer"))?;
        run.steps = sol.steps.len();
        run.tracers = times.iter().map(|t| unpack(&sol.eval(*t))).collect();
    } else {
        let mut cloud = Particles::empty();
        let mut loops = vec![];
        for c in &bs.field.components {
            let (p, lp) = c.discretize(opts.cells, opts.markers)?;
            cloud.extend(p);
            if let Some((l, v)) = lp {
                loops.push(l);
                run.marker_values.push(v);
            }
        }
        let nc = cloud.len();
        let nm: usize = loops.iter().map(|l| l.len()).sum();
        let mut z0 = cloud.positions.clone();
        for l in &loops {
            z0.extend(l);
        }
        z0.extend(tracers);
        let cache = CloudCache::new(&bs.green);
        let sol = dopri5(
            |_, y, dy| {
                let z = unpack(y);
                let pos = &z[..nc];
                let v = z.par_iter().map(|p| bs.cloud_velocity(&cloud, pos, &cache, *p)).collect::<Result<Vec<_>>>()?;
                dy.copy_from_slice(&pack(&v));
                Ok(())
            },
            0.0,
            &pack(&z0),
            t_end,
            &ode,
            |_, _| vec![],
        )?;
        run.steps = sol.steps.len();
        for t in &times {
            let z = unpack(&sol.eval(*t));
            run.cloud_positions.push(z[..nc].to_vec());
            let mut off = nc;
            let mut ls = vec![];
            for l in &loops {
                ls.push(z[off..off + l.len()].to_vec());
                off += l.len();
            }
            run.markers.push(ls);
            run.tracers.push(z[nc + nm..].to_vec());
        }
        run.cloud = Some(cloud);
    }
    let slack = 1e-6 * domain.diam();
    for (k, zs) in run.tracers.iter().enumerate() {
        if let Some(p) = zs.iter().find(|p| !domain.contains(**p) && domain.dist_to_boundary(**p) > slack) {
            return Err(Error::Conservation(format!("tracer left the domain by t = {}: ({}, {})", run.times[k], p.re, p.im)));
        }
    }
    Ok(run)
}

fn escaped(e: Error, what: &str) -> Error {
    match e {
        Error::Domain(m) => Error::Conservation(format!("{what} left the domain during integration: {m}")),
        other => other,
    }
}

impl FlowMapRun {
    /// Velocity field at stored time `k`.
    pub fn velocity(&self, bs: &BiotSavart, k: usize, x: C64) -> Result<C64> {
        match &self.cloud {
            None => bs.velocity(x),
            Some(c) => {
                if !bs.green.domain.contains(x) {
                    return Err(Error::Domain(format!("({}, {}) is not an interior point", x.re, x.im)));
                }
                bs.cloud_velocity(c, &self.cloud_positions[k], &CloudCache::new(&bs.green), x)
            }
        }
    }

    /// Shoelace areas of the marker loops at stored time `k`.
    pub fn marker_areas(&self, k: usize) -> Vec<f64> {
        self.markers.get(k).map(|ls| ls.iter().map(|l| shoelace(l).abs()).collect()).unwrap_or_default()
    }

    /// `‖ω(t_k)‖_{Lᵖ}` of the transported patches from their advected boundaries.
    pub fn patch_lp_norm(&self, k: usize, p: f64) -> f64 {
        self.marker_areas(k).iter().zip(&self.marker_values).map(|(a, v)| a * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    /// `‖ω(t_k)‖_{Lᵖ}` of the particle representation.
    pub fn cloud_lp_norm(&self, p: f64) -> Option<f64> {
        self.cloud.as_ref().map(|c| c.lp_pow(p).powf(1.0 / p))
    }

    /// Counter-clockwise circulation of the velocity at time `k` around curve `i`.
    pub fn circulation(&self, bs: &BiotSavart, k: usize, i: usize) -> Result<f64> {
        let cache = CloudCache::new(&bs.green);
        match &self.cloud {
            None => bs.green.circulation(i, |x| bs.field_velocity(x).unwrap_or_default()),
            Some(c) => bs.green.circulation(i, |x| bs.cloud_velocity(c, &self.cloud_positions[k], &cache, x).unwrap_or_default()),
        }
    }
}

/// Base points with partners at dyadic separations `2⁻ᵏ·diam(Ω)`.
#[derive(Debug, Clone)]
pub struct PairSet {
    pub points: Vec<C64>,
    /// `(i, j, k)`: points `i` and `j` at separation `2⁻ᵏ·diam`.
    pub pairs: Vec<(usize, usize, u32)>,
}

impl PairSet {
    pub fn sample(domain: &Domain, n_base: usize, k_min: u32, k_max: u32, seed: u64) -> Result<PairSet> {
        if k_min > k_max || n_base == 0 {
            return argument("empty pair sample");
        }
        let diam = domain.diam();
        let margin = 1e-3 * diam;
        let poly = domain.outer.polygon();
        let (lo, hi) = poly.iter().fold((c64(f64::MAX, f64::MAX), c64(f64::MIN, f64::MIN)), |(lo, hi), v| {
            (c64(lo.re.min(v.re), lo.im.min(v.im)), c64(hi.re.max(v.re), hi.im.max(v.im)))
        });
        let ok = |p: C64| domain.contains(p) && domain.dist_to_boundary(p) > margin;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::new();
        let mut pairs = Vec::new();
        let (mut attempts, mut base) = (0, 0);
        while base < n_base {
            attempts += 1;
            if attempts > 1000 * n_base {
                return Err(Error::Convergence("could not place base points inside the domain".into()));
            }
            let x = c64(rng.gen_range(lo.re..hi.re), rng.gen_range(lo.im..hi.im));
            if !ok(x) {
                continue;
            }
            let i = points.len();
            points.push(x);
            base += 1;
            for k in k_min..=k_max {
                let h = diam * 0.5f64.powi(k as i32);
                for _ in 0..32 {
                    let y = x + C64::from_polar(h, rng.gen_range(0.0..TAU));
                    if ok(y) {
                        pairs.push((i, points.len(), k));
                        points.push(y);
                        break;
                    }
                }
            }
        }
        Ok(PairSet { points, pairs })
    }

    pub fn separation(&self, p: usize) -> f64 {
        let (i, j, _) = self.pairs[p];
        (self.points[i] - self.points[j]).norm()
    }
}

/// `κ̂ = sup ‖u(x) − u(y)‖/μ(‖x − y‖)` over the sampled pairs with `‖x − y‖ ≤ a`.
pub fn velocity_modulus_estimate(velocity: impl Fn(C64) -> Result<C64> + Sync, pairs: &PairSet, mu: &Modulus) -> Result<f64> {
    let u = pairs.points.par_iter().map(|p| velocity(*p)).collect::<Result<Vec<_>>>()?;
    let mut kappa: f64 = 0.0;
    for (p, (i, j, _)) in pairs.pairs.iter().enumerate() {
        let h = pairs.separation(p);
        if h <= mu.a {
            kappa = kappa.max((u[*i] - u[*j]).norm() / mu.eval(h)?);
        }
    }
    Ok(kappa)
}

/// `κ̂` over all stored times of a run.
pub fn run_modulus_estimate(bs: &BiotSavart, run: &FlowMapRun, pairs: &PairSet, mu: &Modulus) -> Result<f64> {
    let mut kappa: f64 = 0.0;
    for k in 0..run.times.len() {
        kappa = kappa.max(velocity_modulus_estimate(|x| run.velocity(bs, k, x), pairs, mu)?);
        if run.stationary {
            break;
        }
    }
    Ok(kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationStats {
    pub t: f64,
    pub checked: usize,
    pub violations: usize,
    /// Pairs beyond the modulus bound a, or whose bound saturates at a.
    pub skipped: usize,
}

impl ViolationStats {
    pub fn fraction(&self) -> f64 {
        if self.checked == 0 {
            0.0
        } else {
            self.violations as f64 / self.checked as f64
        }
    }
}

/// Fraction of sampled pairs with `‖Φ(t,x) − Φ(t,y)‖ > Γ_t(‖x − y‖)` at every stored time.
/// The run's tracers must be `pairs.points`.
pub fn modulus_violation_check(run: &FlowMapRun, pairs: &PairSet, family: &GammaFamily) -> Result<Vec<ViolationStats>> {
    if run.tracers.first().map(|t| t.len()) != Some(pairs.points.len()) {
        return argument("run tracers do not match the pair sample");
    }
    let mut out = vec![];
    for (k, t) in run.times.iter().enumerate() {
        let mut st = ViolationStats { t: *t, checked: 0, violations: 0, skipped: 0 };
        for (p, (i, j, _)) in pairs.pairs.iter().enumerate() {
            let h = pairs.separation(p);
            if h > family.mu.a {
                st.skipped += 1;
                continue;
            }
            let g = family.gamma_any(*t, h)?;
            if g.saturated {
                st.skipped += 1;
                continue;
            }
            st.checked += 1;
            let d = (run.tracers[k][*i] - run.tracers[k][*j]).norm();
            if d > g.value * (1.0 + 1e-9) {
                st.violations += 1;
            }
        }
        out.push(st);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderFit {
    pub r_hat: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub width: f64,
    pub scales: usize,
}

/// Slope of `log max‖ΔΦ‖` against `log ‖Δx‖` over the dyadic scales, at stored time `k`.
pub fn holder_exponent_estimate(run: &FlowMapRun, pairs: &PairSet, k: usize) -> Result<HolderFit> {
    let z = run.tracers.get(k).ok_or_else(|| Error::Argument(format!("no stored time {k}")))?;
    let mut by_scale: std::collections::BTreeMap<u32, (f64, f64)> = Default::default();
    for (p, (i, j, s)) in pairs.pairs.iter().enumerate() {
        let e = by_scale.entry(*s).or_insert((0.0, 0.0));
        e.0 = e.0.max((z[*i] - z[*j]).norm());
        e.1 = e.1.max(pairs.separation(p));
    }
    let pts: Vec<(f64, f64)> = by_scale.values().filter(|(d, h)| *d > 0.0 && *h > 0.0).map(|(d, h)| (h.ln(), d.ln())).collect();
    if pts.len() < 6 {
        return argument("Hölder fit needs at least 6 dyadic scales");
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if syy == 0.0 || sxx == 0.0 {
        return Err(Error::Singular("degenerate Hölder sample: all pairs mapped to equal distances".into()));
    }
    let slope = sxy / sxx;
    let resid: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let se = (resid / (n - 2.0) / sxx).sqrt();
    Ok(HolderFit { r_hat: slope, width: 2.0 * se, scales: pts.len() })
}
