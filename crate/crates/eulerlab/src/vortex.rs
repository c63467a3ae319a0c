//! Point-vortex dynamics driven by the hydrodynamic Green function: the
//! Kirchhoff–Routh energy W, its Hamiltonian vector field, adaptive
//! integration with collision and boundary events, and the weak-form residual.

use std::sync::Arc;

use serde::Serialize;

use crate::cx::{rot, Cx};
use crate::error::{argument, Error, Result};
use crate::geometry::{c64, C64};
use crate::green::{Analytic, GreenEvaluator};
use crate::ode::{dopri5, OdeOptions, OdeSolution, Termination};
use crate::quad::gauss_legendre;
use crate::taylor::TaylorSteps;

/// Collision threshold as a fraction of diam(Ω).
pub const EPS_COLL: f64 = 1e-4;
/// Boundary-proximity threshold as a fraction of diam(Ω).
pub const EPS_BDRY: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct VortexSystem {
    pub green: Arc<GreenEvaluator>,
    pub positions: Vec<C64>,
    pub strengths: Vec<f64>,
    pub circulations: Vec<f64>,
}

/// Velocities from a closed-form kernel, on points or on jets.
pub fn analytic_velocities<T: Cx>(kernel: Analytic<'_>, strengths: &[f64], circulations: &[f64], z: &[T]) -> Vec<T> {
    let n = z.len();
    (0..n)
        .map(|l| {
            // (α_l/2)∇⊥r = α_l·i·conj(D_g(z_l, z_l))
            let mut v = rot(&kernel.d_reg(&z[l], &z[l]).conj()).scale_re(strengths[l]);
            for m in 0..n {
                if m != l {
                    v = v + rot(&kernel.d(&z[l], &z[m]).conj()).scale_re(strengths[m]);
                }
            }
            match kernel.x0(circulations, &z[l]) {
                Some(x0) => v + x0,
                None => v,
            }
        })
        .collect()
}

fn min_pair(z: &[C64]) -> (f64, (usize, usize)) {
    let mut best = (f64::INFINITY, (0, 0));
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let d = (z[i] - z[j]).norm();
            if d < best.0 {
                best = (d, (i, j));
            }
        }
    }
    best
}

fn unpack(y: &[f64]) -> Vec<C64> {
    y.chunks(2).map(|p| c64(p[0], p[1])).collect()
}

fn pack(z: &[C64]) -> Vec<f64> {
    z.iter().flat_map(|p| [p.re, p.im]).collect()
}

impl VortexSystem {
    pub fn new(green: Arc<GreenEvaluator>, positions: Vec<C64>, strengths: Vec<f64>, circulations: Vec<f64>) -> Result<Self> {
        if positions.len() != strengths.len() {
            return argument("positions and strengths differ in length");
        }
        if circulations.len() != green.d() {
            return argument(format!("expected {} circulations, got {}", green.d(), circulations.len()));
        }
        if strengths.iter().any(|a| *a == 0.0 || !a.is_finite()) {
            return argument("vortex strengths must be nonzero and finite");
        }
        for p in &positions {
            if !green.domain.contains(*p) {
                return Err(Error::Domain(format!("vortex at ({}, {}) is not inside the domain", p.re, p.im)));
            }
        }
        if positions.len() > 1 && min_pair(&positions).0 == 0.0 {
            return Err(Error::Singular("coincident vortices".into()));
        }
        Ok(VortexSystem { green, positions, strengths, circulations })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn diam(&self) -> f64 {
        self.green.domain.diam()
    }

    /// Kirchhoff–Routh energy `W = Σα_l ψ₀(x_l) + ½Σα_l² r(x_l) + ½Σ_{l≠m} α_l α_m G(x_l, x_m)`.
    pub fn energy_at(&self, z: &[C64]) -> Result<f64> {
        let ev = &self.green;
        let mut w = 0.0;
        for (l, (p, a)) in z.iter().zip(&self.strengths).enumerate() {
            w += a * ev.psi0(&self.circulations, *p)? + 0.5 * a * a * ev.robin(*p);
            for m in l + 1..z.len() {
                if z[m] == *p {
                    return Err(Error::Singular(format!("vortices {l} and {m} coincide")));
                }
                w += a * self.strengths[m] * ev.green(*p, z[m]);
            }
        }
        Ok(w)
    }

    pub fn energy(&self) -> Result<f64> {
        self.energy_at(&self.positions)
    }

    /// `dz_l/dt = X₀(z_l) + (α_l/2)∇⊥r(z_l) + Σ_{m≠l} α_m ∇⊥_x G(z_l, z_m)`.
    pub fn velocities_at(&self, z: &[C64]) -> Result<Vec<C64>> {
        if z.len() > 1 {
            let (d, (i, j)) = min_pair(z);
            if d < EPS_COLL * self.diam() {
                return Err(Error::Singular(format!("vortices {i} and {j} closer than the collision threshold")));
            }
        }
        self.field(z)
    }

    /// The vector field without the collision guard; the integrators stop on events instead.
    fn field(&self, z: &[C64]) -> Result<Vec<C64>> {
        if let Some(k) = self.green.analytic() {
            return Ok(analytic_velocities(k, &self.strengths, &self.circulations, z));
        }
        let ev = &self.green;
        z.iter()
            .enumerate()
            .map(|(l, p)| {
                let mut v = ev.x0(&self.circulations, *p)? + 0.5 * self.strengths[l] * rot(&ev.robin_grad(*p));
                for (m, q) in z.iter().enumerate() {
                    if m != l {
                        v += self.strengths[m] * ev.perp_grad_x(*p, *q);
                    }
                }
                Ok(v)
            })
            .collect()
    }

    pub fn velocities(&self) -> Result<Vec<C64>> {
        self.velocities_at(&self.positions)
    }

    /// `Σ α_l |z_l|²`, conserved in the disk without circulations.
    pub fn angular_impulse(&self, z: &[C64]) -> f64 {
        z.iter().zip(&self.strengths).map(|(p, a)| a * p.norm_sqr()).sum()
    }

    pub(crate) fn event_values(&self, z: &[C64]) -> Vec<f64> {
        let diam = self.diam();
        let pair = if z.len() > 1 { min_pair(z).0 - EPS_COLL * diam } else { f64::INFINITY };
        let bdry = z.iter().map(|p| self.green.domain.dist_to_boundary(*p)).fold(f64::INFINITY, f64::min);
        vec![pair, bdry - EPS_BDRY * diam]
    }

    pub(crate) fn classify_event(&self, z: &[C64], index: usize, t: f64) -> TrajectoryEnd {
        if index == 0 {
            let (_, pair) = min_pair(z);
            TrajectoryEnd::Collision { pair, t }
        } else {
            let (vortex, _) = z
                .iter()
                .map(|p| self.green.domain.dist_to_boundary(*p))
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
            TrajectoryEnd::BoundaryProximity { vortex, t }
        }
    }

    /// Integrates from `t = 0` to `t_end` (negative for backward runs).
    pub fn integrate(&self, t_end: f64, tol: f64, method: Method) -> Result<VortexTrajectory> {
        if !(tol > 0.0) {
            return argument("tolerance must be positive");
        }
        let start = self.event_values(&self.positions);
        if let Some(i) = start.iter().position(|g| *g <= 0.0) {
            let end = self.classify_event(&self.positions, i, 0.0);
            return self.finish(Dense::Frozen(self.positions.clone()), vec![0.0], end);
        }
        match method {
            Method::Rk45 => {
                let opts = OdeOptions::with_tol(tol);
                let sol = dopri5(
                    |_, y, dy| {
                        let v = self.field(&unpack(y))?;
                        dy.copy_from_slice(&pack(&v));
                        Ok(())
                    },
                    0.0,
                    &pack(&self.positions),
                    t_end,
                    &opts,
                    |_, y| self.event_values(&unpack(y)),
                )?;
                let end = match sol.termination {
                    Termination::Horizon => TrajectoryEnd::Horizon,
                    Termination::Event { index, t } => self.classify_event(&unpack(&sol.y_end), index, t),
                };
                let grid = sol.grid();
                self.finish(Dense::Rk(sol), grid, end)
            }
            Method::Taylor { order } => {
                let run = crate::taylor::taylor_integrate(self, order, t_end, tol, None)?;
                let grid = run.steps.grid();
                let end = run.termination;
                self.finish(Dense::Taylor(run.steps), grid, end)
            }
        }
    }

    fn finish(&self, dense: Dense, times: Vec<f64>, termination: TrajectoryEnd) -> Result<VortexTrajectory> {
        let mut positions = Vec::with_capacity(times.len());
        let mut energy = Vec::with_capacity(times.len());
        let mut min_pair_dist = Vec::with_capacity(times.len());
        let mut dist_to_boundary = Vec::with_capacity(times.len());
        for &t in &times {
            let z = dense.eval(t);
            energy.push(self.energy_at(&z)?);
            min_pair_dist.push(if z.len() > 1 { min_pair(&z).0 } else { f64::NAN });
            dist_to_boundary.push(z.iter().map(|p| self.green.domain.dist_to_boundary(*p)).fold(f64::INFINITY, f64::min));
            positions.push(z);
        }
        let steps = times.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(VortexTrajectory { times, positions, energy, min_pair_dist, dist_to_boundary, steps, termination, dense })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Rk45,
    Taylor { order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryEnd {
    Horizon,
    Collision { pair: (usize, usize), t: f64 },
    BoundaryProximity { vortex: usize, t: f64 },
}

/// Continuous representation of a trajectory.
#[derive(Debug, Clone)]
pub enum Dense {
    Frozen(Vec<C64>),
    Rk(OdeSolution),
    Taylor(TaylorSteps),
}

impl Dense {
    pub fn eval(&self, t: f64) -> Vec<C64> {
        match self {
            Dense::Frozen(z) => z.clone(),
            Dense::Rk(sol) => unpack(&sol.eval(t)),
            Dense::Taylor(steps) => steps.eval(t),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VortexTrajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<C64>>,
    pub energy: Vec<f64>,
    pub min_pair_dist: Vec<f64>,
    pub dist_to_boundary: Vec<f64>,
    /// Accepted step sizes.
    pub steps: Vec<f64>,
    pub termination: TrajectoryEnd,
    pub dense: Dense,
}

impl VortexTrajectory {
    /// `max_k |W(t_k) − W(t_0)|`.
    pub fn hamiltonian_drift(&self) -> f64 {
        let w0 = self.energy[0];
        self.energy.iter().map(|w| (w - w0).abs()).fold(0.0, f64::max)
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Rows `t, z1x, z1y, …, W, min_pair_dist, dist_to_boundary`.
    pub fn csv_rows(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let n = self.positions[0].len();
        let mut header = vec!["t".to_string()];
        for i in 1..=n {
            header.push(format!("z{i}x"));
            header.push(format!("z{i}y"));
        }
        header.extend(["W", "min_pair_dist", "dist_to_boundary"].map(String::from));
        let rows = (0..self.times.len())
            .map(|k| {
                let mut r = vec![self.times[k]];
                r.extend(pack(&self.positions[k]));
                r.extend([self.energy[k], self.min_pair_dist[k], self.dist_to_boundary[k]]);
                r
            })
            .collect();
        (header, rows)
    }
}

/// `s(t)·b(x)`: a C^∞ ramp from 1 (t ≤ t_a) to 0 (t ≥ t_b) times the bump
/// `(1 − |x−c|²/ρ²)⁶` supported in the disk `B(c, ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunction {
    pub center: C64,
    pub radius: f64,
    pub t_a: f64,
    pub t_b: f64,
}

fn smooth_unit(u: f64) -> (f64, f64) {
    // value and derivative of the C^∞ step from 0 (u ≤ 0) to 1 (u ≥ 1)
    if u <= 0.0 {
        return (0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0);
    }
    let (a, b) = ((-1.0 / u).exp(), (-1.0 / (1.0 - u)).exp());
    let (da, db) = (a / (u * u), -b / ((1.0 - u) * (1.0 - u)));
    let s = a + b;
    (a / s, (da * s - a * (da + db)) / (s * s))
}

impl TestFunction {
    /// `(s(t), s'(t))`.
    pub fn ramp(&self, t: f64) -> (f64, f64) {
        let w = self.t_b - self.t_a;
        let (v, dv) = smooth_unit((self.t_b - t) / w);
        (v, -dv / w)
    }

    /// `(b(x), ∇b(x))`.
    pub fn bump(&self, x: C64) -> (f64, C64) {
        let d = x - self.center;
        let u = 1.0 - d.norm_sqr() / (self.radius * self.radius);
        if u <= 0.0 {
            return (0.0, C64::new(0.0, 0.0));
        }
        (u.powi(6), -12.0 * u.powi(5) * d / (self.radius * self.radius))
    }
}

const RAMP_PANELS: usize = 64;

/// Residual of the weak vorticity formulation for the atomic measure `Σ α_l δ_{z_l(t)}`.
pub fn weak_residual(sys: &VortexSystem, traj: &VortexTrajectory, phi: &TestFunction) -> Result<f64> {
    let ev = &sys.green;
    if !(phi.radius > 0.0) || ev.domain.dist_to_boundary(phi.center) <= phi.radius || !ev.domain.contains(phi.center) {
        return argument("test-function support must lie strictly inside the domain");
    }
    if !(0.0 <= phi.t_a && phi.t_a < phi.t_b && phi.t_b <= traj.t_end()) {
        return argument("test function must ramp down to zero before the end of the trajectory");
    }
    if sys.is_empty() {
        return Ok(0.0);
    }
    let alpha = &sys.strengths;
    let initial: f64 = traj.positions[0].iter().zip(alpha).map(|(z, a)| a * phi.bump(*z).0).sum();
    // time panels: trajectory grid up to t_b, split at the ramp breakpoints
    let mut cuts: Vec<f64> = traj.times.iter().copied().filter(|t| *t < phi.t_b).collect();
    cuts.extend([phi.t_a, phi.t_b]);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    // panels inside the ramp are refined so the quadrature resolves s'(t)
    let ramp_panel = (phi.t_b - phi.t_a) / RAMP_PANELS as f64;
    let (gx, gw) = gauss_legendre(5);
    let mut integral = 0.0;
    for w in cuts.windows(2) {
        let pieces = if w[0] >= phi.t_a { ((w[1] - w[0]) / ramp_panel).ceil().max(1.0) as usize } else { 1 };
        let width = (w[1] - w[0]) / pieces as f64;
        for p in 0..pieces {
            let a = w[0] + p as f64 * width;
            let (c, h) = (a + 0.5 * width, 0.5 * width);
            for (x, wt) in gx.iter().zip(&gw) {
                let t = c + h * x;
                integral += wt * h * weak_integrand(sys, &traj.dense.eval(t), phi, t)?;
            }
        }
    }
    Ok((initial + integral).abs())
}

/// `Σ α_l L_φ(t, z_l) + Σ_{l,m} α_l α_m H_φ(t, z_l, z_m)`.
fn weak_integrand(sys: &VortexSystem, z: &[C64], phi: &TestFunction, t: f64) -> Result<f64> {
    let ev = &sys.green;
    let alpha = &sys.strengths;
    let (s, ds) = phi.ramp(t);
    let dot = |a: C64, b: C64| (a.conj() * b).re;
    let bumps: Vec<(f64, C64)> = z.iter().map(|p| phi.bump(*p)).collect();
    let mut acc = 0.0;
    for l in 0..z.len() {
        let (b, gb) = bumps[l];
        let x0 = ev.x0(&sys.circulations, z[l])?;
        acc += alpha[l] * (ds * b + s * dot(x0, gb));
        // diagonal term ½∇φ·∇⊥r
        acc += alpha[l] * alpha[l] * 0.5 * s * dot(gb, rot(&ev.robin_grad(z[l])));
        for m in 0..z.len() {
            if m != l {
                let k_lm = ev.perp_grad_x(z[l], z[m]);
                let k_ml = ev.perp_grad_x(z[m], z[l]);
                let h = 0.5 * s * (dot(gb, k_lm) + dot(bumps[m].1, k_ml));
                acc += alpha[l] * alpha[m] * h;
            }
        }
    }
    Ok(acc)
}
