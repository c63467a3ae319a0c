//! Taylor-mode integration of point-vortex systems with closed-form kernels,
//! and an empirical analyticity (Gevrey-order) diagnostic from the coefficients.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{argument, Error, Result};
use crate::geometry::C64;
use crate::green::Analytic;
use crate::jet::Jet;
use crate::vortex::{analytic_velocities, TrajectoryEnd, VortexSystem};

/// One Taylor step: `z_l(t0 + τ) = Σ_k a_{l,k} τ^k` for `τ` between 0 and `h`.
#[derive(Debug, Clone)]
pub struct TaylorStep {
    pub t0: f64,
    pub h: f64,
    pub coeffs: Vec<Jet<C64>>,
}

impl TaylorStep {
    pub fn eval(&self, t: f64) -> Vec<C64> {
        self.coeffs.iter().map(|j| j.eval(t - self.t0)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TaylorSteps {
    pub t0: f64,
    pub t_end: f64,
    pub initial: Vec<C64>,
    pub steps: Vec<TaylorStep>,
}

impl TaylorSteps {
    pub fn eval(&self, t: f64) -> Vec<C64> {
        if self.steps.is_empty() {
            return self.initial.clone();
        }
        let dir = self.steps[0].h.signum();
        let i = self.steps.partition_point(|s| dir * (s.t0 + s.h) < dir * t);
        self.steps[i.min(self.steps.len() - 1)].eval(t)
    }

    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = std::iter::once(self.t0).chain(self.steps.iter().map(|s| s.t0 + s.h)).collect();
        if let Some(last) = g.last_mut() {
            *last = self.t_end;
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct TaylorRun {
    pub steps: TaylorSteps,
    pub termination: TrajectoryEnd,
}

/// Time coefficients `a_0..a_K` of every vortex at the state `z0`, from the ODE recurrence
/// `(k+1) a_{k+1} = [F(z)]_k`.
pub fn taylor_coefficients(kernel: Analytic<'_>, strengths: &[f64], circulations: &[f64], z0: &[C64], order: usize) -> Vec<Jet<C64>> {
    let mut a: Vec<Vec<C64>> = z0.iter().map(|z| vec![*z]).collect();
    for k in 0..order {
        let jets: Vec<Jet<C64>> = a.iter().map(|c| Jet::new(c.clone())).collect();
        let v = analytic_velocities(kernel, strengths, circulations, &jets);
        for (al, vl) in a.iter_mut().zip(&v) {
            al.push(vl.c[k] / (k as f64 + 1.0));
        }
    }
    a.into_iter().map(Jet::new).collect()
}

fn max_abs(coeffs: &[Jet<C64>], k: usize) -> f64 {
    coeffs.iter().map(|j| j.c[k].norm()).fold(0.0, f64::max)
}

/// Integrates with Taylor steps of order `order`; the step is
/// `h = 0.9·min_{j∈{K−1,K}} (tol/‖a_j‖)^{1/j}` so that `‖a_K‖h^K < tol`.
pub fn taylor_integrate(sys: &VortexSystem, order: usize, t_end: f64, tol: f64, h0: Option<f64>) -> Result<TaylorRun> {
    let kernel = sys
        .green
        .analytic()
        .ok_or_else(|| Error::Unsupported("Taylor integration needs a closed-form Green function (disk or annulus)".into()))?;
    if order < 2 {
        return argument("Taylor order must be at least 2");
    }
    if !(tol > 0.0) {
        return argument("tolerance must be positive");
    }
    let dir = if t_end >= 0.0 { 1.0 } else { -1.0 };
    let mut steps = TaylorSteps { t0: 0.0, t_end: 0.0, initial: sys.positions.clone(), steps: vec![] };
    let mut z = sys.positions.clone();
    let mut t = 0.0;
    let mut g_prev = sys.event_values(&z);
    let mut first = true;
    while (t_end - t) * dir > 1e-14 * t_end.abs().max(1.0) {
        let coeffs = taylor_coefficients(kernel, &sys.strengths, &sys.circulations, &z, order);
        if coeffs.iter().any(|j| !j.is_finite()) {
            return Err(Error::Singular(format!("Taylor coefficients overflowed; last valid time t = {t}")));
        }
        let scale = z.iter().map(|p| p.norm()).fold(1.0, f64::max);
        let eps = tol * scale;
        let mut h = f64::INFINITY;
        for j in [order - 1, order] {
            let a = max_abs(&coeffs, j);
            if a > 0.0 {
                h = h.min((eps / a).powf(1.0 / j as f64));
            }
        }
        h *= 0.9;
        if first {
            if let Some(h0) = h0 {
                h = h.min(h0.abs());
            }
            first = false;
        }
        let h = dir * h.min((t_end - t) * dir);
        if h == 0.0 {
            return Err(Error::Stiffness(format!("Taylor step underflow at t = {t}")));
        }
        let step = TaylorStep { t0: t, h, coeffs };
        let z_new = step.eval(t + h);
        let g_new = sys.event_values(&z_new);
        let crossing: Vec<usize> = (0..g_new.len()).filter(|&i| g_prev[i] > 0.0 && g_new[i] <= 0.0).collect();
        if let Some(&index) = crossing.first() {
            let (mut a, mut b) = (0.0, 1.0);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if sys.event_values(&step.eval(t + m * h))[index] > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            let te = t + b * h;
            let ze = step.eval(te);
            steps.steps.push(step);
            steps.t_end = te;
            return Ok(TaylorRun { termination: sys.classify_event(&ze, index, te), steps });
        }
        g_prev = g_new;
        steps.steps.push(step);
        t += h;
        z = z_new;
    }
    steps.t_end = t_end;
    Ok(TaylorRun { steps, termination: TrajectoryEnd::Horizon })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticityEstimate {
    /// Gevrey order, clamped to the class index range s ≥ 1.
    pub s_hat: f64,
    /// Unclamped least-squares slope against log k!.
    pub s_raw: f64,
    /// Radius proxy 1/L̂.
    pub rho_hat: f64,
    pub l_hat: f64,
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Fit of derivative magnitudes `d_k ≈ c·(k!)^s·L^k` over `k ∈ [4, K]`.
pub fn gevrey_fit(derivs: &[f64]) -> Result<AnalyticityEstimate> {
    if derivs.len() < 13 {
        return argument("the Gevrey fit needs at least 12 orders");
    }
    let pts: Vec<(usize, f64)> = (4..derivs.len()).filter(|&k| derivs[k] > 1e-300).map(|k| (k, derivs[k].ln())).collect();
    if pts.len() < 3 {
        return Err(Error::Singular("coefficients vanish: degenerate Gevrey fit".into()));
    }
    let a = DMatrix::from_fn(pts.len(), 3, |i, j| match j {
        0 => ln_factorial(pts[i].0),
        1 => pts[i].0 as f64,
        _ => 1.0,
    });
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let sol = a.svd(true, true).solve(&b, 1e-12).map_err(|e| Error::Singular(format!("Gevrey fit failed: {e}")))?;
    let (s, ll) = (sol[0], sol[1]);
    let l = ll.exp();
    Ok(AnalyticityEstimate { s_hat: s.max(1.0), s_raw: s, rho_hat: 1.0 / l, l_hat: l })
}

/// Analyticity diagnostic from Taylor coefficient blocks: derivative magnitudes
/// `k!·max_j |a_{j,k}|` over all blocks and coordinates, then [`gevrey_fit`].
pub fn analyticity_estimate(blocks: &[Vec<Jet<C64>>]) -> Result<AnalyticityEstimate> {
    let order = blocks.iter().flatten().map(|j| j.order()).min().ok_or_else(|| Error::Argument("no coefficients".into()))?;
    let derivs: Vec<f64> = (0..=order)
        .map(|k| {
            let m = blocks.iter().map(|b| max_abs(b, k)).fold(0.0, f64::max);
            m * ln_factorial(k).exp()
        })
        .collect();
    gevrey_fit(&derivs)
}
