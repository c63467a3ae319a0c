//! Dormand–Prince 5(4) integrator with PI step control, 4th-order dense
//! output and terminal event location.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    /// Largest step magnitude.
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, h0: None, h_max: f64::INFINITY, max_steps: 1_000_000 }
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    rc: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> &[f64] {
        &self.rc[0]
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.rc;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.rc[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Horizon,
    /// Event function `index` crossed zero at time `t`.
    Event { index: usize, t: f64 },
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub steps: Vec<DenseStep>,
    pub t0: f64,
    pub t_end: f64,
    pub y_end: Vec<f64>,
    pub termination: Termination,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl OdeSolution {
    /// Dense-output state at `t` in the integrated range.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if self.steps.is_empty() || t == self.t0 {
            return if self.steps.is_empty() { self.y_end.clone() } else { self.steps[0].start().to_vec() };
        }
        let dir = self.steps[0].h.signum();
        let i = self.steps.partition_point(|s| dir * s.t1() < dir * t);
        self.steps[i.min(self.steps.len() - 1)].eval(t)
    }

    /// Step boundaries `t_0 < t_1 < … < t_end`.
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = std::iter::once(self.t0).chain(self.steps.iter().map(|s| s.t1())).collect();
        if let Some(last) = g.last_mut() {
            *last = self.t_end;
        }
        g
    }
}

/// Scaled max-norm of the embedded error estimate.
fn err_norm(y0: &[f64], y1: &[f64], e: &[f64], opts: &OdeOptions) -> f64 {
    (0..y0.len())
        .map(|i| e[i].abs() / (opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs())))
        .fold(0.0, f64::max)
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// `events(t, y)` returns values that must stay positive; the integration stops
/// at the first located crossing to a nonpositive value.
pub fn dopri5<F, G>(mut f: F, t0: f64, y0: &[f64], t_end: f64, opts: &OdeOptions, mut events: G) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    G: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let n = y0.len();
    let mut sol = OdeSolution {
        steps: Vec::new(),
        t0,
        t_end: t0,
        y_end: y0.to_vec(),
        termination: Termination::Horizon,
        rejected: 0,
        rhs_evals: 0,
    };
    if t_end == t0 {
        return Ok(sol);
    }
    let dir = (t_end - t0).signum();
    let span = (t_end - t0).abs();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut y = y0.to_vec();
    let mut t = t0;
    f(t, &y, &mut k[0])?;
    sol.rhs_evals += 1;
    let mut g_prev = events(t, &y);
    let mut h = match opts.h0 {
        Some(h) => h.abs(),
        None => initial_step(&mut f, t, &y, &k[0], dir, opts)?,
    }
    .min(opts.h_max)
    .min(span);
    sol.rhs_evals += 1;
    let mut facold: f64 = 1e-4;
    let mut ytmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut last_reject = false;
    for _ in 0..opts.max_steps {
        let remaining = (t_end - t) * dir;
        if remaining <= 1e-15 * span.max(t.abs()) {
            break;
        }
        let hs = dir * h.min(remaining);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * k[j][i];
                }
                ytmp[i] = y[i] + hs * acc;
            }
            let (_, tail) = k.split_at_mut(s);
            f(t + C[s] * hs, &ytmp, &mut tail[0])?;
        }
        sol.rhs_evals += 6;
        // stage 7 is evaluated at y1 (FSAL)
        y1.copy_from_slice(&ytmp);
        for i in 0..n {
            let mut e = 0.0;
            for j in 0..7 {
                e += E[j] * k[j][i];
            }
            err[i] = hs * e;
        }
        let en = err_norm(&y, &y1, &err, opts);
        if !en.is_finite() {
            h *= 0.25;
            sol.rejected += 1;
            if h < 1e-14 * span.max(t.abs()) {
                return Err(Error::Stiffness(format!("non-finite error estimate at t = {t}")));
            }
            continue;
        }
        let fac11 = en.powf(0.2 - 0.04 * 0.75);
        if en <= 1.0 {
            let mut rc: [Vec<f64>; 5] = Default::default();
            rc[0] = y.clone();
            rc[1] = (0..n).map(|i| y1[i] - y[i]).collect();
            rc[2] = (0..n).map(|i| hs * k[0][i] - rc[1][i]).collect();
            rc[3] = (0..n).map(|i| rc[1][i] - hs * k[6][i] - rc[2][i]).collect();
            rc[4] = (0..n)
                .map(|i| hs * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>())
                .collect();
            let step = DenseStep { t0: t, h: hs, rc };
            let t_new = t + hs;
            let g_new = events(t_new, &y1);
            if let Some((index, te)) = locate_event(&step, &g_prev, &g_new, &mut events) {
                sol.y_end = step.eval(te);
                sol.steps.push(step);
                sol.t_end = te;
                sol.termination = Termination::Event { index, t: te };
                return Ok(sol);
            }
            g_prev = g_new;
            sol.steps.push(step);
            let fac = (fac11 / facold.powf(0.04) / 0.9).clamp(0.1, 5.0);
            facold = en.max(1e-4);
            let tmp = k[6].clone();
            k[0] = tmp;
            y.copy_from_slice(&y1);
            t = t_new;
            let mut hnew = h / fac;
            if last_reject {
                hnew = hnew.min(h);
            }
            last_reject = false;
            h = hnew.min(opts.h_max);
        } else {
            sol.rejected += 1;
            last_reject = true;
            h /= (fac11 / 0.9).min(5.0);
        }
        if h < 1e-14 * span.max(t.abs()) {
            return Err(Error::Stiffness(format!("step size {h:.3e} underflow at t = {t}")));
        }
    }
    if (t_end - t) * dir > 1e-12 * span.max(t.abs()) {
        return Err(Error::Stiffness(format!("step budget of {} exhausted at t = {t}", opts.max_steps)));
    }
    sol.t_end = t_end;
    sol.y_end = y;
    Ok(sol)
}

fn initial_step<F>(f: &mut F, t: f64, y: &[f64], f0: &[f64], dir: f64, opts: &OdeOptions) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let nrm = |v: &[f64]| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt();
    let (d0, d1) = (nrm(y), nrm(f0));
    let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = (0..n).map(|i| y[i] + dir * h0 * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    f(t + dir * h0, &y1, &mut f1)?;
    let diff: Vec<f64> = (0..n).map(|i| f1[i] - f0[i]).collect();
    let d2 = nrm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1))
}

/// Bisection on the dense output for the first event crossing in a step.
fn locate_event<G>(step: &DenseStep, g0: &[f64], g1: &[f64], events: &mut G) -> Option<(usize, f64)>
where
    G: FnMut(f64, &[f64]) -> Vec<f64>,
{
    let crossing: Vec<usize> = (0..g1.len()).filter(|&i| g0[i] > 0.0 && g1[i] <= 0.0).collect();
    if crossing.is_empty() {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for &i in &crossing {
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            let t = step.t0 + m * step.h;
            if events(t, &step.eval(t))[i] > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let te = step.t0 + b * step.h;
        if best.is_none_or(|(_, tb)| (te - step.t0).abs() < (tb - step.t0).abs()) {
            best = Some((i, te));
        }
    }
    best
}
