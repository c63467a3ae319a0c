//! Moduli of continuity, Osgood bounds and the flow-map family Γ_t.

use std::f64::consts::E;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{argument, domain, Error, Result};
use crate::germ::{exp_iter, log_iter, Germ};
use crate::quad::{Quad, QuadResult};

#[derive(Debug, Clone)]
pub enum ModulusKind {
    /// h^r.
    Power { r: f64 },
    /// c·h·log(h⁻²).
    HLog { c: f64 },
    /// c·h·T_θ(h⁻²).
    FromGerm { germ: Germ, c: f64 },
    /// log(1/h)^(−exponent).
    InvLog { exponent: f64 },
    /// Γ_t(h)^r for a flow-map family.
    GammaPower { family: Arc<GammaFamily>, t: f64, r: f64 },
    /// Piecewise linear through (h_i, μ_i), with μ(0) = 0 prepended.
    Tabulated { h: Vec<f64>, mu: Vec<f64> },
}

impl ModulusKind {
    /// Largest `a` on which the kind is a valid modulus (positive, strictly increasing).
    pub fn natural_bound(&self) -> f64 {
        match self {
            ModulusKind::Power { .. } => f64::INFINITY,
            ModulusKind::HLog { .. } | ModulusKind::FromGerm { .. } | ModulusKind::InvLog { .. } => (-1.0f64).exp(),
            ModulusKind::GammaPower { family, .. } => family.a_tilde,
            ModulusKind::Tabulated { h, .. } => h[h.len() - 1],
        }
    }
}

/// A modulus of continuity on `[0, a]`.
#[derive(Debug, Clone)]
pub struct Modulus {
    pub kind: ModulusKind,
    pub a: f64,
}

const GRID: usize = 1000;

impl Modulus {
    /// Builds and validates the modulus on a 10³-point logarithmic grid.
    pub fn new(kind: ModulusKind, a: f64) -> Result<Modulus> {
        if !(a > 0.0) || !a.is_finite() {
            return domain(format!("modulus bound a = {a} must be positive and finite"));
        }
        match &kind {
            ModulusKind::Power { r } if !(*r > 0.0) => return argument("power modulus needs r > 0"),
            ModulusKind::HLog { c } | ModulusKind::FromGerm { c, .. } if !(*c > 0.0) => {
                return argument("modulus constant must be positive")
            }
            ModulusKind::InvLog { exponent } if !(*exponent > 0.0) => {
                return argument("inverse-log modulus needs a positive exponent")
            }
            ModulusKind::GammaPower { family, t, r } => {
                if !(*r > 0.0 && *r <= 1.0) {
                    return argument("gamma power needs r in (0, 1]");
                }
                if !(*t >= 0.0 && *t <= family.horizon) {
                    return domain("gamma power time outside [0, T]");
                }
            }
            ModulusKind::Tabulated { h, mu } => {
                if h.len() != mu.len() || h.is_empty() {
                    return argument("tabulated modulus needs matching non-empty h and mu");
                }
                if !(h[0] > 0.0 && mu[0] > 0.0) {
                    return argument("tabulated modulus samples must be positive");
                }
                if h.windows(2).any(|w| !(w[1] > w[0])) || mu.windows(2).any(|w| !(w[1] > w[0])) {
                    return argument("tabulated modulus must be strictly increasing");
                }
            }
            _ => {}
        }
        let bound = kind.natural_bound();
        if a > bound * (1.0 + 1e-12) {
            return domain(format!("a = {a} exceeds the largest admissible bound {bound} for this modulus"));
        }
        let m = Modulus { kind, a: a.min(bound) };
        if !matches!(m.kind, ModulusKind::GammaPower { .. }) {
            m.check_grid()?;
        }
        Ok(m)
    }

    /// Uses `diam` as the bound, reduced to the natural bound of the kind when needed.
    pub fn with_default_bound(kind: ModulusKind, diam: f64) -> Result<Modulus> {
        let a = diam.min(kind.natural_bound());
        Modulus::new(kind, a)
    }

    fn check_grid(&self) -> Result<()> {
        let mut prev = 0.0;
        for i in 0..GRID {
            let h = self.a * 10f64.powf(-12.0 * (GRID - 1 - i) as f64 / (GRID - 1) as f64);
            let v = self.eval(h)?;
            if !(v > prev) || !v.is_finite() {
                return domain(format!("modulus is not positive and strictly increasing near h = {h:e}"));
            }
            prev = v;
        }
        Ok(())
    }

    /// μ(h) for `h ∈ [0, a]`.
    pub fn eval(&self, h: f64) -> Result<f64> {
        if !(h >= 0.0) || h > self.a * (1.0 + 1e-12) {
            return domain(format!("h = {h} outside [0, {}]", self.a));
        }
        if h == 0.0 {
            return Ok(0.0);
        }
        let h = h.min(self.a);
        Ok(match &self.kind {
            ModulusKind::Power { r } => h.powf(*r),
            ModulusKind::HLog { c } => c * h * (-2.0 * h.ln()),
            ModulusKind::FromGerm { germ, c } => c * h * germ.t_theta_from_log(-2.0 * h.ln())?,
            ModulusKind::InvLog { exponent } => (-h.ln()).powf(-exponent),
            ModulusKind::GammaPower { family, t, r } => family.gamma_t(*t, h)?.powf(*r),
            ModulusKind::Tabulated { h: hs, mu } => {
                let i = hs.partition_point(|&x| x < h);
                if i == 0 {
                    mu[0] * h / hs[0]
                } else {
                    let s = (h - hs[i - 1]) / (hs[i] - hs[i - 1]);
                    mu[i - 1] + s * (mu[i] - mu[i - 1])
                }
            }
        })
    }

    fn eval_or_nan(&self, h: f64) -> f64 {
        self.eval(h).unwrap_or(f64::NAN)
    }

    /// `∫_lo^hi dh/μ(h)` through the substitution `h = e^{−v}`.
    pub fn inv_integral(&self, lo: f64, hi: f64) -> QuadResult {
        let q = Quad::new(1e-14, 1e-14);
        q.integrate(
            |v| {
                let h = (-v).exp();
                h / self.eval_or_nan(h)
            },
            -hi.ln(),
            -lo.ln(),
        )
    }

    /// Solves `∫_c^R dh/μ = s` for `R ∈ [c, upper]`, assuming the root is bracketed.
    fn solve_upper(&self, c: f64, s: f64, upper: f64, f_upper: f64) -> Result<f64> {
        // work in w = log R; F(w) = ∫_c^{e^w} dh/μ − s is increasing
        let (mut wl, mut fl) = (c.ln(), -s);
        let (mut wr, mut fr) = (upper.ln(), f_upper - s);
        let tol = 1e-12 * s.abs().max(1.0);
        if fr.abs() <= tol {
            return Ok(upper);
        }
        let mut w = wl + (s * self.eval_or_nan(c) / c).min(wr - wl);
        if !(w > wl && w < wr) {
            w = 0.5 * (wl + wr);
        }
        for _ in 0..200 {
            // integrate from the nearer bracket end
            let r = w.exp();
            let fw = if (w - wl) <= (wr - w) {
                fl + self.inv_integral(wl.exp(), r).value
            } else {
                fr - self.inv_integral(r, wr.exp()).value
            };
            if !fw.is_finite() {
                return Err(Error::Convergence("non-finite Osgood integral".into()));
            }
            if fw.abs() <= tol {
                return Ok(r);
            }
            if fw < 0.0 {
                wl = w;
                fl = fw;
            } else {
                wr = w;
                fr = fw;
            }
            if wr - wl <= 1e-15 * wl.abs().max(wr.abs()).max(1.0) {
                return Ok(w.exp());
            }
            let slope = r / self.eval_or_nan(r);
            let newton = w - fw / slope;
            w = if newton > wl && newton < wr && slope.is_finite() { newton } else { 0.5 * (wl + wr) };
        }
        Err(Error::Convergence("Osgood root-finder did not converge".into()))
    }

    /// R with `∫_c^R dh/μ = t`, clipped at `a` (flagged as saturated).
    pub fn osgood_bound(&self, c: f64, t: f64) -> Result<OsgoodBound> {
        if !(c > 0.0) || c > self.a {
            return domain(format!("c = {c} must lie in (0, a]"));
        }
        if !(t >= 0.0) {
            return argument("t must be nonnegative");
        }
        if t == 0.0 {
            return Ok(OsgoodBound { value: c, saturated: false });
        }
        let total = self.inv_integral(c, self.a).value;
        if total < t {
            return Ok(OsgoodBound { value: self.a, saturated: true });
        }
        Ok(OsgoodBound { value: self.solve_upper(c, t, self.a, total)?, saturated: false })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OsgoodBound {
    pub value: f64,
    pub saturated: bool,
}

/// The Yudovich modulus `μ(h) = c·h·T_θ(h⁻²)` on `[0, a]`.
pub fn yudovich_modulus(germ: &Germ, c: f64, a: f64) -> Result<Modulus> {
    if !(a < 1.0) {
        return domain("yudovich modulus needs a < 1 so that h^-2 > 1");
    }
    Modulus::new(ModulusKind::FromGerm { germ: germ.clone(), c }, a)
}

/// Flow-map moduli Γ_t, defined by `∫_h^{Γ_t(h)} dh/μ = κt`.
#[derive(Debug, Clone)]
pub struct GammaFamily {
    pub mu: Modulus,
    pub kappa: f64,
    pub horizon: f64,
    pub a_tilde: f64,
    /// (h_j, J(h_j)) with h_j = a·2^{−j} and J(h) = ∫_h^a dh/μ.
    table: Vec<(f64, f64)>,
}

const EXTRA_LEVELS: usize = 96;

impl GammaFamily {
    pub fn new(mu: Modulus, kappa: f64, horizon: f64) -> Result<GammaFamily> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return argument("kappa must be positive");
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return argument("horizon must be nonnegative");
        }
        let target = kappa * horizon;
        let mut table = vec![(mu.a, 0.0)];
        let mut a_tilde = None;
        let mut extra = 0;
        let mut j = 0;
        while extra < EXTRA_LEVELS {
            j += 1;
            if j > 1000 {
                return domain("no dyadic a_tilde found: kappa*T is too large for this modulus");
            }
            let (hp, jp) = table[table.len() - 1];
            let h = mu.a * 0.5f64.powi(j);
            let r = mu.inv_integral(h, hp);
            if !r.converged {
                return Err(Error::Convergence(format!("cumulative table failed at h = {h:e}")));
            }
            let jh = jp + r.value;
            table.push((h, jh));
            if a_tilde.is_none() && jh >= target {
                a_tilde = Some(h);
            }
            if a_tilde.is_some() {
                extra += 1;
            }
        }
        Ok(GammaFamily { mu, kappa, horizon, a_tilde: a_tilde.unwrap(), table })
    }

    /// J(h) = ∫_h^a dh/μ.
    fn cumulative(&self, h: f64) -> f64 {
        let i = self.table.partition_point(|&(hj, _)| hj > h);
        if i < self.table.len() && self.table[i].0 == h {
            return self.table[i].1;
        }
        let (hj, jj) = if i == 0 { self.table[0] } else { self.table[i - 1] };
        jj + self.mu.inv_integral(h, hj).value
    }

    /// Γ_t(h) for `t ∈ [0, T]`, `h ∈ [0, ã]`.
    pub fn gamma_t(&self, t: f64, h: f64) -> Result<f64> {
        if !(t >= 0.0) || t > self.horizon * (1.0 + 1e-12) {
            return domain(format!("t = {t} outside [0, {}]", self.horizon));
        }
        if !(h >= 0.0) || h > self.a_tilde * (1.0 + 1e-12) {
            return domain(format!("h = {h} outside (0, a_tilde = {}]", self.a_tilde));
        }
        Ok(self.gamma_any(t, h)?.value)
    }

    /// Γ_t(h) for any `h ≤ a` and `t ≥ 0`, saturating at `a` when the integral runs out.
    pub fn gamma_any(&self, t: f64, h: f64) -> Result<OsgoodBound> {
        if h == 0.0 {
            return Ok(OsgoodBound { value: 0.0, saturated: false });
        }
        if !(h > 0.0) || h > self.mu.a {
            return domain(format!("h = {h} outside (0, a]"));
        }
        if t == 0.0 {
            return Ok(OsgoodBound { value: h, saturated: false });
        }
        let target = self.cumulative(h) - self.kappa * t;
        if target < 0.0 {
            return Ok(OsgoodBound { value: self.mu.a, saturated: true });
        }
        // Γ lies between consecutive table nodes h_i < Γ <= h_{i-1}
        let i = self.table.partition_point(|&(_, j)| j <= target);
        let (lo, jlo) = if i < self.table.len() && self.table[i].0 > h {
            self.table[i]
        } else {
            (h, self.cumulative(h))
        };
        let (hi, jhi) = self.table[i.saturating_sub(1)];
        if jhi == target {
            return Ok(OsgoodBound { value: hi, saturated: false });
        }
        let s = jlo - target;
        let value = self.mu.solve_upper(lo, s, hi, jlo - jhi)?;
        Ok(OsgoodBound { value, saturated: false })
    }
}

/// Upper bound on Γ_t for θ_m germs: `(exp^m((log^m h⁻²)^{exp(−C̃κt)}))^{−1/2}` with `C̃ = 2Ce`.
pub fn loglog_bound(m: u32, c: f64, kappa: f64, t: f64, h: f64) -> Result<f64> {
    if m == 0 {
        return argument("the log-log bound needs m >= 1");
    }
    if !(h > 0.0 && h < 1.0) {
        return domain("h must lie in (0, 1)");
    }
    let c_tilde = 2.0 * c * E;
    let u = log_iter(m, h.powi(-2).max(f64::MIN_POSITIVE));
    let u = if h.powi(-2).is_finite() { u } else { log_iter(m - 1, -2.0 * h.ln()) };
    if !(u > 0.0) {
        return domain("log^m(h^-2) must be positive");
    }
    let s = (-c_tilde * kappa * t).exp();
    // exp^m(x)^(-1/2) = exp(-exp^{m-1}(x)/2)
    Ok((-0.5 * exp_iter(m - 1, u.powf(s))).exp())
}

/// Evidence for the Dini condition `∫_0^a μ(h)/h dh < ∞`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiniEvidence {
    /// ∫_{h_min}^a μ(h)/h dh.
    pub partial: f64,
    /// Contributions of the dyadic shells [a·2^{−j−1}, a·2^{−j}], the last one cut at h_min.
    pub increments: Vec<f64>,
    /// Ratio of the last two complete increments.
    pub last_ratio: Option<f64>,
    /// Geometric tail estimate when the increments decay geometrically.
    pub tail_estimate: Option<f64>,
}

pub fn dini_integral(mu: &Modulus, h_min: f64) -> Result<DiniEvidence> {
    if !(h_min > 0.0 && h_min < mu.a) {
        return domain("h_min must lie in (0, a)");
    }
    let q = Quad::new(1e-13, 1e-12);
    let mut increments = Vec::new();
    let mut hi = mu.a;
    let mut failure = None;
    while hi > h_min {
        let lo = (0.5 * hi).max(h_min);
        let r = q.integrate(
            |v| match mu.eval((-v).exp()) {
                Ok(m) => m,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            -hi.ln(),
            -lo.ln(),
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        increments.push(r.value);
        hi = lo;
    }
    let partial = increments.iter().sum();
    let cut_shell = increments.len() >= 2 && (mu.a / h_min).log2().fract() != 0.0;
    let (complete, cut) = if cut_shell {
        (&increments[..increments.len() - 1], increments[increments.len() - 1])
    } else {
        (&increments[..], 0.0)
    };
    let ratios: Vec<f64> = complete.windows(2).map(|w| w[1] / w[0]).collect();
    let last_ratio = ratios.last().copied();
    let tail_estimate = if ratios.len() >= 3 {
        let tail = &ratios[ratios.len() - 3..];
        let r = tail[2];
        let steady = tail.iter().all(|&x| x < 0.9) && (tail[0] - tail[2]).abs() < 0.05;
        // geometric continuation past the last complete shell, minus the cut shell already counted
        steady.then(|| complete[complete.len() - 1] * r / (1.0 - r) - cut)
    } else {
        None
    };
    Ok(DiniEvidence { partial, increments, last_ratio, tail_estimate })
}

/// `F·φ^r`, the bound on the `C_{μ^r}` semi-norm of a Hölder function composed with a `C_μ` map.
pub fn holder_compose_bound(f_norm: f64, r: f64, phi_norm: f64) -> Result<f64> {
    if !(f_norm >= 0.0 && phi_norm >= 0.0) {
        return argument("norms must be nonnegative");
    }
    if !(r > 0.0 && r < 1.0) {
        return argument("r must lie in (0, 1)");
    }
    Ok(f_norm * phi_norm.powf(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpsilonSum {
    pub sum: f64,
    pub bound: f64,
}

/// Full enumeration of `Σ_{|α|=m} Π 1/(1+α_i)²` over compositions of m into s parts.
pub fn upsilon_sum(s: u32, m: u32) -> Result<UpsilonSum> {
    if s == 0 {
        return argument("s must be at least 1");
    }
    if s > 8 || m > 16 {
        return Err(Error::Size(format!("enumeration for s = {s}, m = {m} exceeds s <= 8, m <= 16")));
    }
    fn walk(parts_left: u32, remaining: u32, weight: f64, acc: &mut f64) {
        if parts_left == 1 {
            let x = 1.0 + remaining as f64;
            *acc += weight / (x * x);
            return;
        }
        for a in 0..=remaining {
            let x = 1.0 + a as f64;
            walk(parts_left - 1, remaining - a, weight / (x * x), acc);
        }
    }
    let mut sum = 0.0;
    walk(s, m, 1.0, &mut sum);
    let bound = 20f64.powi(s as i32) / ((m as f64 + 1.0) * (m as f64 + 1.0));
    Ok(UpsilonSum { sum, bound })
}
