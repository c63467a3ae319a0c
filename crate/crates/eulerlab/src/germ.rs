//! Admissible germs θ, the auxiliary function T_θ and admissibility evidence.
//!
//! A germ is a positive growth profile on `[p0, ∞)`. Its auxiliary function
//! is `T_θ(a) = inf_{0<ε≤1/p0} a^ε θ(1/ε)/ε`; the germ is admissible when
//! `∫_1^∞ da/(a T_θ(a))` diverges.

use serde::{Deserialize, Serialize};

use crate::error::{argument, domain, Error, Result};
use crate::quad::Quad;

/// Shape of the growth profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GermKind {
    /// θ_m(p) = log p · log² p ⋯ log^m p, with θ_0 ≡ 1.
    ThetaM { m: u32 },
    /// θ(p) = p^exponent.
    Power { exponent: f64 },
    /// Samples (p, θ(p)) interpolated linearly in (log p, log θ).
    Tabulated { samples: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Germ {
    #[serde(flatten)]
    pub kind: GermKind,
    pub p0: f64,
}

/// `exp` composed `m` times.
pub fn exp_iter(m: u32, x: f64) -> f64 {
    (0..m).fold(x, |acc, _| acc.exp())
}

/// `log` composed `m` times.
pub fn log_iter(m: u32, x: f64) -> f64 {
    (0..m).fold(x, |acc, _| acc.ln())
}

/// A number written as `exp^depth(top)`, for arguments beyond `f64` range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tower {
    pub depth: u32,
    pub top: f64,
}

impl Tower {
    pub fn new(depth: u32, top: f64) -> Self {
        Tower { depth, top }
    }

    /// `log^k` of the represented number.
    pub fn log_iter(&self, k: u32) -> f64 {
        if k <= self.depth {
            exp_iter(self.depth - k, self.top)
        } else {
            log_iter(k - self.depth, self.top)
        }
    }
}

impl From<f64> for Tower {
    fn from(p: f64) -> Self {
        Tower { depth: 0, top: p }
    }
}

impl Germ {
    /// θ_m with the default lower bound `exp^m(1)` (2 for m = 0, which needs p0 > 1).
    pub fn theta_m(m: u32) -> Result<Germ> {
        let p0 = if m == 0 { 2.0 } else { exp_iter(m, 1.0) };
        Germ::theta_m_with_p0(m, p0)
    }

    pub fn theta_m_with_p0(m: u32, p0: f64) -> Result<Germ> {
        if m > 4 {
            return argument(format!("theta_m with m = {m} overflows f64 at its lower bound"));
        }
        if !(p0 > 1.0) {
            return domain(format!("p0 = {p0} must exceed 1"));
        }
        let floor = exp_iter(m, 1.0);
        if p0 < floor * (1.0 - 1e-14) {
            return domain(format!("theta_{m} needs p0 >= exp^{m}(1) = {floor}"));
        }
        Ok(Germ { kind: GermKind::ThetaM { m }, p0: p0.max(floor) })
    }

    pub fn power(exponent: f64, p0: f64) -> Result<Germ> {
        if !(exponent > 0.0) || !exponent.is_finite() {
            return argument("power germ needs a positive exponent");
        }
        if !(p0 > 1.0) {
            return domain(format!("p0 = {p0} must exceed 1"));
        }
        Ok(Germ { kind: GermKind::Power { exponent }, p0 })
    }

    /// Tabulated germ; `p0` is the first sample abscissa.
    pub fn tabulated(mut samples: Vec<(f64, f64)>) -> Result<Germ> {
        if samples.len() < 2 {
            return argument("tabulated germ needs at least two samples");
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return argument("tabulated germ abscissae must be distinct");
            }
        }
        if samples.iter().any(|&(p, t)| !(t > 0.0) || !t.is_finite() || !p.is_finite()) {
            return argument("tabulated germ values must be positive and finite");
        }
        let p0 = samples[0].0;
        if !(p0 > 1.0) {
            return domain(format!("first sample p = {p0} must exceed 1"));
        }
        Ok(Germ { kind: GermKind::Tabulated { samples }, p0 })
    }

    /// Checks invariants after deserialization.
    pub fn validated(self) -> Result<Germ> {
        match self.kind {
            GermKind::ThetaM { m } => Germ::theta_m_with_p0(m, self.p0),
            GermKind::Power { exponent } => Germ::power(exponent, self.p0),
            GermKind::Tabulated { samples } => Germ::tabulated(samples),
        }
    }

    fn p_max(&self) -> f64 {
        match &self.kind {
            GermKind::Tabulated { samples } => samples[samples.len() - 1].0,
            _ => f64::INFINITY,
        }
    }

    /// θ(p).
    pub fn eval(&self, p: f64) -> Result<f64> {
        self.ln_eval(p).map(f64::exp)
    }

    /// log θ(p); stays finite where θ itself is huge.
    pub fn ln_eval(&self, p: f64) -> Result<f64> {
        if !(p >= self.p0 * (1.0 - 1e-13)) {
            return domain(format!("p = {p} below p0 = {}", self.p0));
        }
        let p = p.max(self.p0);
        match &self.kind {
            GermKind::ThetaM { m } => {
                let mut acc = 0.0;
                let mut l = p;
                for _ in 0..*m {
                    l = l.ln();
                    acc += l.max(f64::MIN_POSITIVE).ln();
                }
                Ok(acc)
            }
            GermKind::Power { exponent } => Ok(exponent * p.ln()),
            GermKind::Tabulated { samples } => {
                let last = samples[samples.len() - 1];
                if p > last.0 * (1.0 + 1e-13) {
                    return domain(format!("p = {p} beyond the last tabulated sample {}", last.0));
                }
                let x = p.ln();
                let i = samples.partition_point(|s| s.0.ln() <= x).clamp(1, samples.len() - 1);
                let (a, b) = (samples[i - 1], samples[i]);
                let s = (x - a.0.ln()) / (b.0.ln() - a.0.ln());
                Ok(a.1.ln() + s * (b.1.ln() - a.1.ln()))
            }
        }
    }

    /// `log(a^ε θ(1/ε)/ε)` where `la = log a`.
    fn ln_objective(&self, la: f64, ln_eps: f64) -> f64 {
        let eps = ln_eps.exp();
        let p = (1.0 / eps).max(self.p0);
        match self.ln_eval(p) {
            Ok(lt) => eps * la + lt - ln_eps,
            Err(_) => f64::INFINITY,
        }
    }

    /// T_θ(a) for `a > 1`.
    pub fn t_theta(&self, a: f64) -> Result<f64> {
        if !(a > 1.0) {
            return domain(format!("T_theta needs a > 1, got {a}"));
        }
        self.ln_t_theta_from_log(a.ln()).map(f64::exp)
    }

    /// T_θ expressed through `log a`, usable far beyond `f64` range of `a`.
    pub fn t_theta_from_log(&self, la: f64) -> Result<f64> {
        self.ln_t_theta_from_log(la).map(f64::exp)
    }

    /// `log T_θ(e^la)`.
    pub fn ln_t_theta_from_log(&self, la: f64) -> Result<f64> {
        self.minimize(la).map(|(v, _)| v)
    }

    /// Returns `(log T_θ, argmin ε)`.
    pub fn minimize(&self, la: f64) -> Result<(f64, f64)> {
        if !(la > 0.0) || !la.is_finite() {
            return domain(format!("T_theta needs log a > 0, got {la}"));
        }
        const N: usize = 64;
        let hi = -(self.p0.ln());
        let floor = -(self.p_max().ln());
        let mut lo = (hi.min(-la.ln()) - 8.0).max(floor);
        let mut values = [0.0; N];
        let mut grid = [0.0; N];
        loop {
            for i in 0..N {
                grid[i] = lo + (hi - lo) * i as f64 / (N - 1) as f64;
                values[i] = self.ln_objective(la, grid[i]);
            }
            let best = (0..N).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
            if best == 0 && lo > floor && lo > -700.0 {
                // minimum sits on the lower edge: widen downwards
                lo = (lo - 2.0 * (hi - lo)).max(floor).max(-700.0);
                continue;
            }
            if best == 0 && lo <= floor && floor > -700.0 {
                return domain("T_theta minimizer lies beyond the last tabulated sample");
            }
            let a = grid[best.saturating_sub(1)];
            let b = grid[(best + 1).min(N - 1)];
            let (x, fx) = golden(|u| self.ln_objective(la, u), a, b, 1e-12);
            let (x, fx) = if fx <= values[best] { (x, fx) } else { (grid[best], values[best]) };
            return Ok((fx, x.exp()));
        }
    }

    /// Partial integrals `∫_1^{A_k} da/(a T_θ(a))`, computed as `∫_0^{log A_k} du/T_θ(e^u)`.
    pub fn partial_integrals(&self, checkpoints: &[f64]) -> Result<Vec<PartialIntegral>> {
        if checkpoints.iter().any(|&a| !(a > 1.0)) {
            return domain("checkpoints must exceed 1");
        }
        let logs: Vec<f64> = checkpoints.iter().map(|a| a.ln()).collect();
        self.partial_integrals_log(&logs)
    }

    /// Same as [`Germ::partial_integrals`] with checkpoints given as `log A_k`.
    pub fn partial_integrals_log(&self, log_checkpoints: &[f64]) -> Result<Vec<PartialIntegral>> {
        if log_checkpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return argument("checkpoints must be strictly increasing");
        }
        if log_checkpoints.first().is_some_and(|&u| !(u > 0.0)) {
            return domain("checkpoints must exceed 1");
        }
        let quad = Quad::new(1e-10, 1e-12);
        let mut out = Vec::with_capacity(log_checkpoints.len());
        let mut acc = 0.0;
        let mut prev = 0.0;
        let mut failure: Option<Error> = None;
        for &u in log_checkpoints {
            let r = quad.integrate(
                |v| match self.t_theta_from_log(v) {
                    Ok(t) => 1.0 / t,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                },
                prev,
                u,
            );
            if let Some(e) = failure.take() {
                return Err(e);
            }
            acc += r.value;
            out.push(PartialIntegral { log_upper: u, value: acc, error: r.error, converged: r.converged });
            prev = u;
        }
        Ok(out)
    }
}

/// One checkpoint of the admissibility integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialIntegral {
    /// log of the upper limit A_k.
    pub log_upper: f64,
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Increments between consecutive partial integrals.
pub fn increments(parts: &[PartialIntegral]) -> Vec<f64> {
    parts.windows(2).map(|w| w[1].value - w[0].value).collect()
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub(crate) fn golden<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let scale = a.abs().max(b.abs()).max(1.0);
    for _ in 0..200 {
        if (b - a).abs() <= tol * scale {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Result of the iterated-logarithm identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub quadrature: f64,
    pub closed_form: f64,
    pub difference: f64,
}

/// Compares `∫_{p1}^{p2} dp/(p θ_m(p))` by quadrature against `log^{m+1} p2 − log^{m+1} p1`.
///
/// The quadrature variable is `s = log^{m-1} p` (the identity variable itself for m ≤ 1),
/// where the integrand becomes `1/(s log s)`; this keeps huge arguments representable.
pub fn iterated_log_identity_check(m: u32, p1: impl Into<Tower>, p2: impl Into<Tower>) -> Result<IdentityCheck> {
    let (p1, p2) = (p1.into(), p2.into());
    let closed = p2.log_iter(m + 1) - p1.log_iter(m + 1);
    if m == 0 {
        let (a, b) = (p1.log_iter(0), p2.log_iter(0));
        if !(a > 0.0 && b >= a) || !b.is_finite() {
            return domain("need 0 < p1 <= p2 with p2 representable");
        }
        let q = Quad::new(1e-13, 1e-14).integrate(|p| 1.0 / p, a, b);
        return Ok(IdentityCheck { quadrature: q.value, closed_form: closed, difference: (q.value - closed).abs() });
    }
    let d = m - 1;
    let (a, b) = (p1.log_iter(d), p2.log_iter(d));
    if !b.is_finite() {
        return domain("p2 too large to represent at the quadrature depth");
    }
    if !(a >= std::f64::consts::E * (1.0 - 1e-14)) || b < a {
        return domain("need exp^m(1) <= p1 <= p2");
    }
    let q = Quad::new(1e-13, 1e-14).integrate(|s| 1.0 / (s * s.ln()), a, b);
    Ok(IdentityCheck { quadrature: q.value, closed_form: closed, difference: (q.value - closed).abs() })
}
