//! Hydrodynamic Green function, Robin function, harmonic measures, period
//! matrix and harmonic vector fields of a domain.
//!
//! Conventions: `∇⊥ = (−∂₂, ∂₁)`; planar vectors are complex numbers; for a real
//! function f, `D f = 2∂_z f` so that `∇f = conj(D f)` and `∇⊥f = i·conj(D f)`.
//! Circulations are counter-clockwise around every curve, which makes the
//! period matrix negative definite.

pub mod annulus;
pub mod disk;
pub mod mfs;

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cx::{rot, Cx};
use crate::error::{argument, Error, Result};
use crate::geometry::{Domain, DomainKind, C64};

pub use annulus::AnnulusKernel;
pub use disk::DiskKernel;
pub use mfs::MfsKernel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenOptions {
    /// MFS charges per boundary curve.
    pub mfs_charges: usize,
    /// Largest accepted MFS boundary residual.
    pub mfs_residual_tol: f64,
    /// Override of the annulus series length (fault-injection hook).
    pub annulus_terms: Option<usize>,
    /// Use the MFS backend even when a closed form exists.
    pub force_mfs: bool,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions { mfs_charges: 128, mfs_residual_tol: 1e-6, annulus_terms: None, force_mfs: false }
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    Disk(DiskKernel),
    Annulus(AnnulusKernel),
    Mfs(MfsKernel),
}

/// Closed-form kernels that can be evaluated on Taylor jets.
#[derive(Debug, Clone, Copy)]
pub enum Analytic<'a> {
    Disk(&'a DiskKernel),
    Annulus(&'a AnnulusKernel),
}

impl Analytic<'_> {
    /// `2∂_x G(x, y)`.
    pub fn d<T: Cx>(&self, x: &T, y: &T) -> T {
        match self {
            Analytic::Disk(k) => k.d(x, y),
            Analytic::Annulus(k) => k.d(x, y),
        }
    }

    /// `2∂_x g(x, y)`.
    pub fn d_reg<T: Cx>(&self, x: &T, y: &T) -> T {
        match self {
            Analytic::Disk(k) => k.d_reg(x, y),
            Analytic::Annulus(k) => k.d_reg(x, y),
        }
    }

    /// `X₀(x)`, or `None` when it vanishes identically.
    pub fn x0<T: Cx>(&self, circulations: &[f64], x: &T) -> Option<T> {
        match self {
            Analytic::Annulus(k) if circulations[0] != 0.0 => Some(k.x0(circulations[0], x)),
            _ => None,
        }
    }
}

/// `M = (Γ_i(∇⊥φ_j))` and its inverse `P`.
#[derive(Debug, Clone)]
pub struct PeriodMatrix {
    pub m: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub condition: f64,
}

#[derive(Debug, Clone)]
pub struct GreenEvaluator {
    pub domain: Domain,
    pub backend: Backend,
    period: Option<PeriodMatrix>,
}

const CIRC_TOL: f64 = 1e-13;
const MAX_CONDITION: f64 = 1e12;

impl GreenEvaluator {
    pub fn build(domain: Domain, options: &GreenOptions) -> Result<GreenEvaluator> {
        let backend = match domain.kind {
            DomainKind::Disk { r } if !options.force_mfs => Backend::Disk(DiskKernel { r }),
            DomainKind::Annulus { r0, r } if !options.force_mfs => {
                Backend::Annulus(AnnulusKernel::new(r0, r, options.annulus_terms))
            }
            _ => {
                if options.mfs_charges < 8 {
                    return argument("MFS needs at least 8 charges per curve");
                }
                Backend::Mfs(MfsKernel::new(&domain, options.mfs_charges, options.mfs_residual_tol)?)
            }
        };
        let mut ev = GreenEvaluator { domain, backend, period: None };
        if ev.domain.d() > 0 {
            ev.period = Some(ev.compute_period_matrix()?);
        }
        Ok(ev)
    }

    pub fn analytic(&self) -> Option<Analytic<'_>> {
        match &self.backend {
            Backend::Disk(k) => Some(Analytic::Disk(k)),
            Backend::Annulus(k) => Some(Analytic::Annulus(k)),
            Backend::Mfs(_) => None,
        }
    }

    pub fn backend_name(&self) -> &'static str {
        match self.backend {
            Backend::Disk(_) => "disk_images",
            Backend::Annulus(_) => "annulus_prime_function",
            Backend::Mfs(_) => "mfs",
        }
    }

    pub fn d(&self) -> usize {
        self.domain.d()
    }

    fn compute_period_matrix(&self) -> Result<PeriodMatrix> {
        let d = self.d();
        let mut m = DMatrix::zeros(d, d);
        for i in 1..=d {
            for j in 1..=d {
                let c = self.domain.circulation(i, |x| rot(&self.grad_phi(j, x)), CIRC_TOL);
                if !c.converged {
                    return Err(Error::Convergence(format!("circulation of grad-perp phi_{j} around C_{i}")));
                }
                m[(i - 1, j - 1)] = c.value;
            }
        }
        let sv = m.clone().singular_values();
        let condition = sv.max() / sv.min();
        if !(condition < MAX_CONDITION) {
            return Err(Error::Singular(format!("period matrix condition number {condition:.3e}")));
        }
        let p = m.clone().try_inverse().ok_or_else(|| Error::Singular("period matrix is not invertible".into()))?;
        Ok(PeriodMatrix { m, p, condition })
    }

    pub fn period_matrix(&self) -> Result<&PeriodMatrix> {
        self.period.as_ref().ok_or_else(|| Error::Unsupported("period matrix needs at least one inner curve".into()))
    }

    fn p(&self, i: usize, j: usize) -> f64 {
        self.period.as_ref().map_or(0.0, |pm| pm.p[(i - 1, j - 1)])
    }

    /// Harmonic measure `φ_j`, `j = 1..=d`: harmonic, 1 on `C_j`, 0 on the other curves.
    pub fn phi(&self, j: usize, x: C64) -> f64 {
        match &self.backend {
            Backend::Annulus(k) => k.phi(x),
            Backend::Mfs(k) => k.eval(k.phi_coeffs(j), x),
            Backend::Disk(_) => 0.0,
        }
    }

    /// `D φ_j = 2∂_x φ_j`.
    pub fn d_phi(&self, j: usize, x: C64) -> C64 {
        match &self.backend {
            Backend::Annulus(k) => k.d_phi(&x),
            Backend::Mfs(k) => k.dz(k.phi_coeffs(j), x),
            Backend::Disk(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn grad_phi(&self, j: usize, x: C64) -> C64 {
        self.d_phi(j, x).conj()
    }

    /// Dirichlet Green function `G₀` (zero on every boundary curve).
    pub fn dirichlet(&self, x: C64, y: C64) -> f64 {
        match &self.backend {
            Backend::Disk(k) => k.green(x, y),
            Backend::Mfs(k) => (x - y).norm().ln() / TAU + k.eval(&k.source_coeffs(y), x),
            Backend::Annulus(_) => self.green(x, y) - self.harmonic_correction(x, y),
        }
    }

    /// `Σ p_ij φ_i(x) φ_j(y)`.
    fn harmonic_correction(&self, x: C64, y: C64) -> f64 {
        let d = self.d();
        let mut s = 0.0;
        for i in 1..=d {
            for j in 1..=d {
                s += self.p(i, j) * self.phi(i, x) * self.phi(j, y);
            }
        }
        s
    }

    /// Hydrodynamic Green function `G = G₀ + Σ p_ij φ_i(x) φ_j(y)`.
    pub fn green(&self, x: C64, y: C64) -> f64 {
        match &self.backend {
            Backend::Disk(k) => k.green(x, y),
            Backend::Annulus(k) => k.green(x, y),
            Backend::Mfs(_) => self.dirichlet(x, y) + self.harmonic_correction(x, y),
        }
    }

    /// Regular part `g(x, y) = G(x, y) − (1/2π) log|x − y|`, finite on the diagonal.
    pub fn regular(&self, x: C64, y: C64) -> f64 {
        match &self.backend {
            Backend::Disk(k) => k.regular(x, y),
            Backend::Annulus(k) => k.regular(x, y),
            Backend::Mfs(k) => k.eval(&k.source_coeffs(y), x) + self.harmonic_correction(x, y),
        }
    }

    /// Robin function `r(x) = g(x, x)`.
    pub fn robin(&self, x: C64) -> f64 {
        self.regular(x, x)
    }

    /// `D_x G(x, y)`; the gradient is its conjugate.
    pub fn dx(&self, x: C64, y: C64) -> C64 {
        match self.analytic() {
            Some(a) => a.d(&x, &y),
            None => 1.0 / (TAU * (x - y)) + self.dx_reg(x, y),
        }
    }

    /// `D_x g(x, y)`.
    pub fn dx_reg(&self, x: C64, y: C64) -> C64 {
        match (&self.backend, self.analytic()) {
            (_, Some(a)) => a.d_reg(&x, &y),
            (Backend::Mfs(k), None) => {
                let mut s = k.dz(&k.source_coeffs(y), x);
                for i in 1..=self.d() {
                    for j in 1..=self.d() {
                        s += self.p(i, j) * self.d_phi(i, x) * self.phi(j, y);
                    }
                }
                s
            }
            _ => unreachable!(),
        }
    }

    /// `∇_x G(x, y)`.
    pub fn grad_x(&self, x: C64, y: C64) -> C64 {
        self.dx(x, y).conj()
    }

    /// `∇⊥_x G(x, y)`, the velocity at x induced by a unit vortex at y.
    pub fn perp_grad_x(&self, x: C64, y: C64) -> C64 {
        rot(&self.grad_x(x, y))
    }

    /// `∇r(x)`.
    pub fn robin_grad(&self, x: C64) -> C64 {
        match &self.backend {
            Backend::Mfs(k) => {
                // ∇r = ∇_x g + ∇_y g on the diagonal; the MFS g is only approximately symmetric
                let c = k.source_coeffs(x);
                let (dre, dim) = k.source_coeffs_dw(x);
                let gx = k.dz(&c, x).conj();
                let gy = C64::new(k.eval(&dre, x), k.eval(&dim, x)).conj();
                let mut s = gx + gy;
                for i in 1..=self.d() {
                    for j in 1..=self.d() {
                        let p = self.p(i, j);
                        s += p * (self.grad_phi(i, x) * self.phi(j, x) + self.phi(i, x) * self.grad_phi(j, x));
                    }
                }
                s
            }
            _ => 2.0 * self.dx_reg(x, x).conj(),
        }
    }

    fn check_circulations(&self, circulations: &[f64]) -> Result<()> {
        if circulations.len() != self.d() {
            return argument(format!("expected {} circulations, got {}", self.d(), circulations.len()));
        }
        Ok(())
    }

    /// `ψ₀ = Σ Γ̄_i p_ij φ_j`.
    pub fn psi0(&self, circulations: &[f64], x: C64) -> Result<f64> {
        self.check_circulations(circulations)?;
        let d = self.d();
        let mut s = 0.0;
        for i in 1..=d {
            for j in 1..=d {
                s += circulations[i - 1] * self.p(i, j) * self.phi(j, x);
            }
        }
        Ok(s)
    }

    /// `X₀ = ∇⊥ψ₀`.
    pub fn x0(&self, circulations: &[f64], x: C64) -> Result<C64> {
        self.check_circulations(circulations)?;
        if let Some(a) = self.analytic() {
            return Ok(a.x0(circulations, &x).unwrap_or_default());
        }
        let d = self.d();
        let mut s = C64::new(0.0, 0.0);
        for i in 1..=d {
            for j in 1..=d {
                s += circulations[i - 1] * self.p(i, j) * self.grad_phi(j, x);
            }
        }
        Ok(rot(&s))
    }

    /// Harmonic basis field `X_k = Σ_j p_jk ∇⊥φ_j`, `k = 1..=d`.
    pub fn harmonic_field(&self, k: usize, x: C64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for j in 1..=self.d() {
            s += self.p(j, k) * self.grad_phi(j, x);
        }
        rot(&s)
    }

    /// Counter-clockwise circulation of `f` around `C_i`.
    pub fn circulation(&self, i: usize, f: impl Fn(C64) -> C64) -> Result<f64> {
        if i > self.d() {
            return argument(format!("curve index {i} exceeds d = {}", self.d()));
        }
        let c = self.domain.circulation(i, f, CIRC_TOL);
        if !c.converged {
            return Err(Error::Convergence(format!("circulation around C_{i} did not settle")));
        }
        Ok(c.value)
    }

    /// Coefficients `α_i(f) = ∫_Ω φ_i curl f + Γ_i(f)` of the harmonic projection.
    pub fn project_harmonic(&self, f: impl Fn(C64) -> C64, curl: impl Fn(C64) -> f64) -> Result<Vec<f64>> {
        let rule = self.domain.area_rule(self.domain.outer.center(), 24, 256);
        let mut out = Vec::with_capacity(self.d());
        for i in 1..=self.d() {
            let area: f64 = rule.iter().map(|(x, w)| w * self.phi(i, *x) * curl(*x)).sum();
            out.push(area + self.circulation(i, &f)?);
        }
        Ok(out)
    }

    /// Reason to distrust evaluations at x, if any.
    pub fn accuracy_warning(&self, x: C64) -> Option<String> {
        let dist = self.domain.dist_to_boundary(x);
        let horizon = match &self.backend {
            Backend::Mfs(k) => 2.0 * k.mesh,
            _ => 1e-8 * self.domain.diam(),
        };
        (dist < horizon).then(|| format!("point at distance {dist:.2e} from the boundary, below {horizon:.2e}"))
    }
}
