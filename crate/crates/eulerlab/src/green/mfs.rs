//! Method of fundamental solutions for general domains.
//!
//! Harmonic functions are represented as `β(x)ᵀc` with `β(x) = (log|x − s_k|, 1)`
//! and charges `s_k` on dilated copies of the boundary curves (outside Ω).
//! Coefficients are fitted by least squares on 4× more collocation points
//! with a truncated-SVD pseudo-inverse that is computed once.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{Domain, C64};

const OUTER_DILATION: f64 = 1.25;
const INNER_DILATION: f64 = 0.8;
const OVERSAMPLING: usize = 4;
const SVD_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct MfsKernel {
    pub charges: Vec<C64>,
    pub colloc: Vec<C64>,
    /// Curve index of every collocation point.
    pub colloc_curve: Vec<usize>,
    /// (n_charges + 1) × n_colloc.
    pinv: DMatrix<f64>,
    /// Coefficients of φ_1..φ_d.
    phi: Vec<DVector<f64>>,
    /// Largest boundary residual seen in the construction checks.
    pub residual: f64,
    /// Spacing of collocation points, the accuracy horizon near the boundary.
    pub mesh: f64,
}

impl MfsKernel {
    pub fn new(domain: &Domain, charges_per_curve: usize, residual_tol: f64) -> Result<MfsKernel> {
        let mut charges = Vec::new();
        let mut colloc = Vec::new();
        let mut colloc_curve = Vec::new();
        let mut mesh: f64 = 0.0;
        for (i, curve) in domain.curves().enumerate() {
            let c = curve.center();
            let dil = if i == 0 { OUTER_DILATION } else { INNER_DILATION };
            for k in 0..charges_per_curve {
                let s = TAU * k as f64 / charges_per_curve as f64;
                charges.push(c + dil * (curve.point(s) - c));
            }
            let m = OVERSAMPLING * charges_per_curve;
            for k in 0..m {
                let s = TAU * (k as f64 + 0.5) / m as f64;
                colloc.push(curve.point(s));
                colloc_curve.push(i);
            }
            mesh = mesh.max(curve.length() / m as f64);
        }
        let n = charges.len() + 1;
        let a = DMatrix::from_fn(colloc.len(), n, |j, k| basis_entry(&charges, colloc[j], k));
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let pinv = svd
            .pseudo_inverse(SVD_CUTOFF * smax)
            .map_err(|e| Error::Construction(format!("pseudo-inverse failed: {e}")))?;
        let mut kernel = MfsKernel { charges, colloc, colloc_curve, pinv, phi: vec![], residual: 0.0, mesh };
        for j in 1..=domain.d() {
            let rhs = DVector::from_iterator(
                kernel.colloc.len(),
                kernel.colloc_curve.iter().map(|&c| if c == j { 1.0 } else { 0.0 }),
            );
            let coef = &kernel.pinv * rhs;
            kernel.phi.push(coef);
        }
        kernel.check(domain, residual_tol)?;
        Ok(kernel)
    }

    /// Boundary residuals at points midway between collocation nodes.
    fn check(&mut self, domain: &Domain, tol: f64) -> Result<()> {
        let m = self.colloc.len() / domain.curves().count();
        let mut probes = Vec::new();
        for (i, curve) in domain.curves().enumerate() {
            for k in 0..m {
                probes.push((i, curve.point(TAU * k as f64 / m as f64)));
            }
        }
        let mut worst: f64 = 0.0;
        for (j, coef) in self.phi.iter().enumerate() {
            for &(i, x) in &probes {
                let target = if i == j + 1 { 1.0 } else { 0.0 };
                worst = worst.max((self.eval(coef, x) - target).abs());
            }
        }
        for y in interior_probes(domain) {
            let coef = self.source_coeffs(y);
            for &(_, x) in &probes {
                worst = worst.max(((x - y).norm().ln() / TAU + self.eval(&coef, x)).abs());
            }
        }
        self.residual = worst;
        if worst > tol {
            return Err(Error::Construction(format!(
                "MFS boundary residual {worst:.3e} exceeds tolerance {tol:.1e}"
            )));
        }
        Ok(())
    }

    fn basis(&self, x: C64) -> DVector<f64> {
        DVector::from_fn(self.charges.len() + 1, |k, _| basis_entry(&self.charges, x, k))
    }

    pub fn eval(&self, coef: &DVector<f64>, x: C64) -> f64 {
        self.basis(x).dot(coef)
    }

    /// `2∂_x` of the expansion: `Σ c_k/(x − s_k)`.
    pub fn dz(&self, coef: &DVector<f64>, x: C64) -> C64 {
        self.charges.iter().zip(coef.iter()).map(|(s, c)| *c / (x - s)).sum()
    }

    /// Coefficients of `h_y`, the harmonic function equal to `−(1/2π)log|x−y|` on ∂Ω.
    pub fn source_coeffs(&self, y: C64) -> DVector<f64> {
        let b = DVector::from_iterator(self.colloc.len(), self.colloc.iter().map(|x| -(x - y).norm().ln() / TAU));
        &self.pinv * b
    }

    /// `2∂_y` of the coefficients of `h_y` (complex, componentwise).
    pub fn source_coeffs_dw(&self, y: C64) -> (DVector<f64>, DVector<f64>) {
        let db: Vec<C64> = self.colloc.iter().map(|x| -1.0 / (TAU * (y - x))).collect();
        let re = DVector::from_iterator(db.len(), db.iter().map(|z| z.re));
        let im = DVector::from_iterator(db.len(), db.iter().map(|z| z.im));
        (&self.pinv * re, &self.pinv * im)
    }

    pub fn phi_coeffs(&self, j: usize) -> &DVector<f64> {
        &self.phi[j - 1]
    }
}

fn basis_entry(charges: &[C64], x: C64, k: usize) -> f64 {
    if k < charges.len() {
        (x - charges[k]).norm().ln()
    } else {
        1.0
    }
}

/// A few interior points well away from the boundary.
fn interior_probes(domain: &Domain) -> Vec<C64> {
    let mut pts: Vec<(f64, C64)> = domain
        .area_rule(domain.outer.center(), 4, 16)
        .into_iter()
        .map(|(p, _)| (domain.dist_to_boundary(p), p))
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    pts.into_iter().step_by(3).take(3).map(|(_, p)| p).collect()
}
