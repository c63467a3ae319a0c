//! Method of images for the disk of radius R centered at the origin.

use std::f64::consts::TAU;

use crate::cx::Cx;
use crate::geometry::C64;

#[derive(Debug, Clone, Copy)]
pub struct DiskKernel {
    pub r: f64,
}

impl DiskKernel {
    /// `G(x, y) = (1/2π)(log|x−y| + log R − log|R² − x ȳ|)`.
    pub fn green(&self, x: C64, y: C64) -> f64 {
        let r2 = self.r * self.r;
        ((x - y).norm().ln() + self.r.ln() - (r2 - x * y.conj()).norm().ln()) / TAU
    }

    /// Regular part `g = G − (1/2π) log|x−y|`.
    pub fn regular(&self, x: C64, y: C64) -> f64 {
        let r2 = self.r * self.r;
        (self.r.ln() - (r2 - x * y.conj()).norm().ln()) / TAU
    }

    /// `2∂_x G(x, y)` as a holomorphic expression in x.
    pub fn d<T: Cx>(&self, z: &T, w: &T) -> T {
        let direct = (z.clone() - w.clone()).recip();
        (direct + self.d_reg_raw(z, w)).scale_re(1.0 / TAU)
    }

    /// `2∂_x g(x, y)`.
    pub fn d_reg<T: Cx>(&self, z: &T, w: &T) -> T {
        self.d_reg_raw(z, w).scale_re(1.0 / TAU)
    }

    fn d_reg_raw<T: Cx>(&self, z: &T, w: &T) -> T {
        let wb = w.conj();
        let den = (z.clone() * wb.clone()).scale_re(-1.0).shift(C64::new(self.r * self.r, 0.0));
        wb * den.recip()
    }
}
