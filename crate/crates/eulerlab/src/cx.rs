//! Complex arithmetic shared by pointwise values and Taylor jets, so that the
//! closed-form Green kernels can be evaluated on either.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::geometry::C64;

pub trait Cx:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn conj(&self) -> Self;
    fn scale(&self, c: C64) -> Self;
    fn shift(&self, c: C64) -> Self;
    fn recip(&self) -> Self;

    fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }
}

impl Cx for C64 {
    fn conj(&self) -> Self {
        C64::conj(self)
    }
    fn scale(&self, c: C64) -> Self {
        self * c
    }
    fn shift(&self, c: C64) -> Self {
        self + c
    }
    fn recip(&self) -> Self {
        self.inv()
    }
}

/// Multiplication by i, i.e. rotation of a planar vector by +π/2.
pub fn rot<T: Cx>(v: &T) -> T {
    v.scale(C64::new(0.0, 1.0))
}
