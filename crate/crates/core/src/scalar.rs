//! Floating-point abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the estimators, kernels and quadrature rules are generic over.
///
/// Implemented for `f32` and `f64`. Constants that appear in formulas are
/// written as `f64` literals and converted with [`Scalar::c`].
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Default convergence tolerance for one- and two-dimensional quadrature.
    const QUAD_TOL: f64;
    /// Default convergence tolerance for the four-dimensional double integrals.
    const QUAD_TOL_DOUBLE: f64;

    /// Converts an `f64` constant. Never fails for finite input.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant")
    }

    #[inline]
    fn from_usize_(v: usize) -> Self {
        Self::c(v as f64)
    }

    #[inline]
    fn to_f64_(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const QUAD_TOL: f64 = 1e-10;
    const QUAD_TOL_DOUBLE: f64 = 1e-7;
}

impl Scalar for f32 {
    const QUAD_TOL: f64 = 1e-5;
    const QUAD_TOL_DOUBLE: f64 = 1e-4;
}

/// Neumaier-compensated running sum.
///
/// Accumulation order is whatever order values are pushed in, so results are
/// reproducible whenever the caller's order is.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, v: T) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry = self.carry + ((self.sum - t) + v);
        } else {
            self.carry = self.carry + ((v - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

impl<T: Scalar> FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}
