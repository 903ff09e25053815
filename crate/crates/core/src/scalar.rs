//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point scalar: `f32` or `f64`.
///
/// Tolerances used for validating probability vectors depend on the
/// precision of the type, so they are exposed here rather than hard-coded
/// at the call sites.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Tolerance for "sums to one" checks on distributions and channel columns.
    fn prob_tol() -> Self;

    /// Relative pivot threshold below which a symmetric positive
    /// semi-definite system is treated as rank deficient.
    fn rank_tol() -> Self;

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn prob_tol() -> Self {
        1e-12
    }

    fn rank_tol() -> Self {
        1e-12
    }
}

impl Real for f32 {
    fn prob_tol() -> Self {
        1e-5
    }

    fn rank_tol() -> Self {
        1e-6
    }
}

/// Mean of a slice; zero for an empty slice.
pub(crate) fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len())
}

/// Population variance of a slice; zero for fewer than one element.
pub(crate) fn variance<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_usize_lossy(xs.len())
}
