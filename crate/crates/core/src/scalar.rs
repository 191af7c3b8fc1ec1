use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the grid, kernels, and distributions are computed in.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Allowed deviation of a probability vector's sum (or a kernel column's sum) from 1.
    const NORMALIZATION_TOLERANCE: f64;

    /// Converts an `f64` literal. Every `Scalar` can represent (a rounding of) any finite `f64`.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const NORMALIZATION_TOLERANCE: f64 = 1e-9;
}

impl Scalar for f32 {
    const NORMALIZATION_TOLERANCE: f64 = 1e-4;
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Accumulator<S> {
    sum: S,
    carry: S,
}

impl<S: Scalar> Accumulator<S> {
    pub(crate) fn new() -> Self {
        Self { sum: S::zero(), carry: S::zero() }
    }

    #[inline]
    pub(crate) fn add(&mut self, v: S) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry = self.carry + ((self.sum - t) + v);
        } else {
            self.carry = self.carry + ((v - t) + self.sum);
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> S {
        self.sum + self.carry
    }
}

/// Compensated sum; long probability vectors lose digits with a naive fold.
pub(crate) fn compensated_sum<S: Scalar>(values: impl IntoIterator<Item = S>) -> S {
    let mut acc = Accumulator::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}
