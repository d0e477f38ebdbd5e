use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar abstraction shared by plain `f64` evaluation and the recording
/// [`Var`](super::tape::Var) used for reverse-mode gradients.
///
/// Every model component is written once against this trait. `f64` gives
/// forward-only evaluation; `Var` records the same computation on a tape.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// True for scalars that carry no derivative information.
    const FORWARD_ONLY: bool;

    fn value(&self) -> f64;

    /// A constant living in the same evaluation context as `self`.
    fn lift(&self, c: f64) -> Self;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn abs(self) -> Self;
    fn square(self) -> Self;
    fn sqrt(self) -> Self;

    /// Clamp to `[lo, hi]`; the derivative is zero outside the interval.
    fn clamp_to(self, lo: f64, hi: f64) -> Self;

    /// `sum_i w[i] * x[i] + bias`, recorded as a single node.
    fn affine(w: &[Self], x: &[Self], bias: Self) -> Self;

    /// `sum_i coeffs[i] * x[i]` with constant coefficients.
    fn linear_combination(coeffs: &[f64], x: &[Self]) -> Self;

    /// Sum of a nonempty slice.
    fn sum(x: &[Self]) -> Self {
        debug_assert!(!x.is_empty());
        let ones = vec![1.0; x.len()];
        Self::linear_combination(&ones, x)
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert!(!a.is_empty());
        let zero = a[0].lift(0.0);
        Self::affine(a, b, zero)
    }
}

pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Real for f64 {
    const FORWARD_ONLY: bool = true;

    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn lift(&self, c: f64) -> Self {
        c
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn ln(self) -> Self {
        f64::ln(self)
    }

    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }

    fn abs(self) -> Self {
        f64::abs(self)
    }

    fn square(self) -> Self {
        self * self
    }

    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        self.clamp(lo, hi)
    }

    fn affine(w: &[Self], x: &[Self], bias: Self) -> Self {
        debug_assert_eq!(w.len(), x.len());
        w.iter().zip(x).fold(bias, |acc, (a, b)| acc + a * b)
    }

    fn linear_combination(coeffs: &[f64], x: &[Self]) -> Self {
        debug_assert_eq!(coeffs.len(), x.len());
        coeffs.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}
