//! Scalar abstraction shared by every numerical kernel.
//!
//! All geometry is written once over [`Scalar`]; `f64` is the working
//! precision of the experiments and `f32` is supported for quick looks.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Floating point type usable by the engine: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Debug
    + Display
    + LowerExp
    + Sum
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this type.
    #[inline]
    fn cst(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal fits the scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits the scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sum with a fixed pairwise reduction tree.
///
/// The tree depends only on the slice length, so the result is bitwise
/// reproducible no matter how the values were produced.
pub fn pairwise_sum<T: Scalar>(values: &[T]) -> T {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        let mut acc = T::zero();
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Largest absolute value of a slice (0 for an empty slice).
pub fn max_abs<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Truncated Taylor expansion `c_0 + c_1 t + ... + c_{N-1} t^{N-1}` used to
/// differentiate closed-form one-dimensional profiles exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<T, const N: usize> {
    coeffs: [T; N],
}

impl<T: Scalar, const N: usize> Jet<T, N> {
    pub fn constant(value: T) -> Self {
        let mut coeffs = [T::zero(); N];
        coeffs[0] = value;
        Self { coeffs }
    }

    /// The independent variable expanded at `at`.
    pub fn variable(at: T) -> Self {
        let mut coeffs = [T::zero(); N];
        coeffs[0] = at;
        if N > 1 {
            coeffs[1] = T::one();
        }
        Self { coeffs }
    }

    pub fn value(&self) -> T {
        self.coeffs[0]
    }

    /// `k`-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> T {
        let mut fact = T::one();
        for j in 2..=k {
            fact *= T::from_usize_lossy(j);
        }
        self.coeffs[k] * fact
    }

    /// All derivatives `f, f', ..., f^(N-1)`.
    pub fn derivatives(&self) -> [T; N] {
        let mut out = [T::zero(); N];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.derivative(k);
        }
        out
    }

    /// Jet of the derivative; the highest coefficient is lost.
    pub fn differentiate(self) -> Self {
        let mut out = [T::zero(); N];
        for k in 0..N.saturating_sub(1) {
            out[k] = T::from_usize_lossy(k + 1) * self.coeffs[k + 1];
        }
        Self { coeffs: out }
    }

    pub fn scale(mut self, s: T) -> Self {
        for c in &mut self.coeffs {
            *c *= s;
        }
        self
    }

    pub fn powi(self, p: usize) -> Self {
        let mut acc = Self::constant(T::one());
        for _ in 0..p {
            acc = acc * self;
        }
        acc
    }

    pub fn exp(self) -> Self {
        let mut out = [T::zero(); N];
        out[0] = self.coeffs[0].exp();
        for k in 1..N {
            let mut acc = T::zero();
            for j in 1..=k {
                acc += T::from_usize_lossy(j) * self.coeffs[j] * out[k - j];
            }
            out[k] = acc / T::from_usize_lossy(k);
        }
        Self { coeffs: out }
    }

    pub fn recip(self) -> Self {
        let mut out = [T::zero(); N];
        let inv0 = self.coeffs[0].recip();
        out[0] = inv0;
        for k in 1..N {
            let mut acc = T::zero();
            for j in 1..=k {
                acc += self.coeffs[j] * out[k - j];
            }
            out[k] = -acc * inv0;
        }
        Self { coeffs: out }
    }
}

impl<T: Scalar, const N: usize> std::ops::Add for Jet<T, N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a += b;
        }
        self
    }
}

impl<T: Scalar, const N: usize> std::ops::Sub for Jet<T, N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.coeffs.iter_mut().zip(rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl<T: Scalar, const N: usize> std::ops::Neg for Jet<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Scalar, const N: usize> std::ops::Mul for Jet<T, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = [T::zero(); N];
        for i in 0..N {
            for j in 0..N - i {
                out[i + j] += self.coeffs[i] * rhs.coeffs[j];
            }
        }
        Self { coeffs: out }
    }
}

impl<T: Scalar, const N: usize> std::ops::Div for Jet<T, N> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
    }

    #[test]
    fn jet_derivatives_of_exp_over_polynomial() {
        // f(t) = exp(-1/t) at t = 0.5, derivatives by hand:
        // f' = f/t^2, f'' = f (1 - 2t)/t^4.
        let t = 0.5_f64;
        let x = Jet::<f64, 5>::variable(t);
        let f = (-x.recip()).exp();
        let v = (-1.0 / t).exp();
        assert!((f.derivative(0) - v).abs() < 1e-15);
        assert!((f.derivative(1) - v / (t * t)).abs() < 1e-14);
        assert!((f.derivative(2) - v * (1.0 - 2.0 * t) / t.powi(4)).abs() < 1e-13);
    }

    #[test]
    fn jet_polynomial_derivatives_are_exact() {
        let x = Jet::<f64, 5>::variable(2.0);
        let p = x.powi(4).scale(3.0) - x.powi(2);
        assert_eq!(p.derivatives(), [44.0, 92.0, 142.0, 144.0, 72.0]);
    }
}
