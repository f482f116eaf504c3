//! Radial cutoff profiles `η(r)` with `η = 1` on `[0,R]`, `η = 0` on `[2R,∞)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Jet, Scalar};

/// Jet length used for radial profiles: value plus seven derivatives.
pub const RADIAL_JET: usize = 8;
pub type RadialJet<T> = Jet<T, RADIAL_JET>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffFamily {
    /// Degree-9 smoothstep, `C⁴` at the seams.
    Poly9,
    /// `e^{−2/u}` based transition, `C^∞`.
    Mollified,
}

/// Degree-9 smoothstep `126u⁵ − 420u⁶ + 540u⁷ − 315u⁸ + 70u⁹`.
pub fn poly9<T: Scalar, const N: usize>(u: Jet<T, N>) -> Jet<T, N> {
    let c = [126.0, -420.0, 540.0, -315.0, 70.0];
    // Horner in u starting from the u⁹ coefficient, then times u⁵.
    let mut acc = Jet::constant(T::cst(c[4]));
    for k in (0..4).rev() {
        acc = acc * u + Jet::constant(T::cst(c[k]));
    }
    acc * u.powi(5)
}

/// `C^∞` transition `T(u) = e^{−2/u}/(e^{−2/u} + e^{−2/(1−u)})` on `(0,1)`.
///
/// The factor 2 flattens the ends of the band. With the more common factor
/// 1 the high derivatives near the seams are large enough to dominate the
/// discretization error of anything integrated against `η`.
pub fn smooth_transition<T: Scalar, const N: usize>(u: Jet<T, N>) -> Jet<T, N> {
    let one = Jet::constant(T::one());
    let two = T::cst(2.0);
    let a = (-u.recip().scale(two)).exp();
    let b = (-(one - u).recip().scale(two)).exp();
    a / (a + b)
}

/// Transition of `family` on `[0,1]`: 0 below, 1 above.
pub fn transition<T: Scalar, const N: usize>(family: CutoffFamily, u: Jet<T, N>) -> Jet<T, N> {
    let v = u.value();
    if v <= T::zero() {
        return Jet::constant(T::zero());
    }
    if v >= T::one() {
        return Jet::constant(T::one());
    }
    match family {
        CutoffFamily::Poly9 => poly9(u),
        CutoffFamily::Mollified => smooth_transition(u),
    }
}

/// Cutoff `η(r) = 1 − s((r − R)/R)` together with its measured bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile<T> {
    pub radius: T,
    pub family: CutoffFamily,
    /// `C_l = sup_r |η^{(l)}(r)|·R^l` for `l = 1..4`, measured on construction.
    pub bounds: [T; 4],
}

/// Samples used to measure the derivative bounds.
const BOUND_SAMPLES: usize = 4096;

impl<T: Scalar> CutoffProfile<T> {
    pub fn new(radius: T, family: CutoffFamily) -> Result<Self> {
        if !(radius > T::zero() && radius.is_finite()) {
            return Err(Error::Config(format!("cutoff radius must be positive, got {radius}")));
        }
        let mut profile = Self {
            radius,
            family,
            bounds: [T::zero(); 4],
        };
        profile.bounds = profile.measure_bounds();
        Ok(profile)
    }

    /// Taylor jet of `η` in `r` at `r`.
    pub fn jet(&self, r: T) -> RadialJet<T> {
        let rj = RadialJet::variable(r);
        let u = (rj - Jet::constant(self.radius)).scale(self.radius.recip());
        Jet::constant(T::one()) - transition(self.family, u)
    }

    pub fn value(&self, r: T) -> T {
        self.jet(r).value()
    }

    /// `η^{(l)}(r)`.
    pub fn derivative(&self, r: T, l: usize) -> T {
        self.jet(r).derivative(l)
    }

    /// True on the transition band `R < r < 2R`, the only place where
    /// derivatives of `η` are nonzero.
    pub fn in_band(&self, r: T) -> bool {
        r > self.radius && r < self.radius + self.radius
    }

    fn measure_bounds(&self) -> [T; 4] {
        let mut out = [T::zero(); 4];
        for k in 1..BOUND_SAMPLES {
            let r = self.radius + self.radius * T::from_usize_lossy(k) / T::from_usize_lossy(BOUND_SAMPLES);
            let jet = self.jet(r);
            let mut rl = T::one();
            for (l, o) in out.iter_mut().enumerate() {
                rl *= self.radius;
                *o = o.max(jet.derivative(l + 1).abs() * rl);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_values() {
        for family in [CutoffFamily::Poly9, CutoffFamily::Mollified] {
            let p = CutoffProfile::<f64>::new(1.5, family).unwrap();
            assert_eq!(p.value(0.75), 1.0);
            assert_eq!(p.value(4.5), 0.0);
            assert!((p.value(2.25) - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn poly9_has_four_vanishing_derivatives_at_the_seams() {
        for u in [0.0, 1.0] {
            let jet = poly9(Jet::<f64, 6>::variable(u));
            for l in 1..=4 {
                assert!(jet.derivative(l).abs() < 1e-9, "l={l} u={u}");
            }
            assert!(jet.derivative(5).abs() > 1.0);
        }
    }

    #[test]
    fn bounds_are_scale_free() {
        for family in [CutoffFamily::Poly9, CutoffFamily::Mollified] {
            let base = CutoffProfile::<f64>::new(1.0, family).unwrap().bounds;
            for radius in [2.0, 4.0, 8.0] {
                let b = CutoffProfile::new(radius, family).unwrap().bounds;
                for l in 0..4 {
                    assert!((b[l] - base[l]).abs() <= 1e-12 * base[l]);
                }
            }
        }
    }

    #[test]
    fn rejects_non_positive_radius() {
        assert!(CutoffProfile::new(0.0, CutoffFamily::Poly9).is_err());
    }
}
