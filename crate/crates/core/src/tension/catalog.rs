//! Named test maps.
//!
//! Sphere maps use the stereographic chart from the north pole, where the
//! point at polar angle `θ` (measured from the north pole) sits at chart
//! radius `ρ·cot(θ/2)`; the equator is the circle `|y| = ρ`.

use serde::{Deserialize, Serialize};

use crate::calculus::MapField;
use crate::error::{Error, Result};
use crate::grid::{DomainGrid, GridMode};
use crate::manifold::{ChartTarget, TargetKind};
use crate::random;
use crate::scalar::{Jet, Scalar};
use crate::verify::cutoff::smooth_transition;

/// Map families with their parameters (config: `map = {family, params}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum MapSpec {
    Constant {
        point: Vec<f64>,
    },
    /// `φ = A sin(ωx₁)·e₁` into flat space, `ω = 2πk/L₁`.
    EuclideanSinusoid {
        amplitude: f64,
        #[serde(default = "one")]
        wavenumber: u32,
    },
    /// Equator of the sphere traversed `wraps` times along the first axis.
    GreatCircle {
        #[serde(default = "one")]
        wraps: u32,
    },
    /// Circle of polar angle `theta0` traversed `wraps` times.
    LatitudeCircle {
        theta0: f64,
        #[serde(default = "one")]
        wraps: u32,
    },
    /// `(sin f cos ωx₁, sin f sin ωx₁, cos f)` with
    /// `f = θ₀ + a·Σ_{d≥2} sin(2πx_d/L_d)`.
    LatitudeProfile {
        theta0: f64,
        amplitude: f64,
        #[serde(default = "one")]
        wraps: u32,
    },
    /// `exp_o(χ(|x−c|/r_s)W(x))` around the chart origin `o`, with a bump
    /// `χ` supported in the support radius `r_s` and a fixed smooth `W`.
    /// `χ` is the `C^∞` bump by default and `(1 − u²)^power` when `power`
    /// is set; the latter is only `C^{power−1}` at `r_s` but has far smaller
    /// high derivatives inside.
    Bump {
        amplitude: f64,
        #[serde(default)]
        support_radius: Option<f64>,
        #[serde(default)]
        power: Option<u32>,
    },
    /// Chart origin plus a seeded band-limited field (periodic grids).
    Random {
        amplitude: f64,
        seed: u64,
        #[serde(default)]
        max_mode: Option<usize>,
    },
}

fn one() -> u32 {
    1
}

impl MapSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MapSpec::Constant { .. } => "constant",
            MapSpec::EuclideanSinusoid { .. } => "euclidean_sinusoid",
            MapSpec::GreatCircle { .. } => "great_circle",
            MapSpec::LatitudeCircle { .. } => "latitude_circle",
            MapSpec::LatitudeProfile { .. } => "latitude_profile",
            MapSpec::Bump { .. } => "bump",
            MapSpec::Random { .. } => "random",
        }
    }

    pub fn build<'a, T: Scalar>(&self, grid: &'a DomainGrid<T>, target: &'a ChartTarget<T>) -> Result<MapField<'a, T>> {
        let n = target.dim();
        let m = grid.dim();
        let two_pi = T::cst(2.0) * T::PI();
        match self {
            MapSpec::Constant { point } => {
                if point.len() != n {
                    return Err(Error::Config(format!("constant map needs {n} coordinates")));
                }
                let p: Vec<T> = point.iter().map(|v| T::cst(*v)).collect();
                MapField::constant(grid, target, &p)
            }
            MapSpec::EuclideanSinusoid { amplitude, wavenumber } => {
                if !target.is_flat() {
                    return Err(Error::Config("euclidean_sinusoid needs a euclidean target".into()));
                }
                let a = T::cst(*amplitude);
                let w = two_pi * T::cst(*wavenumber as f64) / grid.lengths()[0];
                MapField::from_fn(grid, target, |x| {
                    let mut v = vec![T::zero(); n];
                    v[0] = a * (w * x[0]).sin();
                    v
                })
            }
            MapSpec::GreatCircle { wraps } => {
                let rho = sphere_radius(target, 2)?;
                let w = two_pi * T::cst(*wraps as f64) / grid.lengths()[0];
                MapField::from_fn(grid, target, |x| circle(n, rho, w * x[0]))
            }
            MapSpec::LatitudeCircle { theta0, wraps } => {
                let rho = sphere_radius(target, 2)?;
                let w = two_pi * T::cst(*wraps as f64) / grid.lengths()[0];
                let radius = rho * cot_half(T::cst(*theta0));
                MapField::from_fn(grid, target, |x| circle(n, radius, w * x[0]))
            }
            MapSpec::LatitudeProfile { theta0, amplitude, wraps } => {
                let rho = sphere_radius(target, 2)?;
                if m < 2 {
                    return Err(Error::Config("latitude_profile needs a domain of dimension at least 2".into()));
                }
                let w = two_pi * T::cst(*wraps as f64) / grid.lengths()[0];
                let (t0, a) = (T::cst(*theta0), T::cst(*amplitude));
                let lengths = grid.lengths().to_vec();
                MapField::from_fn(grid, target, |x| {
                    let mut f = t0;
                    for d in 1..m {
                        f += a * (two_pi * x[d] / lengths[d]).sin();
                    }
                    circle(n, rho * cot_half(f), w * x[0])
                })
            }
            MapSpec::Bump {
                amplitude,
                support_radius,
                power,
            } => {
                let rs = match (support_radius, grid.mode()) {
                    (Some(r), _) => T::cst(*r),
                    (None, GridMode::CompactSupport { support_radius }) => support_radius,
                    (None, GridMode::Periodic) => {
                        return Err(Error::Config("bump on a periodic grid needs params.support_radius".into()))
                    }
                };
                let center = grid.center();
                let a = T::cst(*amplitude);
                let kappa = T::PI() / rs;
                MapField::from_fn(grid, target, |x| {
                    let z: Vec<T> = x.iter().zip(&center).map(|(x, c)| *x - *c).collect();
                    let r = z.iter().map(|v| *v * *v).sum::<T>().sqrt();
                    let u = r / rs;
                    let chi = match power {
                        _ if u >= T::one() => T::zero(),
                        Some(p) => (T::one() - u * u).powi(*p as i32),
                        None => bump_profile(u),
                    };
                    let mut v = vec![T::zero(); n];
                    if chi == T::zero() {
                        return v;
                    }
                    for (al, va) in v.iter_mut().enumerate() {
                        let i = al % m;
                        let j = (al + 1) % m;
                        let phase = kappa * (z[i] + T::cst(0.5) * z[j]) + T::cst(al as f64 + 0.5);
                        *va = chi * a * phase.sin();
                    }
                    exp_origin(target, &v)
                })
            }
            MapSpec::Random {
                amplitude,
                seed,
                max_mode,
            } => {
                let k = max_mode.unwrap_or_else(|| random::default_max_mode(grid));
                let values = random::band_limited(grid, n, *seed, k, T::cst(*amplitude))?;
                MapField::new(grid, target, values)
            }
        }
    }
}

/// `χ(u) = 1 − T(u)` on `[0, 1]`, `0` beyond.
pub fn bump_profile<T: Scalar>(u: T) -> T {
    if u >= T::one() {
        return T::zero();
    }
    if u <= T::zero() {
        return T::one();
    }
    T::one() - smooth_transition(Jet::<T, 1>::variable(u)).value()
}

fn sphere_radius<T: Scalar>(target: &ChartTarget<T>, min_dim: usize) -> Result<T> {
    match target.kind() {
        TargetKind::Sphere { radius } if target.dim() >= min_dim => Ok(*radius),
        _ => Err(Error::Config(format!(
            "this map family needs a sphere target of dimension at least {min_dim}"
        ))),
    }
}

fn cot_half<T: Scalar>(theta: T) -> T {
    let h = theta / T::cst(2.0);
    h.cos() / h.sin()
}

fn circle<T: Scalar>(n: usize, radius: T, angle: T) -> Vec<T> {
    let mut v = vec![T::zero(); n];
    v[0] = radius * angle.cos();
    v[1] = radius * angle.sin();
    v
}

/// Exponential map at the chart origin applied to the chart vector `v`.
pub fn exp_origin<T: Scalar>(target: &ChartTarget<T>, v: &[T]) -> Vec<T> {
    let norm = v.iter().map(|a| *a * *a).sum::<T>().sqrt();
    if norm == T::zero() {
        return vec![T::zero(); v.len()];
    }
    // Both conformal charts have h(0) = 4δ, so |v|_h = 2|v|; geodesic rays
    // from the origin reach chart radius ρ·tan(d/2ρ) (sphere) or ρ·tanh(d/2ρ).
    let scale = match target.kind() {
        TargetKind::Sphere { radius } => *radius * (norm / *radius).tan() / norm,
        TargetKind::Hyperbolic { radius } => *radius * (norm / *radius).tanh() / norm,
        TargetKind::Euclidean | TargetKind::Generic(_) => T::one(),
    };
    v.iter().map(|a| *a * scale).collect()
}
