//! First-variation checks: in the map, in the domain metric, and of `τ`
//! itself under a metric perturbation.
//!
//! Derivatives are central differences `D(t) = [E(+t) − E(−t)]/2t` on the
//! steps `t, t/2, …`, combined by Richardson extrapolation in `t²`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calculus::{MapField, Pullback, Section};
use crate::error::{Error, Result};
use crate::grid::{DomainMetric, NodeField, SymTensorField};
use crate::scalar::Scalar;
use crate::stress::{self, HatForm};
use crate::tension::{self, curvature_energy, poly_energy};

/// `δE(φ)[V] = c·∫⟨τ_E(φ), V⟩` for every energy here.
pub const VARIATION_CONSTANT: f64 = -2.0;

/// Energies with a known Euler–Lagrange operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnergyKind {
    E,
    E2,
    E3,
    E4,
    E5,
    #[serde(rename = "E4_hat")]
    E4Hat,
    #[serde(rename = "E4_ES")]
    E4ES,
}

impl EnergyKind {
    pub const ALL: [EnergyKind; 7] = [
        EnergyKind::E,
        EnergyKind::E2,
        EnergyKind::E3,
        EnergyKind::E4,
        EnergyKind::E5,
        EnergyKind::E4Hat,
        EnergyKind::E4ES,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnergyKind::E => "E",
            EnergyKind::E2 => "E2",
            EnergyKind::E3 => "E3",
            EnergyKind::E4 => "E4",
            EnergyKind::E5 => "E5",
            EnergyKind::E4Hat => "E4_hat",
            EnergyKind::E4ES => "E4_ES",
        }
    }

    pub fn energy<T: Scalar>(self, pb: &Pullback<'_, T>) -> Result<T> {
        match self {
            EnergyKind::E => poly_energy(pb, 1),
            EnergyKind::E2 => poly_energy(pb, 2),
            EnergyKind::E3 => poly_energy(pb, 3),
            EnergyKind::E4 => poly_energy(pb, 4),
            EnergyKind::E5 => poly_energy(pb, 5),
            EnergyKind::E4Hat => curvature_energy(pb),
            EnergyKind::E4ES => Ok(poly_energy(pb, 4)? + curvature_energy(pb)?),
        }
    }

    /// The Euler–Lagrange section paired with this energy.
    pub fn tension<T: Scalar>(self, pb: &Pullback<'_, T>) -> Result<Section<T>> {
        match self {
            EnergyKind::E => Ok(pb.tension()),
            EnergyKind::E2 => tension::poly_tension(pb, 2),
            EnergyKind::E3 => tension::poly_tension(pb, 3),
            EnergyKind::E4 => Ok(tension::tau4(pb)),
            EnergyKind::E5 => tension::poly_tension(pb, 5),
            EnergyKind::E4Hat => Ok(tension::tau4_hat(pb)),
            EnergyKind::E4ES => Ok(tension::tau4_es(pb)),
        }
    }

    /// The stress tensor whose pairing with `ω` is the metric derivative.
    pub fn stress<T: Scalar>(self, pb: &Pullback<'_, T>) -> Result<SymTensorField<T>> {
        match self {
            EnergyKind::E4 => Ok(stress::stress4(pb)),
            EnergyKind::E4Hat => Ok(stress::stress4_hat(pb, HatForm::Curvature)),
            EnergyKind::E4ES => Ok(stress::stress4_es(pb)),
            other => Err(Error::Argument(format!("no stress tensor is implemented for {other}"))),
        }
    }
}

impl fmt::Display for EnergyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnergyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s) || k.name().replace('_', "").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Argument(format!("unknown energy `{s}`")))
    }
}

/// Step schedule for the difference quotients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Steps {
    /// First step; `None` picks `1e-3` over the perturbation's peak value.
    pub initial: Option<f64>,
    /// Number of halvings used by the extrapolation (at least 2).
    pub levels: usize,
    /// How often the first step may be halved after a chart exit or loss of
    /// positive definiteness.
    pub max_retries: usize,
}

impl Default for Steps {
    fn default() -> Self {
        Self {
            initial: None,
            levels: 2,
            max_retries: 20,
        }
    }
}

impl Steps {
    fn first<T: Scalar>(&self, peak: T) -> Result<T> {
        if self.levels < 2 {
            return Err(Error::Argument("extrapolation needs at least two steps".into()));
        }
        Ok(match self.initial {
            Some(t) if t > 0.0 => T::cst(t),
            Some(t) => return Err(Error::Argument(format!("step must be positive, got {t}"))),
            None if peak > T::zero() => T::cst(1e-3) / peak,
            None => T::cst(1e-3),
        })
    }
}

/// Richardson table over steps `t/2^j` for an even error expansion in `t`.
pub fn richardson<T: Scalar>(values: &[T]) -> T {
    let mut row = values.to_vec();
    let mut factor = T::one();
    for _ in 1..values.len() {
        factor *= T::cst(4.0);
        row = row
            .windows(2)
            .map(|w| w[1] + (w[1] - w[0]) / (factor - T::one()))
            .collect();
    }
    row[0]
}

fn retryable(e: &Error) -> bool {
    matches!(e, Error::ChartExit { .. } | Error::Geometry { .. })
}

/// Central differences at `t0/2^j`, halving `t0` while the path leaves the
/// admissible set.
fn central_differences<T: Scalar, F>(t0: T, steps: &Steps, mut f: F) -> Result<(Vec<T>, Vec<T>)>
where
    F: FnMut(T) -> Result<T>,
{
    let mut t0 = t0;
    let mut last = None;
    for _ in 0..=steps.max_retries {
        let attempt = (0..steps.levels)
            .map(|j| {
                let t = t0 / T::cst(2f64.powi(j as i32));
                Ok((t, (f(t)? - f(-t)?) / (t + t)))
            })
            .collect::<Result<Vec<_>>>();
        match attempt {
            Ok(pairs) => return Ok(pairs.into_iter().unzip()),
            Err(e) if retryable(&e) => {
                last = Some(e);
                t0 /= T::cst(2.0);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Perturbation(format!(
        "no admissible step after {} halvings: {}",
        steps.max_retries,
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub check: String,
    pub energy: String,
    pub steps: Vec<f64>,
    pub derivatives: Vec<f64>,
    pub extrapolated: f64,
    /// The closed-form side.
    pub predicted: f64,
    pub absolute: f64,
    /// `absolute / max(|extrapolated|, |predicted|)`.
    pub mismatch: f64,
}

impl VariationReport {
    fn new<T: Scalar>(check: &str, energy: &str, steps: &[T], derivatives: &[T], predicted: T) -> Self {
        let extrapolated = richardson(derivatives).as_f64();
        let predicted = predicted.as_f64();
        let absolute = (extrapolated - predicted).abs();
        Self {
            check: check.into(),
            energy: energy.into(),
            steps: steps.iter().map(|t| t.as_f64()).collect(),
            derivatives: derivatives.iter().map(|d| d.as_f64()).collect(),
            extrapolated,
            predicted,
            absolute,
            mismatch: stress::relative(absolute, extrapolated.abs().max(predicted.abs())),
        }
    }
}

/// `d/dt E(φ + tV)` at `t = 0` against `c·∫⟨τ_E(φ), V⟩` with `c = −2`.
pub fn map_variation_check<T: Scalar>(
    map: &MapField<'_, T>,
    metric: &DomainMetric<T>,
    v: &Section<T>,
    kind: EnergyKind,
    steps: &Steps,
) -> Result<VariationReport> {
    let pb = Pullback::new(map, metric)?;
    if v.rank() != 0 || v.fiber_dim() != pb.fiber_dim() || v.nodes() != pb.nodes() {
        return Err(Error::Argument("variation field must be a section over the map's grid".into()));
    }
    let tau = kind.tension(&pb)?;
    let predicted = T::cst(VARIATION_CONSTANT) * pb.integrate(&pb.inner(&tau, v))?;
    drop(pb);
    let t0 = steps.first(v.max_abs())?;
    let (ts, ds) = central_differences(t0, steps, |t| {
        let moved = map.perturbed(v, t)?;
        kind.energy(&Pullback::new(&moved, metric)?)
    })?;
    Ok(VariationReport::new("map_variation", kind.name(), &ts, &ds, predicted))
}

/// `ω^{ij} = g^{ia} ω_ab g^{bj}` per node, full `m×m`.
pub fn raise<T: Scalar>(metric: &DomainMetric<T>, omega: &SymTensorField<T>) -> NodeField<T> {
    let m = omega.dim();
    let mut out = NodeField::zeros(omega.nodes(), m * m);
    for node in 0..omega.nodes() {
        let ginv = metric.inverse_at(node);
        let w = omega.matrix_at(node);
        let o = out.node_mut(node);
        for i in 0..m {
            for j in 0..m {
                let mut s = T::zero();
                for a in 0..m {
                    for b in 0..m {
                        s += ginv[i * m + a] * w[a * m + b] * ginv[b * m + j];
                    }
                }
                o[i * m + j] = s;
            }
        }
    }
    out
}

/// `∫ S_ij ω^{ij} dV_g`.
pub fn metric_pairing<T: Scalar>(pb: &Pullback<'_, T>, s: &SymTensorField<T>, omega: &SymTensorField<T>) -> Result<T> {
    let m = s.dim();
    let raised = raise(pb.metric(), omega);
    let density: Vec<T> = (0..pb.nodes())
        .map(|node| {
            let r = raised.node(node);
            let mut acc = T::zero();
            for i in 0..m {
                for j in 0..m {
                    acc += s.get(node, i, j) * r[i * m + j];
                }
            }
            acc
        })
        .collect();
    pb.integrate(&density)
}

fn check_metric_inputs<T: Scalar>(map: &MapField<'_, T>, omega: &SymTensorField<T>) -> Result<()> {
    let grid = map.grid();
    if !grid.is_periodic() {
        return Err(Error::Mode("metric variations need a periodic grid".into()));
    }
    if omega.dim() != grid.dim() || omega.nodes() != grid.node_count() {
        return Err(Error::Argument("metric perturbation does not match the grid".into()));
    }
    Ok(())
}

/// `d/dt E(φ; g + tω)` at `t = 0` against `∫⟨S, ω⟩ dV_g`.
pub fn metric_variation_check<T: Scalar>(
    map: &MapField<'_, T>,
    metric: &DomainMetric<T>,
    omega: &SymTensorField<T>,
    kind: EnergyKind,
    steps: &Steps,
) -> Result<VariationReport> {
    check_metric_inputs(map, omega)?;
    let grid = map.grid();
    let pb = Pullback::new(map, metric)?;
    let predicted = metric_pairing(&pb, &kind.stress(&pb)?, omega)?;
    drop(pb);
    let t0 = steps.first(omega.max_abs())?;
    let (ts, ds) = central_differences(t0, steps, |t| {
        let gt = DomainMetric::from_tensor(grid, metric.tensor().axpy(t, omega))?;
        kind.energy(&Pullback::new(map, &gt)?)
    })?;
    Ok(VariationReport::new("metric_variation", kind.name(), &ts, &ds, predicted))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensionVariationReport {
    pub check: String,
    pub steps: Vec<f64>,
    /// `max |dτ/dt (extrapolated) − closed form|` over nodes and components.
    pub absolute: f64,
    /// Largest closed-form component.
    pub scale: f64,
    pub mismatch: f64,
}

/// Closed form of `dτ/dt` along `g + tω`:
/// `−ω^{ij}(∇̄dφ)_ij − (∇_iω^{ki})dφ_k + ½(∇^k tr ω)dφ_k`.
pub fn tension_metric_derivative<T: Scalar>(pb: &Pullback<'_, T>, omega: &SymTensorField<T>) -> Section<T> {
    let (m, n) = (pb.domain_dim(), pb.fiber_dim());
    let grid = pb.grid();
    let metric = pb.metric();
    let raised = raise(metric, omega);
    let hess = pb.second_fundamental_form();
    let dphi = pb.differential();
    let div = stress::divergence(pb, omega);
    let trace: Vec<T> = (0..pb.nodes())
        .map(|node| {
            let ginv = metric.inverse_at(node);
            let mut s = T::zero();
            for i in 0..m {
                for j in 0..m {
                    s += ginv[i * m + j] * omega.get(node, i, j);
                }
            }
            s
        })
        .collect();
    let grad_trace: Vec<Vec<T>> = (0..m).map(|l| grid.partial_derivative_scalar(&trace, l)).collect();
    let mut out = pb.zero_section();
    for node in 0..pb.nodes() {
        let ginv = metric.inverse_at(node);
        let r = raised.node(node);
        // (div ω)^k − ½∇^k tr ω
        let coef: Vec<T> = (0..m)
            .map(|k| {
                (0..m)
                    .map(|l| ginv[k * m + l] * (div.node(node)[l] - T::cst(0.5) * grad_trace[l][node]))
                    .sum()
            })
            .collect();
        let o = out.node_mut(node);
        for a in 0..n {
            let mut s = T::zero();
            for i in 0..m {
                for j in 0..m {
                    s -= r[i * m + j] * hess.node(node)[(i * m + j) * n + a];
                }
                s -= coef[i] * dphi.at(node, i)[a];
            }
            o[a] = s;
        }
    }
    out
}

/// Finite-difference `dτ/dt` along `g + tω` against the closed form, pointwise.
pub fn tension_metric_variation_check<T: Scalar>(
    map: &MapField<'_, T>,
    metric: &DomainMetric<T>,
    omega: &SymTensorField<T>,
    steps: &Steps,
) -> Result<TensionVariationReport> {
    check_metric_inputs(map, omega)?;
    let grid = map.grid();
    let pb = Pullback::new(map, metric)?;
    let closed = tension_metric_derivative(&pb, omega);
    drop(pb);
    let t0: T = steps.first(omega.max_abs())?;
    let tension_at = |t: T| -> Result<Section<T>> {
        let gt = DomainMetric::from_tensor(grid, metric.tensor().axpy(t, omega))?;
        Ok(Pullback::new(map, &gt)?.tension())
    };
    let mut t0 = t0;
    let mut last = None;
    for _ in 0..=steps.max_retries {
        let attempt = (0..steps.levels)
            .map(|j| {
                let t = t0 / T::cst(2f64.powi(j as i32));
                let d = tension_at(t)?.sub(&tension_at(-t)?).scaled((t + t).recip());
                Ok((t, d))
            })
            .collect::<Result<Vec<_>>>();
        match attempt {
            Ok(pairs) => {
                let (ts, ds): (Vec<T>, Vec<Section<T>>) = pairs.into_iter().unzip();
                let mut extrapolated = closed.clone();
                let len = extrapolated.values().data().len();
                let mut column = vec![T::zero(); ds.len()];
                for idx in 0..len {
                    for (c, d) in column.iter_mut().zip(&ds) {
                        *c = d.values().data()[idx];
                    }
                    extrapolated.values_mut().data_mut()[idx] = richardson(&column);
                }
                let absolute = extrapolated.sub(&closed).max_abs().as_f64();
                let scale = closed.max_abs().as_f64();
                return Ok(TensionVariationReport {
                    check: "tension_metric_variation".into(),
                    steps: ts.iter().map(|t| t.as_f64()).collect(),
                    absolute,
                    scale,
                    mismatch: stress::relative(absolute, scale),
                });
            }
            Err(e) if retryable(&e) => {
                last = Some(e);
                t0 /= T::cst(2.0);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Perturbation(format!(
        "no admissible step after {} halvings: {}",
        steps.max_retries,
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}
