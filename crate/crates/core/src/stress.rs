//! Stress-energy tensors of `E₄` and the Eells–Sampson correction,
//! their divergence, and the conservation and trace identities.
//!
//! Tensors are stored with lower indices. The metric pairing used for
//! variations is `⟨S, ω⟩ = S_ij ω^{ij}`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calculus::{BundleOneForm, Pullback, Section};
use crate::error::{Error, Result};
use crate::grid::{DerivativeScheme, GridMode, NodeField, SymTensorField};
use crate::scalar::{max_abs, Scalar};
use crate::tension::{curvature_quantities, tau4, tau4_hat_from, CurvatureQuantities};

/// Ingredients of `S₄` shared with the Pohozaev harness.
#[derive(Clone, Debug)]
pub struct FourthOrderFields<T> {
    pub tau: Section<T>,
    /// `Δ̄τ`
    pub l1: Section<T>,
    /// `Δ̄²τ`
    pub l2: Section<T>,
    /// `∇̄τ`
    pub g0: BundleOneForm<T>,
    /// `∇̄Δ̄τ`
    pub g1: BundleOneForm<T>,
    /// `∇̄Δ̄²τ`
    pub g2: BundleOneForm<T>,
}

impl<T: Scalar> FourthOrderFields<T> {
    pub fn new(pb: &Pullback<'_, T>) -> Self {
        let tau = pb.tension();
        let l1 = pb.rough_laplacian(&tau);
        let l2 = pb.rough_laplacian(&l1);
        let g0 = pb.covariant_derivative(&tau);
        let g1 = pb.covariant_derivative(&l1);
        let g2 = pb.covariant_derivative(&l2);
        Self { tau, l1, l2, g0, g1, g2 }
    }
}

fn sym_from_fn<T: Scalar>(nodes: usize, m: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> SymTensorField<T> {
    let mut out = SymTensorField::zeros(nodes, m);
    for node in 0..nodes {
        for a in 0..m {
            for b in a..m {
                out.set(node, a, b, f(node, a, b));
            }
        }
    }
    out
}

/// `Σ g^{kl} h(A_k, B_l)` at one node for one-forms `A`, `B`.
fn traced_pair<T: Scalar>(pb: &Pullback<'_, T>, node: usize, a: &BundleOneForm<T>, b: &BundleOneForm<T>) -> T {
    let m = pb.domain_dim();
    let ginv = pb.metric().inverse_at(node);
    let geo = pb.geometry(node);
    let mut s = T::zero();
    for k in 0..m {
        for l in 0..m {
            let w = ginv[k * m + l];
            if w != T::zero() {
                s += w * geo.inner(a.at(node, k), b.at(node, l));
            }
        }
    }
    s
}

/// `S₄(X,Y) = g(X,Y)·(−½|Δ̄τ|² − ⟨τ,Δ̄²τ⟩ − ⟨dφ,∇̄Δ̄²τ⟩ + ⟨∇̄τ,∇̄Δ̄τ⟩)
///   − ⟨∇̄_Xτ,∇̄_YΔ̄τ⟩ − ⟨∇̄_Yτ,∇̄_XΔ̄τ⟩ + ⟨dφ(X),∇̄_YΔ̄²τ⟩ + ⟨dφ(Y),∇̄_XΔ̄²τ⟩`.
pub fn stress4<T: Scalar>(pb: &Pullback<'_, T>) -> SymTensorField<T> {
    stress4_from(pb, &FourthOrderFields::new(pb))
}

pub fn stress4_from<T: Scalar>(pb: &Pullback<'_, T>, f: &FourthOrderFields<T>) -> SymTensorField<T> {
    let m = pb.domain_dim();
    let dphi = pb.differential();
    let half = T::cst(0.5);
    let g = pb.metric().tensor();
    sym_from_fn(pb.nodes(), m, |node, a, b| {
        let geo = pb.geometry(node);
        let l1 = f.l1.node(node);
        let trace_part = -half * geo.inner(l1, l1) - geo.inner(f.tau.node(node), f.l2.node(node))
            - traced_pair(pb, node, dphi, &f.g2)
            + traced_pair(pb, node, &f.g0, &f.g1);
        g.get(node, a, b) * trace_part
            - geo.inner(f.g0.at(node, a), f.g1.at(node, b))
            - geo.inner(f.g0.at(node, b), f.g1.at(node, a))
            + geo.inner(dphi.at(node, a), f.g2.at(node, b))
            + geo.inner(dphi.at(node, b), f.g2.at(node, a))
    })
}

/// The two published forms of `Ŝ₄`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HatForm {
    /// Written with `R(dφ_k, dφ_l)τ`.
    Curvature,
    /// Written with `Ω₀` and `Ω₁`.
    Omega,
}

impl FromStr for HatForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "curvature" => Ok(HatForm::Curvature),
            "omega" => Ok(HatForm::Omega),
            other => Err(Error::Argument(format!("unknown stress form `{other}` (expected curvature or omega)"))),
        }
    }
}

/// `Ŝ₄` in the requested form.
///
/// Both forms share `−½⟨∇̄_XΩ₀, dφ(Y)⟩ − ½⟨∇̄_YΩ₀, dφ(X)⟩ + ½⟨∇̄^kΩ₀, dφ_k⟩g(X,Y)`;
/// the remaining part is `−⟨RT(e_k,X), RT(e_k,Y)⟩ − ¼|RT|²g(X,Y)` (curvature)
/// or `−⟨Ω₁(Y), dφ(X)⟩ + ¼⟨Ω₀, τ⟩g(X,Y)` (omega).
pub fn stress4_hat<T: Scalar>(pb: &Pullback<'_, T>, form: HatForm) -> SymTensorField<T> {
    stress4_hat_from(pb, &curvature_quantities(pb), form)
}

pub fn stress4_hat_from<T: Scalar>(pb: &Pullback<'_, T>, q: &CurvatureQuantities<T>, form: HatForm) -> SymTensorField<T> {
    let (m, n) = (pb.domain_dim(), pb.fiber_dim());
    let dphi = pb.differential();
    let g = pb.metric().tensor();
    let grad_omega0 = pb.covariant_derivative(&q.omega0);
    let rt_sq = pb.norm_sq(&q.rt);
    let half = T::cst(0.5);
    let quarter = T::cst(0.25);
    sym_from_fn(pb.nodes(), m, |node, a, b| {
        let geo = pb.geometry(node);
        let shared = -half * geo.inner(grad_omega0.at(node, a), dphi.at(node, b))
            - half * geo.inner(grad_omega0.at(node, b), dphi.at(node, a))
            + half * g.get(node, a, b) * traced_pair(pb, node, &grad_omega0, dphi);
        let own = match form {
            HatForm::Curvature => {
                let ginv = pb.metric().inverse_at(node);
                let rt = q.rt.node(node);
                let mut s = T::zero();
                for k in 0..m {
                    for l in 0..m {
                        let w = ginv[k * m + l];
                        if w == T::zero() {
                            continue;
                        }
                        let x = &rt[(k * m + a) * n..(k * m + a + 1) * n];
                        let y = &rt[(l * m + b) * n..(l * m + b + 1) * n];
                        s += w * geo.inner(x, y);
                    }
                }
                -s - quarter * rt_sq[node] * g.get(node, a, b)
            }
            HatForm::Omega => {
                // Symmetrized; the two orderings agree by the curvature symmetries.
                let s = geo.inner(q.omega1.at(node, b), dphi.at(node, a)) + geo.inner(q.omega1.at(node, a), dphi.at(node, b));
                -half * s + quarter * geo.inner(q.omega0.node(node), q.tau.node(node)) * g.get(node, a, b)
            }
        };
        shared + own
    })
}

/// `S₄^ES = S₄ + Ŝ₄` (curvature form).
pub fn stress4_es<T: Scalar>(pb: &Pullback<'_, T>) -> SymTensorField<T> {
    add(&stress4(pb), &stress4_hat(pb, HatForm::Curvature))
}

fn add<T: Scalar>(a: &SymTensorField<T>, b: &SymTensorField<T>) -> SymTensorField<T> {
    a.axpy(T::one(), b)
}

/// `(div T)_i = g^{jk}(∂_k T_ij − Γ^l_ki T_lj − Γ^l_kj T_il)`, one `m`-vector per node.
pub fn divergence<T: Scalar>(pb: &Pullback<'_, T>, t: &SymTensorField<T>) -> NodeField<T> {
    let grid = pb.grid();
    let metric = pb.metric();
    let m = t.dim();
    let nodes = t.nodes();
    let partials: Vec<NodeField<T>> = (0..m).map(|k| grid.partial_derivative(t.values(), k)).collect();
    let packed = |field: &NodeField<T>, node: usize, i: usize, j: usize| field.node(node)[crate::grid::sym_index(i, j, m)];
    let mut out = NodeField::zeros(nodes, m);
    for node in 0..nodes {
        let ginv = metric.inverse_at(node);
        let o = out.node_mut(node);
        for (i, oi) in o.iter_mut().enumerate() {
            let mut s = T::zero();
            for j in 0..m {
                for k in 0..m {
                    let w = ginv[j * m + k];
                    if w == T::zero() {
                        continue;
                    }
                    let mut v = packed(&partials[k], node, i, j);
                    if !metric.is_flat() {
                        let gam = metric.christoffels().node(node);
                        for l in 0..m {
                            v -= gam[(l * m + k) * m + i] * t.get(node, l, j);
                            v -= gam[(l * m + k) * m + j] * t.get(node, i, l);
                        }
                    }
                    s += w * v;
                }
            }
            *oi = s;
        }
    }
    out
}

/// Which conservation law to test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Law {
    /// `div S₄ = −⟨τ₄, dφ⟩`
    S4,
    /// `div S₄^ES = −⟨τ₄^ES, dφ⟩`
    S4ES,
}

impl Law {
    pub fn name(self) -> &'static str {
        match self {
            Law::S4 => "S4",
            Law::S4ES => "S4ES",
        }
    }
}

/// Serialized summary of a conservation residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub law: Law,
    pub grid: String,
    pub scheme: String,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub residual_max: f64,
    pub residual_l2: f64,
    /// Larger of `max|div S|` and `max|⟨τ, dφ⟩|`.
    pub scale: f64,
    pub relative: f64,
}

#[derive(Clone, Debug)]
pub struct ConservationResidual<T> {
    /// `r_i = (div S)_i + ⟨τ_law, dφ_i⟩`.
    pub field: NodeField<T>,
    pub report: ConservationReport,
}

pub fn grid_label<T: Scalar>(mode: GridMode<T>) -> String {
    match mode {
        GridMode::Periodic => "periodic".into(),
        GridMode::CompactSupport { .. } => "compact_support".into(),
    }
}

pub fn scheme_label(scheme: DerivativeScheme) -> String {
    match scheme {
        DerivativeScheme::Spectral => "spectral".into(),
        DerivativeScheme::FiniteDifference { order } => format!("fd{order}"),
    }
}

pub fn conservation_residual<T: Scalar>(pb: &Pullback<'_, T>, law: Law) -> Result<ConservationResidual<T>> {
    let q = curvature_quantities(pb);
    let fields = FourthOrderFields::new(pb);
    let mut stress = stress4_from(pb, &fields);
    let mut tension = tau4(pb);
    if law == Law::S4ES {
        stress = add(&stress, &stress4_hat_from(pb, &q, HatForm::Curvature));
        tension = tension.add(&tau4_hat_from(pb, &q));
    }
    let div = divergence(pb, &stress);
    let m = pb.domain_dim();
    let dphi = pb.differential();
    let mut pairing = NodeField::zeros(pb.nodes(), m);
    for node in 0..pb.nodes() {
        let geo = pb.geometry(node);
        for i in 0..m {
            pairing.node_mut(node)[i] = geo.inner(tension.node(node), dphi.at(node, i));
        }
    }
    let field = div.axpy(T::one(), &pairing);
    let grid = pb.grid();
    let sq: Vec<T> = (0..pb.nodes())
        .map(|node| {
            let ginv = pb.metric().inverse_at(node);
            let r = field.node(node);
            let mut s = T::zero();
            for i in 0..m {
                for j in 0..m {
                    s += ginv[i * m + j] * r[i] * r[j];
                }
            }
            s
        })
        .collect();
    let residual_max = field.max_abs().as_f64();
    let residual_l2 = pb.integrate(&sq)?.as_f64().max(0.0).sqrt();
    let scale = div.max_abs().max(pairing.max_abs()).as_f64();
    let relative = if scale > 0.0 { residual_max / scale } else { residual_max };
    Ok(ConservationResidual {
        field,
        report: ConservationReport {
            law,
            grid: grid_label(grid.mode()),
            scheme: scheme_label(grid.scheme()),
            n: grid.resolutions().to_vec(),
            residual_max,
            residual_l2,
            scale,
            relative,
        },
    })
}

/// `m/4 − 2`, the factor in `∫Tr Ŝ₄ = (m/4 − 2)∫|RT|²` on closed domains.
pub fn trace_prefactor(m: usize) -> f64 {
    m as f64 / 4.0 - 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub m: usize,
    /// `max|g^{ij}Ŝ_ij − (−1−m/4)|RT|² − (−1+m/2)⟨∇̄^kΩ₀, dφ_k⟩|`, relative.
    pub pointwise_relative: f64,
    pub integral_trace: f64,
    pub integral_rt_sq: f64,
    pub prefactor: f64,
    /// `∫Tr Ŝ₄ − (m/4 − 2)∫|RT|²`.
    pub integral_residual: f64,
    pub integral_relative: f64,
    pub critical_dimension: bool,
}

/// Trace identities of `Ŝ₄` on a closed (periodic) domain.
///
/// The trace is taken of the omega form so that the check does not just
/// restate the curvature form it was derived from.
pub fn trace_checks<T: Scalar>(pb: &Pullback<'_, T>) -> Result<TraceReport> {
    if !pb.grid().is_periodic() {
        return Err(Error::Mode("trace identities need a periodic grid (no boundary)".into()));
    }
    let m = pb.domain_dim();
    let q = curvature_quantities(pb);
    let hat = stress4_hat_from(pb, &q, HatForm::Omega);
    let grad_omega0 = pb.covariant_derivative(&q.omega0);
    let rt_sq = pb.norm_sq(&q.rt);
    let dphi = pb.differential();
    let mf = T::from_usize_lossy(m);
    let c_rt = -T::one() - mf / T::cst(4.0);
    let c_div = -T::one() + mf / T::cst(2.0);
    let mut trace = Vec::with_capacity(pb.nodes());
    let mut pointwise = Vec::with_capacity(pb.nodes());
    let mut scale = T::zero();
    for node in 0..pb.nodes() {
        let ginv = pb.metric().inverse_at(node);
        let mut tr = T::zero();
        for a in 0..m {
            for b in 0..m {
                tr += ginv[a * m + b] * hat.get(node, a, b);
            }
        }
        let div_term = traced_pair(pb, node, &grad_omega0, dphi);
        let predicted = c_rt * rt_sq[node] + c_div * div_term;
        scale = scale.max(tr.abs()).max((c_rt * rt_sq[node]).abs()).max((c_div * div_term).abs());
        trace.push(tr);
        pointwise.push(tr - predicted);
    }
    let pw = max_abs(&pointwise);
    let integral_trace = pb.integrate(&trace)?.as_f64();
    let integral_rt_sq = pb.integrate(&rt_sq)?.as_f64();
    let prefactor = trace_prefactor(m);
    let integral_residual = integral_trace - prefactor * integral_rt_sq;
    let iscale = integral_trace.abs().max(integral_rt_sq.abs());
    Ok(TraceReport {
        m,
        pointwise_relative: relative(pw.as_f64(), scale.as_f64()),
        integral_trace,
        integral_rt_sq,
        prefactor,
        integral_residual,
        integral_relative: relative(integral_residual.abs(), iscale),
        critical_dimension: prefactor == 0.0,
    })
}

pub(crate) fn relative(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        value / scale
    } else {
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::MapField;
    use crate::grid::{DomainMetric, GridSpec};
    use crate::manifold::ChartTarget;
    use std::f64::consts::PI;

    #[test]
    fn unknown_form_is_an_argument_error() {
        assert!(matches!("ricci".parse::<HatForm>(), Err(Error::Argument(_))));
        assert_eq!("omega".parse::<HatForm>().unwrap(), HatForm::Omega);
    }

    #[test]
    fn divergence_of_pure_trace_is_the_gradient() {
        let grid = GridSpec::periodic(vec![2.0 * PI, 2.0 * PI], vec![16, 16]).build().unwrap();
        let metric = DomainMetric::flat(&grid);
        let target = ChartTarget::euclidean(1).unwrap();
        let map = MapField::constant(&grid, &target, &[0.0]).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let f = grid.sample_scalar(|x| x[0].sin() * x[1].cos());
        let t = sym_from_fn(grid.node_count(), 2, |node, a, b| if a == b { f[node] } else { 0.0 });
        let div = divergence(&pb, &t);
        for node in 0..grid.node_count() {
            let x = grid.coordinates(node);
            assert!((div.node(node)[0] - x[0].cos() * x[1].cos()).abs() < 1e-12);
            assert!((div.node(node)[1] + x[0].sin() * x[1].sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_sinusoid_stress_matches_closed_form() {
        // m = 1, φ = A sin(ωx), s = sin ωx, c = cos ωx, k = A²ω⁸:
        // trace part k(−3s²/2 + 2c²), rank part −4kc².
        let (a, w) = (0.7, 2.0);
        let grid = GridSpec::periodic(vec![PI], vec![32]).build().unwrap();
        let metric = DomainMetric::flat(&grid);
        let target = ChartTarget::euclidean(1).unwrap();
        let map = MapField::from_fn(&grid, &target, |x| vec![a * (w * x[0]).sin()]).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let s4 = stress4(&pb);
        let k = a * a * w.powi(8);
        for node in 0..32 {
            let x = grid.coordinates(node)[0];
            let (s, c) = (w * x).sin_cos();
            let trace_part = -1.5 * s * s + 2.0 * c * c;
            let expected = k * (trace_part - 4.0 * c * c);
            assert!((s4.get(node, 0, 0) - expected).abs() < 1e-9 * k, "node {node}");
        }
    }

    #[test]
    fn trace_checks_need_a_closed_domain() {
        let grid = GridSpec::compact_support(vec![16.0, 16.0], vec![16, 16], 2.0).build().unwrap();
        let metric = DomainMetric::flat(&grid);
        let target = ChartTarget::sphere(2, 1.0).unwrap();
        let map = MapField::constant(&grid, &target, &[0.0, 0.0]).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        assert!(matches!(trace_checks(&pb), Err(Error::Mode(_))));
    }

    #[test]
    fn prefactor_vanishes_in_dimension_eight() {
        assert_eq!(trace_prefactor(8), 0.0);
        assert_eq!(trace_prefactor(2), -1.5);
    }
}
