//! Pohozaev identities from pairing the conservation law with
//! `Y(x) = x·η(|x|)`, centred at the middle of the grid.
//!
//! With `L1 = Δ̄τ`, `L2 = Δ̄²τ`, `G0 = ∇̄τ`, `G1 = ∇̄L1`, `G2 = ∇̄L2`,
//! `S_ij = ∇̄_i dφ_j`, `ρ = rη′(r)` and `ψ_ij = η′(r)x_i x_j/r`:
//!
//! ```text
//! ∫ ∂_jY_i S₄(e_i,e_j) = ∫⟨τ₄, dφ(Y)⟩
//! ```
//!
//! which, after the integrations by parts recorded in [`ibp_ledger`],
//! becomes `(4 − m/2)∫η|L1|² = RHS − ∫⟨τ₄, dφ(Y)⟩`. The ES mode adds the
//! corresponding `Ŝ₄` pieces. Only the sum `H₁ + … + H₄` is fixed by the
//! derivation; the split used here is [`H_CONVENTION`].
//!
//! Weights are the exact derivatives of the radial profiles, and vanish off
//! the band `R < r < 2R`, so nothing is evaluated near `r = 0`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calculus::{BundleTensor, MapField, Pullback, Section};
use crate::error::{Error, Result};
use crate::grid::DomainMetric;
use crate::scalar::Scalar;
use crate::stress::{self, relative, FourthOrderFields, HatForm};
use crate::tension::{curvature_quantities_with, tau4, tau4_hat_from, CurvatureQuantities};
use crate::verify::cutoff::{CutoffProfile, RadialJet};

pub const H_CONVENTION: &str = "H1 = -(m/2)∫η|Δ̄τ|², H2 = -m∫η⟨τ,Δ̄²τ⟩, \
H3 = (2-m)∫η⟨dφ,∇̄Δ̄²τ⟩, H4 = (m-2)∫η⟨∇̄τ,∇̄Δ̄τ⟩";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PohozaevMode {
    /// `S₄` and `τ₄`.
    Fourth,
    /// `S₄^ES` and `τ₄^ES`.
    #[serde(rename = "es")]
    ES,
}

impl FromStr for PohozaevMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourth" => Ok(PohozaevMode::Fourth),
            "es" | "ES" => Ok(PohozaevMode::ES),
            other => Err(Error::Argument(format!("unknown Pohozaev mode `{other}` (expected fourth or es)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
}

fn term(name: &str, value: f64) -> Term {
    Term { name: name.into(), value }
}

/// One displayed identity: `lhs = Σ rhs`, each side its own quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerStep {
    pub step: String,
    pub lhs: f64,
    pub rhs: Vec<Term>,
    pub residual: f64,
    /// Largest of `|lhs|` and the `|rhs|` terms.
    pub scale: f64,
    pub relative: f64,
}

impl LedgerStep {
    fn new(step: &str, lhs: f64, rhs: Vec<Term>) -> Self {
        let residual = lhs - rhs.iter().map(|t| t.value).sum::<f64>();
        let scale = rhs.iter().fold(lhs.abs(), |acc, t| acc.max(t.value.abs()));
        Self {
            step: step.into(),
            lhs,
            rhs,
            residual,
            scale,
            relative: relative(residual.abs(), scale),
        }
    }
}

/// The two `Ŝ₄` identities of the ES mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsExtras {
    /// `∫Ŝ₄(e_i,e_i)η` against `(−2+m/4)∫η|RT|² + (1−m/2)∫η_k⟨Ω₀,dφ_k⟩`.
    pub trace_part: LedgerStep,
    /// `∫Ŝ₄(e_i,e_j)ψ_ij` against the form derived by integrating by parts.
    pub radial_part: LedgerStep,
    /// Same, with the last term written with the index pattern
    /// `⟨R(dφ_k,dφ_l)∇̄_i dφ_k, R(dφ_j,dφ_l)τ⟩` as printed. Diagnostic only.
    pub radial_part_as_printed: LedgerStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    pub mode: PohozaevMode,
    pub m: usize,
    pub radius: f64,
    pub h_convention: String,
    /// `H₁ … H₄`.
    pub h: Vec<f64>,
    /// `J₁ … J₆`.
    pub j: Vec<f64>,
    pub es: Option<EsExtras>,
    /// `4 − m/2`; zero in dimension 8, where the identity carries no
    /// information about `∫η|Δ̄τ|²`.
    pub lhs_prefactor: f64,
    pub degenerate: bool,
    pub lhs: f64,
    pub rhs_terms: Vec<Term>,
    pub rhs: f64,
    /// `−∫⟨τ_mode, dφ(Y)⟩`, zero for critical maps.
    pub correction: f64,
    /// `lhs − rhs − correction`.
    pub residual: f64,
    pub max_term: f64,
    pub relative: f64,
}

/// Weights at one node of the band `R < r < 2R`.
struct BandWeights<T> {
    node: usize,
    /// `x_i η(r)` is handled separately; these are the derivative weights.
    eta: Radial<T>,
    rho: Radial<T>,
    /// `ψ_ij`
    psi: Vec<T>,
    /// `ψ_ij,j` (index `i`)
    psi_j: Vec<T>,
    /// `ψ_ij,jk` (index `[i][k]`)
    psi_jk: Vec<T>,
    /// `ψ_ij,jkk` (index `i`)
    psi_jkk: Vec<T>,
    /// `ψ_ij,kk` (index `[i][j]`)
    psi_kk: Vec<T>,
    /// `ψ_ij,k` (index `[i][j][k]`)
    psi_k: Vec<T>,
}

/// Cartesian derivatives of a radial function `f(|x|)`.
struct Radial<T> {
    value: T,
    /// `f_j`
    grad: Vec<T>,
    /// `f_jk`
    hess: Vec<T>,
    /// `f_jj`
    lap: T,
    /// `f_jkk`
    grad_lap: Vec<T>,
}

fn radial<T: Scalar>(f: &RadialJet<T>, x: &[T], r: T) -> Radial<T> {
    let m = x.len();
    let mm = T::from_usize_lossy(m - 1);
    let (f0, f1, f2, f3) = (f.derivative(0), f.derivative(1), f.derivative(2), f.derivative(3));
    let lap = f2 + mm * f1 / r;
    let lap_prime = f3 + mm * (f2 / r - f1 / (r * r));
    let mut hess = vec![T::zero(); m * m];
    for j in 0..m {
        for k in 0..m {
            let xx = x[j] * x[k] / (r * r);
            let delta = if j == k { T::one() } else { T::zero() };
            hess[j * m + k] = f2 * xx + f1 * (delta - xx) / r;
        }
    }
    Radial {
        value: f0,
        grad: x.iter().map(|&xj| f1 * xj / r).collect(),
        hess,
        lap,
        grad_lap: x.iter().map(|&xj| lap_prime * xj / r).collect(),
    }
}

fn band_weights<T: Scalar>(profile: &CutoffProfile<T>, node: usize, x: &[T], r: T) -> BandWeights<T> {
    let m = x.len();
    let rj = RadialJet::variable(r);
    let eta = profile.jet(r);
    let eta_p = eta.differentiate();
    let rho = rj * eta_p;
    let q = eta_p / rj;
    let q1 = q.differentiate();
    let p = rj * q1 + q.scale(T::from_usize_lossy(m + 1));
    let (q0, dq, d2q) = (q.derivative(0), q.derivative(1), q.derivative(2));
    let (p0, dp, d2p) = (p.derivative(0), p.derivative(1), p.derivative(2));
    let mf = T::from_usize_lossy(m);
    let delta = |a: usize, b: usize| if a == b { T::one() } else { T::zero() };
    let mut psi = vec![T::zero(); m * m];
    let mut psi_jk = vec![T::zero(); m * m];
    let mut psi_kk = vec![T::zero(); m * m];
    let mut psi_k = vec![T::zero(); m * m * m];
    let lap_q = d2q + (mf - T::one()) * dq / r;
    for i in 0..m {
        for j in 0..m {
            let xx = x[i] * x[j];
            psi[i * m + j] = q0 * xx;
            psi_jk[i * m + j] = dp * x[i] * x[j] / r + p0 * delta(i, j);
            psi_kk[i * m + j] = lap_q * xx + T::cst(4.0) * dq * xx / r + T::cst(2.0) * q0 * delta(i, j);
            for k in 0..m {
                psi_k[(i * m + j) * m + k] =
                    dq * x[k] * xx / r + q0 * (delta(i, k) * x[j] + delta(j, k) * x[i]);
            }
        }
    }
    BandWeights {
        node,
        eta: radial(&eta, x, r),
        rho: radial(&rho, x, r),
        psi,
        psi_j: x.iter().map(|&xi| p0 * xi).collect(),
        psi_jk,
        psi_jkk: x.iter().map(|&xi| xi * (d2p + (mf + T::one()) * dp / r)).collect(),
        psi_kk,
        psi_k,
    }
}

/// Node-local pairings with `L1 = Δ̄τ`.
struct L1Pairings<T> {
    /// `⟨τ, L1⟩`
    tau: Vec<T>,
    /// `⟨∇̄_jτ, L1⟩`
    g0: Vec<T>,
    /// `⟨dφ_j, L1⟩`
    dphi: Vec<T>,
    /// `⟨Δ̄dφ_j, L1⟩`
    lap_dphi: Vec<T>,
    /// `⟨S_kj, L1⟩`
    s: Vec<T>,
    /// `⟨∇̄_k S_ji, L1⟩`
    ds: Vec<T>,
    /// `⟨(Δ̄S)_ji, L1⟩`
    lap_s: Vec<T>,
    /// `⟨∇̄_j∇̄_iτ, L1⟩`
    dg0: Vec<T>,
}

fn pair_all<T: Scalar>(pb: &Pullback<'_, T>, a: &BundleTensor<T>, l1: &Section<T>) -> Vec<T> {
    let labels = a.labels();
    let nodes = pb.nodes();
    let mut out = vec![T::zero(); nodes * labels];
    for node in 0..nodes {
        let geo = pb.geometry(node);
        for l in 0..labels {
            out[node * labels + l] = geo.inner(a.at(node, l), l1.node(node));
        }
    }
    out
}

struct Geometry<T> {
    eta: Vec<T>,
    /// `x − c` per node, flattened.
    x: Vec<T>,
    band: Vec<BandWeights<T>>,
}

fn geometry<T: Scalar>(pb: &Pullback<'_, T>, profile: &CutoffProfile<T>) -> Geometry<T> {
    let grid = pb.grid();
    let m = grid.dim();
    let center = grid.center();
    let mut eta = vec![T::zero(); pb.nodes()];
    let mut xs = vec![T::zero(); pb.nodes() * m];
    let mut band = Vec::new();
    let mut coords = Vec::with_capacity(m);
    for node in 0..pb.nodes() {
        grid.coordinates_into(node, &mut coords);
        let x: Vec<T> = coords.iter().zip(&center).map(|(a, c)| *a - *c).collect();
        let r = x.iter().map(|v| *v * *v).sum::<T>().sqrt();
        eta[node] = if r <= profile.radius {
            T::one()
        } else if profile.in_band(r) {
            profile.value(r)
        } else {
            T::zero()
        };
        if profile.in_band(r) {
            band.push(band_weights(profile, node, &x, r));
        }
        xs[node * m..(node + 1) * m].copy_from_slice(&x);
    }
    Geometry { eta, x: xs, band }
}

struct Integrator<'p, 'a, T: Scalar> {
    pb: &'p Pullback<'a, T>,
}

impl<T: Scalar> Integrator<'_, '_, T> {
    /// `∫ f` over all nodes.
    fn all(&self, f: impl Fn(usize) -> T) -> Result<f64> {
        let density: Vec<T> = (0..self.pb.nodes()).map(f).collect();
        Ok(self.pb.integrate(&density)?.as_f64())
    }

    /// `∫ f` where `f` vanishes off the band.
    fn band(&self, band: &[BandWeights<T>], f: impl Fn(&BandWeights<T>) -> T) -> Result<f64> {
        let mut density = vec![T::zero(); self.pb.nodes()];
        for w in band {
            density[w.node] = f(w);
        }
        Ok(self.pb.integrate(&density)?.as_f64())
    }
}

fn node_slice<T>(v: &[T], node: usize, len: usize) -> &[T] {
    &v[node * len..(node + 1) * len]
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Everything both reports need.
struct Harness<'p, 'a, T: Scalar> {
    pb: &'p Pullback<'a, T>,
    mode: PohozaevMode,
    geo: Geometry<T>,
    f: FourthOrderFields<T>,
    q: Option<CurvatureQuantities<T>>,
    pairs: L1Pairings<T>,
    /// `S_ij = ∇̄_i dφ_j`
    s: BundleTensor<T>,
}

fn check_inputs<T: Scalar>(map: &MapField<'_, T>, profile: &CutoffProfile<T>) -> Result<()> {
    let grid = map.grid();
    for a in 0..grid.dim() {
        let room = grid.lengths()[a] / T::cst(2.0);
        let need = profile.radius + profile.radius + grid.stencil_margin(a);
        if !(need < room) {
            return Err(Error::Config(format!(
                "cutoff support 2R = {} plus stencil margin {} does not fit axis {a} of half-length {room}",
                profile.radius + profile.radius,
                grid.stencil_margin(a)
            )));
        }
    }
    Ok(())
}

impl<'p, 'a, T: Scalar> Harness<'p, 'a, T> {
    fn new(pb: &'p Pullback<'a, T>, profile: &CutoffProfile<T>, mode: PohozaevMode) -> Self {
        let f = FourthOrderFields::new(pb);
        let s = pb.second_fundamental_form();
        let l1 = &f.l1;
        let pairs = L1Pairings {
            tau: pb.inner(&f.tau, l1),
            g0: pair_all(pb, &f.g0, l1),
            dphi: pair_all(pb, pb.differential(), l1),
            lap_dphi: pair_all(pb, &pb.rough_laplacian(pb.differential()), l1),
            s: pair_all(pb, &s, l1),
            ds: pair_all(pb, &pb.covariant_derivative(&s), l1),
            lap_s: pair_all(pb, &pb.rough_laplacian(&s), l1),
            dg0: pair_all(pb, &pb.covariant_derivative(&f.g0), l1),
        };
        let q = (mode == PohozaevMode::ES).then(|| curvature_quantities_with(pb, f.tau.clone()));
        Self {
            pb,
            mode,
            geo: geometry(pb, profile),
            f,
            q,
            pairs,
            s,
        }
    }

    fn m(&self) -> usize {
        self.pb.domain_dim()
    }

    fn integrator(&self) -> Integrator<'p, 'a, T> {
        Integrator { pb: self.pb }
    }

    /// Pointwise `Σ_j ⟨A_j, B_j⟩` for one-forms.
    fn traced(&self, a: &BundleTensor<T>, b: &BundleTensor<T>) -> Vec<T> {
        self.pb.inner(a, b)
    }

    fn steps(&self) -> Result<(Vec<LedgerStep>, Sums)> {
        let m = self.m();
        let mf = m as f64;
        let it = self.integrator();
        let pb = self.pb;
        let f = &self.f;
        let p = &self.pairs;
        let eta = &self.geo.eta;
        let band = &self.geo.band;
        let dphi = pb.differential();

        let l1sq = pb.norm_sq(&f.l1);
        let tau_l2 = pb.inner(&f.tau, &f.l2);
        let dphi_g2 = self.traced(dphi, &f.g2);
        let g0_g1 = self.traced(&f.g0, &f.g1);
        let s4 = stress::stress4_from(pb, f);

        let n = pb.fiber_dim();
        let pair_ij = |a: &BundleTensor<T>, b: &BundleTensor<T>, node: usize, i: usize, j: usize| {
            pb.geometry(node).inner(&a.node(node)[i * n..(i + 1) * n], &b.node(node)[j * n..(j + 1) * n])
        };

        let eta_l1sq = it.all(|k| eta[k] * l1sq[k])?;
        let eta_tau_l2 = it.all(|k| eta[k] * tau_l2[k])?;
        let eta_dphi_g2 = it.all(|k| eta[k] * dphi_g2[k])?;
        let eta_g0_g1 = it.all(|k| eta[k] * g0_g1[k])?;
        let eta_tr_s4 = it.all(|k| eta[k] * (0..m).map(|i| s4.get(k, i, i)).sum::<T>())?;

        let rho_l1sq = it.band(band, |w| w.rho.value * l1sq[w.node])?;
        let rho_tau_l2 = it.band(band, |w| w.rho.value * tau_l2[w.node])?;
        let rho_dphi_g2 = it.band(band, |w| w.rho.value * dphi_g2[w.node])?;
        let rho_g0_g1 = it.band(band, |w| w.rho.value * g0_g1[w.node])?;
        let psi_dphi_g2 = it.band(band, |w| {
            let mut s = T::zero();
            for i in 0..m {
                for j in 0..m {
                    s += w.psi[i * m + j] * pair_ij(dphi, &f.g2, w.node, i, j);
                }
            }
            s
        })?;
        let psi_g0_g1 = it.band(band, |w| {
            let mut s = T::zero();
            for i in 0..m {
                for j in 0..m {
                    s += w.psi[i * m + j] * pair_ij(&f.g0, &f.g1, w.node, i, j);
                }
            }
            s
        })?;
        let psi_s4 = it.band(band, |w| {
            let mut s = T::zero();
            for i in 0..m {
                for j in 0..m {
                    s += w.psi[i * m + j] * s4.get(w.node, i, j);
                }
            }
            s
        })?;

        // Weighted pairings with L1 for a radial weight (η or ρ).
        let lap_tau = |sel: fn(&BandWeights<T>) -> &Radial<T>| {
            it.band(band, |w| sel(w).lap * p.tau[w.node])
        };
        let grad_g0 = |sel: fn(&BandWeights<T>) -> &Radial<T>| {
            it.band(band, |w| dot(&sel(w).grad, &p.g0[w.node * m..(w.node + 1) * m]))
        };
        let grad_lap_dphi = |sel: fn(&BandWeights<T>) -> &Radial<T>| {
            it.band(band, |w| dot(&sel(w).grad_lap, &p.dphi[w.node * m..(w.node + 1) * m]))
        };
        let hess_s = |sel: fn(&BandWeights<T>) -> &Radial<T>| {
            // Σ_jk f_jk ⟨S_kj, L1⟩; f_jk is symmetric.
            it.band(band, |w| dot(&sel(w).hess, &p.s[w.node * m * m..(w.node + 1) * m * m]))
        };
        let grad_lap_dphi_l1 = |sel: fn(&BandWeights<T>) -> &Radial<T>| {
            it.band(band, |w| dot(&sel(w).grad, &p.lap_dphi[w.node * m..(w.node + 1) * m]))
        };
        let by_eta: fn(&BandWeights<T>) -> &Radial<T> = |w| &w.eta;
        let by_rho: fn(&BandWeights<T>) -> &Radial<T> = |w| &w.rho;

        let etajj_tau = lap_tau(by_eta)?;
        let etaj_g0 = grad_g0(by_eta)?;
        let etajkk_dphi = grad_lap_dphi(by_eta)?;
        let etajk_s = hess_s(by_eta)?;
        let etaj_lapdphi = grad_lap_dphi_l1(by_eta)?;
        let rhoj_g0 = grad_g0(by_rho)?;
        let rhojkk_dphi = grad_lap_dphi(by_rho)?;
        let rhojk_s = hess_s(by_rho)?;
        let rhoj_lapdphi = grad_lap_dphi_l1(by_rho)?;

        let psijkk_dphi = it.band(band, |w| dot(&w.psi_jkk, node_slice(&p.dphi, w.node, m)))?;
        // ψ_ij,jk ⟨S_ki, L1⟩: weight index [i][k], pairing index [k][i].
        let psijk_s = it.band(band, |w| {
            let ps = node_slice(&p.s, w.node, m * m);
            let mut s = T::zero();
            for i in 0..m {
                for k in 0..m {
                    s += w.psi_jk[i * m + k] * ps[k * m + i];
                }
            }
            s
        })?;
        let psij_lapdphi = it.band(band, |w| dot(&w.psi_j, node_slice(&p.lap_dphi, w.node, m)))?;
        // ψ_ij,kk ⟨S_ji, L1⟩
        let psikk_s = it.band(band, |w| {
            let ps = node_slice(&p.s, w.node, m * m);
            let mut s = T::zero();
            for i in 0..m {
                for j in 0..m {
                    s += w.psi_kk[i * m + j] * ps[j * m + i];
                }
            }
            s
        })?;
        // ψ_ij,k ⟨∇̄_k S_ji, L1⟩
        let psik_ds = it.band(band, |w| {
            let pd = node_slice(&p.ds, w.node, m * m * m);
            let mut s = T::zero();
            for i in 0..m {
                for j in 0..m {
                    for k in 0..m {
                        s += w.psi_k[(i * m + j) * m + k] * pd[(k * m + j) * m + i];
                    }
                }
            }
            s
        })?;
        // ψ_ij ⟨(Δ̄S)_ji, L1⟩
        let psi_laps = it.band(band, |w| {
            let pl = node_slice(&p.lap_s, w.node, m * m);
            let mut s = T::zero();
            for i in 0..m {
                for j in 0..m {
                    s += w.psi[i * m + j] * pl[j * m + i];
                }
            }
            s
        })?;
        // ψ_ij ⟨∇̄_j∇̄_iτ, L1⟩
        let psi_dg0 = it.band(band, |w| {
            let pg = node_slice(&p.dg0, w.node, m * m);
            let mut s = T::zero();
            for i in 0..m {
                for j in 0..m {
                    s += w.psi[i * m + j] * pg[j * m + i];
                }
            }
            s
        })?;
        let psij_g0 = it.band(band, |w| dot(&w.psi_j, node_slice(&p.g0, w.node, m)))?;

        let h = [
            -mf / 2.0 * eta_l1sq,
            -mf * eta_tau_l2,
            (2.0 - mf) * eta_dphi_g2,
            (mf - 2.0) * eta_g0_g1,
        ];
        let j = [
            -0.5 * rho_l1sq,
            -rho_tau_l2,
            -rho_dphi_g2,
            rho_g0_g1,
            2.0 * psi_dphi_g2,
            -2.0 * psi_g0_g1,
        ];
        let names = |prefix: &str, v: &[f64]| -> Vec<Term> {
            v.iter().enumerate().map(|(k, x)| term(&format!("{prefix}{}", k + 1), *x)).collect()
        };
        let mut ledger = vec![
            LedgerStep::new("H_definition", eta_tr_s4, names("H", &h)),
            LedgerStep::new("J_definition", psi_s4, names("J", &j)),
            LedgerStep::new(
                "H2",
                eta_tau_l2,
                vec![
                    term("-∫(η)_jj⟨τ,Δ̄τ⟩", -etajj_tau),
                    term("-2∫(η)_j⟨∇̄_jτ,Δ̄τ⟩", -2.0 * etaj_g0),
                    term("∫η|Δ̄τ|²", eta_l1sq),
                ],
            ),
            LedgerStep::new(
                "H3",
                eta_dphi_g2,
                vec![
                    term("-∫η⟨τ,Δ̄²τ⟩", -eta_tau_l2),
                    term("∫(η)_jkk⟨dφ_j,Δ̄τ⟩", etajkk_dphi),
                    term("2∫(η)_jk⟨∇̄_k dφ_j,Δ̄τ⟩", 2.0 * etajk_s),
                    term("-∫(η)_j⟨Δ̄dφ_j,Δ̄τ⟩", -etaj_lapdphi),
                ],
            ),
            LedgerStep::new(
                "H4",
                eta_g0_g1,
                vec![term("∫η|Δ̄τ|²", eta_l1sq), term("-∫(η)_j⟨∇̄_jτ,Δ̄τ⟩", -etaj_g0)],
            ),
            LedgerStep::new(
                "J3",
                j[2],
                vec![
                    term("-J2", -j[1]),
                    term("-∫(rη')_jkk⟨dφ_j,Δ̄τ⟩", -rhojkk_dphi),
                    term("-2∫(rη')_jk⟨∇̄_k dφ_j,Δ̄τ⟩", -2.0 * rhojk_s),
                    term("∫(rη')_j⟨Δ̄dφ_j,Δ̄τ⟩", rhoj_lapdphi),
                ],
            ),
            LedgerStep::new(
                "J4",
                j[3],
                vec![term("∫η'r|Δ̄τ|²", rho_l1sq), term("-∫(rη')_j⟨∇̄_jτ,Δ̄τ⟩", -rhoj_g0)],
            ),
            LedgerStep::new(
                "J5",
                j[4] / 2.0,
                vec![
                    term("∫ψ_ij,jkk⟨dφ_i,Δ̄τ⟩", psijkk_dphi),
                    term("2∫ψ_ij,jk⟨∇̄_k dφ_i,Δ̄τ⟩", 2.0 * psijk_s),
                    term("-∫ψ_ij,j⟨Δ̄dφ_i,Δ̄τ⟩", -psij_lapdphi),
                    term("∫ψ_ij,kk⟨∇̄_j dφ_i,Δ̄τ⟩", psikk_s),
                    term("2∫ψ_ij,k⟨∇̄_k∇̄_j dφ_i,Δ̄τ⟩", 2.0 * psik_ds),
                    term("-∫ψ_ij⟨Δ̄∇̄_j dφ_i,Δ̄τ⟩", -psi_laps),
                ],
            ),
            LedgerStep::new(
                "J6",
                j[5] / 2.0,
                vec![
                    term("∫ψ_ij⟨∇̄_j∇̄_iτ,Δ̄τ⟩", psi_dg0),
                    term("∫ψ_ij,j⟨∇̄_iτ,Δ̄τ⟩", psij_g0),
                ],
            ),
        ];

        let rhs_terms = vec![
            term("2∫(η)_jj⟨τ,Δ̄τ⟩", 2.0 * etajj_tau),
            term("-(m-6)∫(η)_j⟨∇̄_jτ,Δ̄τ⟩", -(mf - 6.0) * etaj_g0),
            term("(2-m)∫(η)_jkk⟨dφ_j,Δ̄τ⟩", (2.0 - mf) * etajkk_dphi),
            term("-(2-m)∫(η)_j⟨Δ̄dφ_j,Δ̄τ⟩", -(2.0 - mf) * etaj_lapdphi),
            term("2(2-m)∫(η)_jk⟨∇̄_k dφ_j,Δ̄τ⟩", 2.0 * (2.0 - mf) * etajk_s),
            term("½∫η'r|Δ̄τ|²", 0.5 * rho_l1sq),
            term("-∫(rη')_j⟨∇̄_jτ,Δ̄τ⟩", -rhoj_g0),
            term("-∫(rη')_jkk⟨dφ_j,Δ̄τ⟩", -rhojkk_dphi),
            term("-2∫(rη')_jk⟨∇̄_k dφ_j,Δ̄τ⟩", -2.0 * rhojk_s),
            term("∫(rη')_j⟨Δ̄dφ_j,Δ̄τ⟩", rhoj_lapdphi),
            term("2∫ψ_ij,jkk⟨dφ_i,Δ̄τ⟩", 2.0 * psijkk_dphi),
            term("4∫ψ_ij,jk⟨∇̄_k dφ_i,Δ̄τ⟩", 4.0 * psijk_s),
            term("-2∫ψ_ij,j⟨Δ̄dφ_i,Δ̄τ⟩", -2.0 * psij_lapdphi),
            term("2∫ψ_ij,kk⟨∇̄_j dφ_i,Δ̄τ⟩", 2.0 * psikk_s),
            term("4∫ψ_ij,k⟨∇̄_k∇̄_j dφ_i,Δ̄τ⟩", 4.0 * psik_ds),
            term("-2∫ψ_ij⟨Δ̄∇̄_j dφ_i,Δ̄τ⟩", -2.0 * psi_laps),
            term("2∫ψ_ij⟨∇̄_j∇̄_iτ,Δ̄τ⟩", 2.0 * psi_dg0),
            term("2∫ψ_ij,j⟨∇̄_iτ,Δ̄τ⟩", 2.0 * psij_g0),
        ];
        let mut sums = Sums {
            h: h.to_vec(),
            j: j.to_vec(),
            lhs: (4.0 - mf / 2.0) * eta_l1sq,
            rhs_terms,
            es: None,
        };
        if self.mode == PohozaevMode::ES {
            let (es_steps, extras, lhs_extra, rhs_extra) = self.es_steps()?;
            ledger.extend(es_steps);
            ledger.push(extras.trace_part.clone());
            ledger.push(extras.radial_part.clone());
            sums.lhs += lhs_extra;
            sums.rhs_terms.extend(rhs_extra);
            sums.es = Some(extras);
        }
        Ok((ledger, sums))
    }

    #[allow(clippy::type_complexity)]
    fn es_steps(&self) -> Result<(Vec<LedgerStep>, EsExtras, f64, Vec<Term>)> {
        let q = self.q.as_ref().expect("ES mode computes the curvature quantities");
        let pb = self.pb;
        let m = self.m();
        let mf = m as f64;
        let n = pb.fiber_dim();
        let it = self.integrator();
        let eta = &self.geo.eta;
        let band = &self.geo.band;
        let dphi = pb.differential();
        let s_hat = stress::stress4_hat_from(pb, q, HatForm::Curvature);
        let grad_omega0 = pb.covariant_derivative(&q.omega0);
        let rt_sq = pb.norm_sq(&q.rt);
        let om0_dphi = pair_all(pb, dphi, &q.omega0);
        let grad_om0_dphi = self.traced(&grad_omega0, dphi);
        let rt = |node: usize, a: usize, b: usize| &q.rt.node(node)[(a * m + b) * n..(a * m + b + 1) * n];
        let s = |node: usize, a: usize, b: usize| &self.s.node(node)[(a * m + b) * n..(a * m + b + 1) * n];
        let mut tmp = vec![T::zero(); n];

        let eta_rtsq = it.all(|k| eta[k] * rt_sq[k])?;
        let rho_rtsq = it.band(band, |w| w.rho.value * rt_sq[w.node])?;
        let eta_tr_hat = it.all(|k| eta[k] * (0..m).map(|i| s_hat.get(k, i, i)).sum::<T>())?;
        let psi_hat = it.band(band, |w| {
            let mut acc = T::zero();
            for i in 0..m {
                for j in 0..m {
                    acc += w.psi[i * m + j] * s_hat.get(w.node, i, j);
                }
            }
            acc
        })?;
        let etak_om0 = it.band(band, |w| dot(&w.eta.grad, &om0_dphi[w.node * m..(w.node + 1) * m]))?;
        let rhok_om0 = it.band(band, |w| dot(&w.rho.grad, &om0_dphi[w.node * m..(w.node + 1) * m]))?;
        // ψ is symmetric, so ψ_ij,i = ψ_ji,i.
        let psii_om0 = it.band(band, |w| dot(&w.psi_j, &om0_dphi[w.node * m..(w.node + 1) * m]))?;
        let eta_gradom0 = it.all(|k| eta[k] * grad_om0_dphi[k])?;
        let rho_gradom0 = it.band(band, |w| w.rho.value * grad_om0_dphi[w.node])?;
        let psi_gradom0 = it.band(band, |w| {
            let geo = pb.geometry(w.node);
            let mut acc = T::zero();
            for i in 0..m {
                for j in 0..m {
                    acc += w.psi[i * m + j] * geo.inner(grad_omega0.at(w.node, i), dphi.at(w.node, j));
                }
            }
            acc
        })?;
        let psi_rt_rt = it.band(band, |w| {
            let geo = pb.geometry(w.node);
            let mut acc = T::zero();
            for i in 0..m {
                for j in 0..m {
                    let mut inner = T::zero();
                    for k in 0..m {
                        inner += geo.inner(rt(w.node, k, i), rt(w.node, k, j));
                    }
                    acc += w.psi[i * m + j] * inner;
                }
            }
            acc
        })?;
        // Σ ψ_ij ⟨R(dφ_k,dφ_l) S_ij, RT_kl⟩ and the printed variant
        // Σ ψ_ij ⟨R(dφ_k,dφ_l) S_ik, RT_jl⟩.
        let mut derived = vec![T::zero(); pb.nodes()];
        let mut printed = vec![T::zero(); pb.nodes()];
        for w in band {
            let node = w.node;
            let geo = pb.geometry(node);
            let (mut a, mut b) = (T::zero(), T::zero());
            for i in 0..m {
                for j in 0..m {
                    let weight = w.psi[i * m + j];
                    for k in 0..m {
                        for l in 0..m {
                            geo.curvature(dphi.at(node, k), dphi.at(node, l), s(node, i, j), &mut tmp);
                            a += weight * geo.inner(&tmp, rt(node, k, l));
                            geo.curvature(dphi.at(node, k), dphi.at(node, l), s(node, i, k), &mut tmp);
                            b += weight * geo.inner(&tmp, rt(node, j, l));
                        }
                    }
                }
            }
            derived[node] = a;
            printed[node] = b;
        }
        let psi_rs_rt = pb.integrate(&derived)?.as_f64();
        let psi_rs_rt_printed = pb.integrate(&printed)?.as_f64();

        let steps = vec![
            LedgerStep::new(
                "ES_eta",
                eta_gradom0,
                vec![term("-∫(η)_k⟨Ω₀,dφ_k⟩", -etak_om0), term("∫η|RT|²", eta_rtsq)],
            ),
            LedgerStep::new(
                "ES_rho",
                rho_gradom0,
                vec![term("-∫(rη')_k⟨Ω₀,dφ_k⟩", -rhok_om0), term("∫η'r|RT|²", rho_rtsq)],
            ),
            LedgerStep::new(
                "ES_psi",
                psi_gradom0,
                vec![
                    term("-∫ψ_ij,i⟨Ω₀,dφ_j⟩", -psii_om0),
                    term("∫ψ_ij⟨R(dφ_k,dφ_l)∇̄_i dφ_j,RT_kl⟩", psi_rs_rt),
                ],
            ),
        ];
        let trace_rhs = vec![
            term("(-2+m/4)∫η|RT|²", (-2.0 + mf / 4.0) * eta_rtsq),
            term("(1-m/2)∫(η)_k⟨Ω₀,dφ_k⟩", (1.0 - mf / 2.0) * etak_om0),
        ];
        let radial_common = vec![
            term("¼∫η'r|RT|²", 0.25 * rho_rtsq),
            term("-½∫(rη')_k⟨Ω₀,dφ_k⟩", -0.5 * rhok_om0),
            term("-∫ψ_ij⟨RT_ki,RT_kj⟩", -psi_rt_rt),
            term("∫ψ_ij,i⟨Ω₀,dφ_j⟩", psii_om0),
        ];
        let mut radial_rhs = radial_common.clone();
        radial_rhs.push(term("-∫ψ_ij⟨R(dφ_k,dφ_l)∇̄_i dφ_j,RT_kl⟩", -psi_rs_rt));
        let mut printed_rhs = radial_common;
        printed_rhs.push(term("-∫ψ_ij⟨R(dφ_k,dφ_l)∇̄_i dφ_k,RT_jl⟩", -psi_rs_rt_printed));
        let extras = EsExtras {
            trace_part: LedgerStep::new("ES_a", eta_tr_hat, trace_rhs),
            radial_part: LedgerStep::new("ES_b", psi_hat, radial_rhs.clone()),
            radial_part_as_printed: LedgerStep::new("ES_b_as_printed", psi_hat, printed_rhs),
        };
        // Moving the |RT|² term of the trace part to the left:
        // (4 − m/2)∫η(|Δ̄τ|² + ½|RT|²).
        let lhs_extra = (4.0 - mf / 2.0) * 0.5 * eta_rtsq;
        let mut rhs_extra = vec![term("(1-m/2)∫(η)_k⟨Ω₀,dφ_k⟩", (1.0 - mf / 2.0) * etak_om0)];
        rhs_extra.extend(radial_rhs);
        Ok((steps, extras, lhs_extra, rhs_extra))
    }

    /// `∫⟨τ_mode, dφ(Y)⟩` with `Y = xη`.
    fn pairing_with_y(&self) -> Result<f64> {
        let pb = self.pb;
        let m = self.m();
        let mut tension = tau4(pb);
        if let Some(q) = &self.q {
            tension = tension.add(&tau4_hat_from(pb, q));
        }
        let dphi = pb.differential();
        let x = &self.geo.x;
        let eta = &self.geo.eta;
        self.integrator().all(|node| {
            if eta[node] == T::zero() {
                return T::zero();
            }
            let geo = pb.geometry(node);
            let mut s = T::zero();
            for i in 0..m {
                s += x[node * m + i] * geo.inner(tension.node(node), dphi.at(node, i));
            }
            eta[node] * s
        })
    }
}

struct Sums {
    h: Vec<f64>,
    j: Vec<f64>,
    lhs: f64,
    rhs_terms: Vec<Term>,
    es: Option<EsExtras>,
}

fn flat_pullback<'a, T: Scalar>(map: &MapField<'a, T>, metric: &'a DomainMetric<T>) -> Result<Pullback<'a, T>> {
    Pullback::new(map, metric)
}

fn run<T: Scalar>(
    map: &MapField<'_, T>,
    profile: &CutoffProfile<T>,
    mode: PohozaevMode,
) -> Result<(PohozaevReport, Vec<LedgerStep>)> {
    check_inputs(map, profile)?;
    let metric = DomainMetric::flat(map.grid());
    let pb = flat_pullback(map, &metric)?;
    let harness = Harness::new(&pb, profile, mode);
    let (ledger, sums) = harness.steps()?;
    let correction = -harness.pairing_with_y()?;
    let m = pb.domain_dim();
    let rhs: f64 = sums.rhs_terms.iter().map(|t| t.value).sum();
    let residual = sums.lhs - rhs - correction;
    let max_term = sums
        .rhs_terms
        .iter()
        .fold(sums.lhs.abs().max(correction.abs()), |acc, t| acc.max(t.value.abs()));
    let prefactor = 4.0 - m as f64 / 2.0;
    let report = PohozaevReport {
        mode,
        m,
        radius: profile.radius.as_f64(),
        h_convention: H_CONVENTION.into(),
        h: sums.h,
        j: sums.j,
        es: sums.es,
        lhs_prefactor: prefactor,
        degenerate: prefactor == 0.0,
        lhs: sums.lhs,
        rhs_terms: sums.rhs_terms,
        rhs,
        correction,
        residual,
        max_term,
        relative: relative(residual.abs(), max_term),
    };
    Ok((report, ledger))
}

/// The assembled identity with its correction term, on a flat domain.
pub fn pohozaev_report<T: Scalar>(
    map: &MapField<'_, T>,
    profile: &CutoffProfile<T>,
    mode: PohozaevMode,
) -> Result<PohozaevReport> {
    run(map, profile, mode).map(|(report, _)| report)
}

/// Every displayed integration by parts, each side as its own quadrature.
pub fn ibp_ledger<T: Scalar>(map: &MapField<'_, T>, profile: &CutoffProfile<T>, mode: PohozaevMode) -> Result<Vec<LedgerStep>> {
    run(map, profile, mode).map(|(_, ledger)| ledger)
}

/// Report and ledger from one evaluation of the fields.
pub fn pohozaev_with_ledger<T: Scalar>(
    map: &MapField<'_, T>,
    profile: &CutoffProfile<T>,
    mode: PohozaevMode,
) -> Result<(PohozaevReport, Vec<LedgerStep>)> {
    run(map, profile, mode)
}

/// Largest relative residual over the ledger.
pub fn worst_step(ledger: &[LedgerStep]) -> Option<&LedgerStep> {
    ledger
        .iter()
        .max_by(|a, b| a.relative.partial_cmp(&b.relative).unwrap_or(std::cmp::Ordering::Equal))
}
