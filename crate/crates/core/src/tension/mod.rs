//! Higher-order tension fields, the curvature quantities of the
//! Eells–Sampson correction, and energy integrals.
//!
//! Notation: `RT_ij = R(dφ_i, dφ_j)τ`,
//! `Ω₀ = R(dφ_i, dφ_j) RT^{ij}`, `Ω₁(e_i) = R(RT_i^j, τ) dφ_j`,
//! `ξ₁ = −(∇_{dφ^j} R)(RT_ij, τ) dφ^i`, indices raised with `g`.

pub mod catalog;

use serde::{Deserialize, Serialize};

use crate::calculus::{BundleOneForm, BundleTensor, Pullback, Section};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `Σ_{ij} g^{ij} R(X_i, Y_i) dφ_j`; a section argument ignores the index.
pub fn frame_curvature<T: Scalar>(pb: &Pullback<'_, T>, x: &BundleTensor<T>, y: &BundleTensor<T>) -> Section<T> {
    assert!(x.rank() <= 1 && y.rank() <= 1, "frame_curvature takes sections or one-forms");
    let (m, n) = (pb.domain_dim(), pb.fiber_dim());
    let dphi = pb.differential();
    let mut out = pb.zero_section();
    let mut tmp = vec![T::zero(); n];
    for node in 0..pb.nodes() {
        let geo = pb.geometry(node);
        let ginv = pb.metric().inverse_at(node);
        let o = out.node_mut(node);
        for i in 0..m {
            let xi = x.at(node, if x.rank() == 0 { 0 } else { i });
            let yi = y.at(node, if y.rank() == 0 { 0 } else { i });
            for j in 0..m {
                let w = ginv[i * m + j];
                if w == T::zero() {
                    continue;
                }
                geo.curvature(xi, yi, dphi.at(node, j), &mut tmp);
                for a in 0..n {
                    o[a] += w * tmp[a];
                }
            }
        }
    }
    out
}

/// `Δ̄^p τ` for `p ≥ -1`, with `Δ̄^{-1} := 0`.
struct LaplacianTower<'p, 'a, T: Scalar> {
    pb: &'p Pullback<'a, T>,
    powers: Vec<Section<T>>,
    gradients: Vec<Option<BundleOneForm<T>>>,
}

impl<'p, 'a, T: Scalar> LaplacianTower<'p, 'a, T> {
    fn new(pb: &'p Pullback<'a, T>, tau: Section<T>) -> Self {
        Self {
            pb,
            powers: vec![tau],
            gradients: vec![None],
        }
    }

    fn power(&mut self, p: isize) -> Section<T> {
        if p < 0 {
            return self.pb.zero_section();
        }
        let p = p as usize;
        while self.powers.len() <= p {
            let next = self.pb.rough_laplacian(self.powers.last().expect("non-empty"));
            self.powers.push(next);
            self.gradients.push(None);
        }
        self.powers[p].clone()
    }

    /// `∇̄Δ̄^p τ`.
    fn gradient(&mut self, p: isize) -> BundleOneForm<T> {
        if p < 0 {
            return BundleTensor::zeros(self.pb.nodes(), 1, self.pb.domain_dim(), self.pb.fiber_dim());
        }
        let section = self.power(p);
        let slot = &mut self.gradients[p as usize];
        if slot.is_none() {
            *slot = Some(self.pb.covariant_derivative(&section));
        }
        slot.clone().expect("just filled")
    }
}

/// `τ_k(φ)` for `k ≥ 2` from the general even/odd formulas.
pub fn poly_tension<T: Scalar>(pb: &Pullback<'_, T>, k: usize) -> Result<Section<T>> {
    if k < 2 {
        return Err(Error::Argument(format!("poly_tension needs k >= 2, got {k}")));
    }
    let dphi = pb.differential();
    let mut tw = LaplacianTower::new(pb, pb.tension());
    let s = (k / 2) as isize;
    let mut out;
    let shift;
    if k % 2 == 0 {
        out = tw.power(2 * s - 1);
        out = out.sub(&frame_curvature(pb, &tw.power(2 * s - 2), dphi));
        shift = s - 2;
    } else {
        out = tw.power(2 * s);
        out = out.sub(&frame_curvature(pb, &tw.power(2 * s - 1), dphi));
        shift = s - 1;
        out = out.sub(&frame_curvature(pb, &tw.gradient(s - 1), &tw.power(s - 1)));
    }
    for l in 1..s {
        let hi = l + shift;
        let lo = s - l - 1;
        let a = frame_curvature(pb, &tw.gradient(hi), &tw.power(lo));
        let b = frame_curvature(pb, &tw.power(hi), &tw.gradient(lo));
        out = out.sub(&a.sub(&b));
    }
    Ok(out)
}

/// `τ₄ = Δ̄³τ − R(Δ̄²τ, dφ_j)dφ_j + R(τ, ∇̄_jΔ̄τ)dφ_j − R(∇̄_jτ, Δ̄τ)dφ_j`.
pub fn tau4<T: Scalar>(pb: &Pullback<'_, T>) -> Section<T> {
    let dphi = pb.differential();
    let tau = pb.tension();
    let l1 = pb.rough_laplacian(&tau);
    let l2 = pb.rough_laplacian(&l1);
    let l3 = pb.rough_laplacian(&l2);
    let g0 = pb.covariant_derivative(&tau);
    let g1 = pb.covariant_derivative(&l1);
    l3.sub(&frame_curvature(pb, &l2, dphi))
        .add(&frame_curvature(pb, &tau, &g1))
        .sub(&frame_curvature(pb, &g0, &l1))
}

/// The curvature building blocks of `τ̂₄` and `Ŝ₄`.
#[derive(Clone, Debug)]
pub struct CurvatureQuantities<T> {
    pub tau: Section<T>,
    /// `RT_ij = R(dφ_i, dφ_j)τ`, a rank-2 bundle tensor.
    pub rt: BundleTensor<T>,
    pub omega0: Section<T>,
    pub omega1: BundleOneForm<T>,
    pub xi1: Section<T>,
}

pub fn curvature_quantities<T: Scalar>(pb: &Pullback<'_, T>) -> CurvatureQuantities<T> {
    curvature_quantities_with(pb, pb.tension())
}

pub fn curvature_quantities_with<T: Scalar>(pb: &Pullback<'_, T>, tau: Section<T>) -> CurvatureQuantities<T> {
    let (m, n, nodes) = (pb.domain_dim(), pb.fiber_dim(), pb.nodes());
    let dphi = pb.differential();
    let mut rt = BundleTensor::zeros(nodes, 2, m, n);
    let mut omega0 = pb.zero_section();
    let mut omega1 = BundleTensor::zeros(nodes, 1, m, n);
    let mut xi1 = pb.zero_section();
    let mut tmp = vec![T::zero(); n];
    let mut raised = vec![T::zero(); m * m * n];
    for node in 0..nodes {
        let geo = pb.geometry(node);
        let ginv = pb.metric().inverse_at(node);
        let t = tau.node(node);
        {
            let r = rt.node_mut(node);
            for i in 0..m {
                for j in 0..m {
                    geo.curvature(dphi.at(node, i), dphi.at(node, j), t, &mut tmp);
                    r[(i * m + j) * n..(i * m + j + 1) * n].copy_from_slice(&tmp);
                }
            }
        }
        let r = rt.node(node);
        // RT^{ij}
        raised.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..m {
            for j in 0..m {
                for a in 0..m {
                    for b in 0..m {
                        let w = ginv[i * m + a] * ginv[j * m + b];
                        if w == T::zero() {
                            continue;
                        }
                        for al in 0..n {
                            raised[(i * m + j) * n + al] += w * r[(a * m + b) * n + al];
                        }
                    }
                }
            }
        }
        let o0 = omega0.node_mut(node);
        for i in 0..m {
            for j in 0..m {
                geo.curvature(dphi.at(node, i), dphi.at(node, j), &raised[(i * m + j) * n..(i * m + j + 1) * n], &mut tmp);
                for al in 0..n {
                    o0[al] += tmp[al];
                }
            }
        }
        let o1 = omega1.node_mut(node);
        for i in 0..m {
            for j in 0..m {
                for b in 0..m {
                    let w = ginv[j * m + b];
                    if w == T::zero() {
                        continue;
                    }
                    geo.curvature(&r[(i * m + b) * n..(i * m + b + 1) * n], t, dphi.at(node, j), &mut tmp);
                    for al in 0..n {
                        o1[i * n + al] += w * tmp[al];
                    }
                }
            }
        }
        if geo.nabla_riemann.is_some() {
            // ξ₁ = −Σ (∇_{dφ_b}R)(RT^{ab}, τ)dφ_a with RT^{ab} fully raised.
            let x = xi1.node_mut(node);
            for a in 0..m {
                for b in 0..m {
                    geo.curvature_derivative(
                        dphi.at(node, b),
                        &raised[(a * m + b) * n..(a * m + b + 1) * n],
                        t,
                        dphi.at(node, a),
                        &mut tmp,
                    );
                    for al in 0..n {
                        x[al] -= tmp[al];
                    }
                }
            }
        }
    }
    CurvatureQuantities {
        tau,
        rt,
        omega0,
        omega1,
        xi1,
    }
}

/// `τ̂₄ = −½(2ξ₁ + 2d*Ω₁ + Δ̄Ω₀ + Tr R(dφ(·), Ω₀)dφ(·))`.
pub fn tau4_hat<T: Scalar>(pb: &Pullback<'_, T>) -> Section<T> {
    tau4_hat_from(pb, &curvature_quantities(pb))
}

pub fn tau4_hat_from<T: Scalar>(pb: &Pullback<'_, T>, q: &CurvatureQuantities<T>) -> Section<T> {
    let two = T::cst(2.0);
    let sum = q
        .xi1
        .scaled(two)
        .add(&pb.codifferential(&q.omega1).scaled(two))
        .add(&pb.rough_laplacian(&q.omega0))
        .add(&frame_curvature(pb, pb.differential(), &q.omega0));
    sum.scaled(T::cst(-0.5))
}

/// `τ₄^ES = τ₄ + τ̂₄`.
pub fn tau4_es<T: Scalar>(pb: &Pullback<'_, T>) -> Section<T> {
    tau4(pb).add(&tau4_hat(pb))
}

/// Energies and finiteness integrals of a map.
///
/// `E_k` uses `∫|Δ̄^{s−1}τ|²` for `k = 2s` and `∫|∇̄Δ̄^{s−1}τ|²` for
/// `k = 2s+1`; `E_1` is the Dirichlet energy `E`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "E2", skip_serializing_if = "Option::is_none", default)]
    pub e2: Option<f64>,
    #[serde(rename = "E3", skip_serializing_if = "Option::is_none", default)]
    pub e3: Option<f64>,
    #[serde(rename = "E4", skip_serializing_if = "Option::is_none", default)]
    pub e4: Option<f64>,
    #[serde(rename = "E5", skip_serializing_if = "Option::is_none", default)]
    pub e5: Option<f64>,
    #[serde(rename = "E4_hat", skip_serializing_if = "Option::is_none", default)]
    pub e4_hat: Option<f64>,
    #[serde(rename = "E4_ES", skip_serializing_if = "Option::is_none", default)]
    pub e4_es: Option<f64>,
    #[serde(rename = "F1", skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
    #[serde(rename = "F2", skip_serializing_if = "Option::is_none", default)]
    pub f2: Option<f64>,
    #[serde(rename = "F3", skip_serializing_if = "Option::is_none", default)]
    pub f3: Option<f64>,
    #[serde(rename = "F4", skip_serializing_if = "Option::is_none", default)]
    pub f4: Option<f64>,
    #[serde(rename = "F5", skip_serializing_if = "Option::is_none", default)]
    pub f5: Option<f64>,
    #[serde(rename = "F6", skip_serializing_if = "Option::is_none", default)]
    pub f6: Option<f64>,
}

impl EnergyReport {
    pub fn energy(&self, k: usize) -> Option<f64> {
        match k {
            1 => Some(self.e),
            2 => self.e2,
            3 => self.e3,
            4 => self.e4,
            5 => self.e5,
            _ => None,
        }
    }
}

/// Which energies to evaluate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyRequest {
    #[serde(default)]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub es4: bool,
    #[serde(default)]
    pub finiteness: bool,
}

impl Default for EnergyRequest {
    fn default() -> Self {
        Self {
            ks: vec![2, 3, 4],
            es4: true,
            finiteness: true,
        }
    }
}

/// `E_k(φ)`; `k = 1` is the Dirichlet energy.
pub fn poly_energy<T: Scalar>(pb: &Pullback<'_, T>, k: usize) -> Result<T> {
    if !(1..=5).contains(&k) {
        return Err(Error::Argument(format!("energy order {k} is outside 1..=5")));
    }
    if k == 1 {
        return pb.integrate(&pb.norm_sq(pb.differential()));
    }
    let s = k / 2;
    let base = pb.laplacian_power(&pb.tension(), s - 1);
    let density = if k % 2 == 0 {
        pb.norm_sq(&base)
    } else {
        pb.norm_sq(&pb.covariant_derivative(&base))
    };
    pb.integrate(&density)
}

/// `Ê₄ = ½∫|R(dφ_i, dφ_j)τ|²`.
pub fn curvature_energy<T: Scalar>(pb: &Pullback<'_, T>) -> Result<T> {
    let q = curvature_quantities(pb);
    Ok(T::cst(0.5) * pb.integrate(&pb.norm_sq(&q.rt))?)
}

pub fn energy_report<T: Scalar>(pb: &Pullback<'_, T>, request: &EnergyRequest) -> Result<EnergyReport> {
    let mut report = EnergyReport {
        e: poly_energy(pb, 1)?.as_f64(),
        ..Default::default()
    };
    let mut ks = request.ks.clone();
    if request.es4 && !ks.contains(&4) {
        ks.push(4);
    }
    for &k in &ks {
        let v = Some(poly_energy(pb, k)?.as_f64());
        match k {
            1 => {}
            2 => report.e2 = v,
            3 => report.e3 = v,
            4 => report.e4 = v,
            5 => report.e5 = v,
            _ => unreachable!("validated by poly_energy"),
        }
    }
    if request.es4 {
        let hat = curvature_energy(pb)?.as_f64();
        report.e4_hat = Some(hat);
        report.e4_es = Some(report.e4.expect("E4 computed above") + hat);
    }
    if request.finiteness {
        let dphi = pb.differential();
        let d1 = pb.covariant_derivative(dphi);
        let d2 = pb.covariant_derivative(&d1);
        let d3 = pb.covariant_derivative(&d2);
        let e1 = pb.norm_sq(dphi);
        let s1 = pb.norm_sq(&d1);
        report.f1 = Some(pb.integrate(&e1)?.as_f64());
        report.f2 = Some(pb.integrate(&s1)?.as_f64());
        report.f3 = Some(pb.integrate(&pb.norm_sq(&d2))?.as_f64());
        report.f4 = Some(pb.integrate(&pb.norm_sq(&d3))?.as_f64());
        let f5: Vec<T> = e1.iter().zip(&s1).map(|(a, b)| *a * *a * *b).collect();
        let f6: Vec<T> = e1.iter().map(|a| *a * *a * *a).collect();
        report.f5 = Some(pb.integrate(&f5)?.as_f64());
        report.f6 = Some(pb.integrate(&f6)?.as_f64());
    }
    Ok(report)
}
