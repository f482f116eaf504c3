//! Uniform grids on a torus or a box, with derivative and quadrature kernels.
//!
//! Nodes are stored in row-major order (last axis fastest). Multi-component
//! fields keep the components of one node contiguous.

pub mod io;

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{pairwise_sum, Scalar};

/// Values on every grid node, `ncomp` per node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeField<T> {
    ncomp: usize,
    data: Vec<T>,
}

impl<T: Scalar> NodeField<T> {
    pub fn zeros(nodes: usize, ncomp: usize) -> Self {
        Self {
            ncomp,
            data: vec![T::zero(); nodes * ncomp],
        }
    }

    pub fn from_vec(ncomp: usize, data: Vec<T>) -> Result<Self> {
        if ncomp == 0 || data.len() % ncomp != 0 {
            return Err(Error::Argument(format!(
                "{} values cannot be split into {ncomp} components per node",
                data.len()
            )));
        }
        Ok(Self { ncomp, data })
    }

    pub fn from_scalar(values: Vec<T>) -> Self {
        Self { ncomp: 1, data: values }
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn nodes(&self) -> usize {
        self.data.len() / self.ncomp
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[T] {
        &self.data[i * self.ncomp..(i + 1) * self.ncomp]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.ncomp..(i + 1) * self.ncomp]
    }

    pub fn component(&self, c: usize) -> Vec<T> {
        self.data.iter().skip(c).step_by(self.ncomp).copied().collect()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            ncomp: self.ncomp,
            data: self.data.iter().map(|v| *v * s).collect(),
        }
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        debug_assert_eq!(self.data.len(), other.data.len());
        Self {
            ncomp: self.ncomp,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a + s * *b).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        crate::scalar::max_abs(&self.data)
    }
}

/// Domain topology.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode<T> {
    Periodic,
    /// Box centred at the origin; fields are constant outside `support_radius`.
    CompactSupport { support_radius: T },
}

/// Derivative discretization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    Spectral,
    FiniteDifference { order: usize },
}

impl DerivativeScheme {
    /// Formal order of accuracy (`None` for spectral).
    pub fn order(&self) -> Option<usize> {
        match self {
            DerivativeScheme::Spectral => None,
            DerivativeScheme::FiniteDifference { order } => Some(*order),
        }
    }
}

/// Default retained band of the spectral derivative, as a fraction of the
/// Nyquist wavenumber (the two-thirds rule).
pub const DEFAULT_SPECTRAL_BAND: f64 = 2.0 / 3.0;

struct SpectralAxis<T: Scalar> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    /// Angular wavenumber per FFT bin, zero outside the retained band.
    wavenumbers: Vec<T>,
}

/// Uniform tensor-product grid on a torus or a centred box.
pub struct DomainGrid<T: Scalar> {
    lengths: Vec<T>,
    resolutions: Vec<usize>,
    mode: GridMode<T>,
    scheme: DerivativeScheme,
    spectral_band: T,
    strides: Vec<usize>,
    nodes: usize,
    fd_weights: Vec<T>,
    spectral: Vec<SpectralAxis<T>>,
}

impl<T: Scalar> fmt::Debug for DomainGrid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainGrid")
            .field("lengths", &self.lengths)
            .field("resolutions", &self.resolutions)
            .field("mode", &self.mode)
            .field("scheme", &self.scheme)
            .finish()
    }
}

fn central_weights<T: Scalar>(order: usize) -> Option<Vec<T>> {
    let w: &[f64] = match order {
        2 => &[0.5],
        4 => &[2.0 / 3.0, -1.0 / 12.0],
        6 => &[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
        8 => &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        _ => return None,
    };
    Some(w.iter().map(|v| T::cst(*v)).collect())
}

/// Description of a grid before construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec<T> {
    pub lengths: Vec<T>,
    pub resolutions: Vec<usize>,
    pub mode: GridMode<T>,
    pub scheme: DerivativeScheme,
    pub spectral_band: T,
}

impl<T: Scalar> GridSpec<T> {
    /// Periodic torus with the spectral scheme.
    pub fn periodic(lengths: Vec<T>, resolutions: Vec<usize>) -> Self {
        Self {
            lengths,
            resolutions,
            mode: GridMode::Periodic,
            scheme: DerivativeScheme::Spectral,
            spectral_band: T::cst(DEFAULT_SPECTRAL_BAND),
        }
    }

    /// Centred box with sixth-order finite differences.
    pub fn compact_support(lengths: Vec<T>, resolutions: Vec<usize>, support_radius: T) -> Self {
        Self {
            lengths,
            resolutions,
            mode: GridMode::CompactSupport { support_radius },
            scheme: DerivativeScheme::FiniteDifference { order: 6 },
            spectral_band: T::cst(DEFAULT_SPECTRAL_BAND),
        }
    }

    pub fn with_scheme(mut self, scheme: DerivativeScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_spectral_band(mut self, band: T) -> Self {
        self.spectral_band = band;
        self
    }

    pub fn build(self) -> Result<DomainGrid<T>> {
        DomainGrid::new(self)
    }
}

impl<T: Scalar> DomainGrid<T> {
    pub fn new(spec: GridSpec<T>) -> Result<Self> {
        let GridSpec {
            lengths,
            resolutions,
            mode,
            scheme,
            spectral_band,
        } = spec;
        let m = lengths.len();
        if m == 0 || resolutions.len() != m {
            return Err(Error::Config(format!(
                "grid needs one length and one resolution per axis (got {} and {})",
                m,
                resolutions.len()
            )));
        }
        if let Some(n) = resolutions.iter().find(|&&n| n < 8) {
            return Err(Error::Config(format!("grid resolution {n} is below the minimum of 8")));
        }
        if let Some(l) = lengths.iter().find(|l| !(**l > T::zero()) || !l.is_finite()) {
            return Err(Error::Config(format!("grid length {l} must be positive")));
        }
        let fd_weights = match scheme {
            DerivativeScheme::Spectral => {
                if matches!(mode, GridMode::CompactSupport { .. }) {
                    return Err(Error::Config(
                        "spectral derivatives require a periodic grid".into(),
                    ));
                }
                if !(spectral_band > T::zero() && spectral_band <= T::one()) {
                    return Err(Error::Config(format!(
                        "spectral band {spectral_band} must lie in (0, 1]"
                    )));
                }
                Vec::new()
            }
            DerivativeScheme::FiniteDifference { order } => central_weights(order).ok_or_else(|| {
                Error::Config(format!("finite-difference order {order} is not one of 2, 4, 6, 8"))
            })?,
        };
        if let GridMode::CompactSupport { support_radius } = mode {
            if !(support_radius > T::zero()) {
                return Err(Error::Config("support radius must be positive".into()));
            }
            let half_width = fd_weights.len() + 1;
            for (a, (&l, &n)) in lengths.iter().zip(&resolutions).enumerate() {
                let h = l / T::from_usize_lossy(n);
                let margin = h * T::from_usize_lossy(half_width);
                if !(support_radius + margin < l / T::cst(2.0)) {
                    return Err(Error::Config(format!(
                        "support radius {support_radius} plus stencil margin {margin} does not fit axis {a} of length {l}"
                    )));
                }
            }
        }
        let mut strides = vec![1; m];
        for a in (0..m.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * resolutions[a + 1];
        }
        let nodes = resolutions.iter().product();
        let mut spectral = Vec::new();
        if scheme == DerivativeScheme::Spectral {
            let mut planner = FftPlanner::new();
            for (&l, &n) in lengths.iter().zip(&resolutions) {
                let cutoff = spectral_band * T::from_usize_lossy(n) / T::cst(2.0);
                let base = T::cst(2.0) * T::PI() / l;
                let wavenumbers = (0..n)
                    .map(|j| {
                        let k = if 2 * j < n {
                            j as i64
                        } else {
                            j as i64 - n as i64
                        };
                        let kk = T::cst(k as f64);
                        if (2 * j == n) || kk.abs() > cutoff {
                            T::zero()
                        } else {
                            base * kk
                        }
                    })
                    .collect();
                spectral.push(SpectralAxis {
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                    wavenumbers,
                });
            }
        }
        Ok(Self {
            lengths,
            resolutions,
            mode,
            scheme,
            spectral_band,
            strides,
            nodes,
            fd_weights,
            spectral,
        })
    }

    pub fn spec(&self) -> GridSpec<T> {
        GridSpec {
            lengths: self.lengths.clone(),
            resolutions: self.resolutions.clone(),
            mode: self.mode,
            scheme: self.scheme,
            spectral_band: self.spectral_band,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[T] {
        &self.lengths
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.resolutions
    }

    pub fn mode(&self) -> GridMode<T> {
        self.mode
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.scheme
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.mode, GridMode::Periodic)
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn spacing(&self, axis: usize) -> T {
        self.lengths[axis] / T::from_usize_lossy(self.resolutions[axis])
    }

    /// Distance from a support boundary at which derivatives stop seeing
    /// the box edge: one spacing beyond the stencil half-width.
    pub fn stencil_margin(&self, axis: usize) -> T {
        self.spacing(axis) * T::from_usize_lossy(self.fd_weights.len() + 1)
    }

    pub fn cell_volume(&self) -> T {
        (0..self.dim()).map(|a| self.spacing(a)).fold(T::one(), |acc, h| acc * h)
    }

    /// Coordinate of the first node along each axis.
    pub fn origin(&self, axis: usize) -> T {
        match self.mode {
            GridMode::Periodic => T::zero(),
            GridMode::CompactSupport { .. } => -self.lengths[axis] / T::cst(2.0),
        }
    }

    /// Geometric centre of the domain.
    pub fn center(&self) -> Vec<T> {
        (0..self.dim())
            .map(|a| self.origin(a) + self.lengths[a] / T::cst(2.0))
            .collect()
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.dim())
            .map(|a| (node / self.strides[a]) % self.resolutions[a])
            .collect()
    }

    pub fn coordinates(&self, node: usize) -> Vec<T> {
        let mut x = Vec::with_capacity(self.dim());
        self.coordinates_into(node, &mut x);
        x
    }

    pub fn coordinates_into(&self, node: usize, out: &mut Vec<T>) {
        out.clear();
        for a in 0..self.dim() {
            let i = (node / self.strides[a]) % self.resolutions[a];
            out.push(self.origin(a) + T::from_usize_lossy(i) * self.spacing(a));
        }
    }

    /// Samples `f(x)` (returning `ncomp` values) at every node.
    pub fn sample<F>(&self, ncomp: usize, mut f: F) -> NodeField<T>
    where
        F: FnMut(&[T]) -> Vec<T>,
    {
        let mut out = NodeField::zeros(self.nodes, ncomp);
        let mut x = Vec::with_capacity(self.dim());
        for node in 0..self.nodes {
            self.coordinates_into(node, &mut x);
            let v = f(&x);
            out.node_mut(node).copy_from_slice(&v[..ncomp]);
        }
        out
    }

    pub fn sample_scalar<F>(&self, mut f: F) -> Vec<T>
    where
        F: FnMut(&[T]) -> T,
    {
        let mut x = Vec::with_capacity(self.dim());
        (0..self.nodes)
            .map(|node| {
                self.coordinates_into(node, &mut x);
                f(&x)
            })
            .collect()
    }

    /// `∂_axis` of every component of `field`.
    pub fn partial_derivative(&self, field: &NodeField<T>, axis: usize) -> NodeField<T> {
        let mut out = NodeField::zeros(self.nodes, field.ncomp());
        for c in 0..field.ncomp() {
            self.derive_strided(field.data(), field.ncomp(), c, axis, out.data_mut());
        }
        out
    }

    pub fn partial_derivative_scalar(&self, values: &[T], axis: usize) -> Vec<T> {
        let mut out = vec![T::zero(); values.len()];
        self.derive_strided(values, 1, 0, axis, &mut out);
        out
    }

    fn derive_strided(&self, src: &[T], ncomp: usize, comp: usize, axis: usize, dst: &mut [T]) {
        let n = self.resolutions[axis];
        let stride = self.strides[axis];
        let outer = self.nodes / (n * stride);
        let h = self.spacing(axis);
        let mut line = vec![T::zero(); n];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch = Vec::new();
        for o in 0..outer {
            for i in 0..stride {
                let base = o * n * stride + i;
                for (j, v) in line.iter_mut().enumerate() {
                    *v = src[(base + j * stride) * ncomp + comp];
                }
                match self.scheme {
                    DerivativeScheme::Spectral => {
                        let ax = &self.spectral[axis];
                        // The mean carries no derivative; removing it first keeps
                        // its rounding out of the differentiated modes.
                        let mean = crate::scalar::pairwise_sum(&line) / T::from_usize_lossy(n);
                        for (b, v) in buf.iter_mut().zip(&line) {
                            *b = Complex::new(*v - mean, T::zero());
                        }
                        if scratch.len() < ax.forward.get_inplace_scratch_len() {
                            scratch.resize(ax.forward.get_inplace_scratch_len(), Complex::new(T::zero(), T::zero()));
                        }
                        ax.forward.process_with_scratch(&mut buf, &mut scratch);
                        for (b, k) in buf.iter_mut().zip(&ax.wavenumbers) {
                            *b = Complex::new(-b.im * *k, b.re * *k);
                        }
                        if scratch.len() < ax.inverse.get_inplace_scratch_len() {
                            scratch.resize(ax.inverse.get_inplace_scratch_len(), Complex::new(T::zero(), T::zero()));
                        }
                        ax.inverse.process_with_scratch(&mut buf, &mut scratch);
                        let inv_n = T::from_usize_lossy(n).recip();
                        for (j, b) in buf.iter().enumerate() {
                            dst[(base + j * stride) * ncomp + comp] = b.re * inv_n;
                        }
                    }
                    DerivativeScheme::FiniteDifference { .. } => {
                        let periodic = self.is_periodic();
                        let at = |j: isize| -> T {
                            let idx = if periodic {
                                j.rem_euclid(n as isize) as usize
                            } else {
                                j.clamp(0, n as isize - 1) as usize
                            };
                            line[idx]
                        };
                        for j in 0..n as isize {
                            let mut s = T::zero();
                            for (k, w) in self.fd_weights.iter().enumerate() {
                                let k = k as isize + 1;
                                s += *w * (at(j + k) - at(j - k));
                            }
                            dst[(base + j as usize * stride) * ncomp + comp] = s / h;
                        }
                    }
                }
            }
        }
    }

    /// `∫ f dV` with the metric volume density, reduced pairwise.
    pub fn integrate(&self, f: &[T], metric: &DomainMetric<T>) -> Result<T> {
        let vol = self.cell_volume();
        let mut terms = Vec::with_capacity(f.len());
        for (node, &v) in f.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numerical {
                    node,
                    value: v.as_f64(),
                });
            }
            terms.push(if metric.is_flat() { v } else { v * metric.sqrt_det[node] });
        }
        Ok(pairwise_sum(&terms) * vol)
    }

    /// `∫ f dx` with the flat volume element.
    pub fn integrate_flat(&self, f: &[T]) -> Result<T> {
        for (node, &v) in f.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numerical {
                    node,
                    value: v.as_f64(),
                });
            }
        }
        Ok(pairwise_sum(f) * self.cell_volume())
    }
}

#[inline]
pub fn sym_index(a: usize, b: usize, m: usize) -> usize {
    let (i, j) = if a <= b { (a, b) } else { (b, a) };
    i * m - i * (i + 1) / 2 + j
}

/// Symmetric 2-tensor field on the domain, upper triangle per node.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField<T> {
    m: usize,
    values: NodeField<T>,
}

impl<T: Scalar> SymTensorField<T> {
    pub fn zeros(nodes: usize, m: usize) -> Self {
        Self {
            m,
            values: NodeField::zeros(nodes, m * (m + 1) / 2),
        }
    }

    /// The identity tensor at every node.
    pub fn identity(nodes: usize, m: usize) -> Self {
        let mut t = Self::zeros(nodes, m);
        for node in 0..nodes {
            for a in 0..m {
                t.set(node, a, a, T::one());
            }
        }
        t
    }

    pub fn from_node_field(m: usize, values: NodeField<T>) -> Result<Self> {
        if values.ncomp() != m * (m + 1) / 2 {
            return Err(Error::Argument(format!(
                "symmetric tensor in dimension {m} needs {} components, got {}",
                m * (m + 1) / 2,
                values.ncomp()
            )));
        }
        Ok(Self { m, values })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> usize {
        self.values.nodes()
    }

    pub fn values(&self) -> &NodeField<T> {
        &self.values
    }

    #[inline]
    pub fn get(&self, node: usize, a: usize, b: usize) -> T {
        self.values.node(node)[sym_index(a, b, self.m)]
    }

    #[inline]
    pub fn set(&mut self, node: usize, a: usize, b: usize, v: T) {
        let m = self.m;
        self.values.node_mut(node)[sym_index(a, b, m)] = v;
    }

    /// Full row-major `m×m` matrix at a node.
    pub fn matrix_at(&self, node: usize) -> Vec<T> {
        let m = self.m;
        let mut out = vec![T::zero(); m * m];
        for a in 0..m {
            for b in 0..m {
                out[a * m + b] = self.get(node, a, b);
            }
        }
        out
    }

    pub fn axpy(&self, s: T, other: &Self) -> Self {
        Self {
            m: self.m,
            values: self.values.axpy(s, &other.values),
        }
    }

    pub fn max_abs(&self) -> T {
        self.values.max_abs()
    }
}

/// Domain metric `g` with cached inverse, volume density and Christoffels.
#[derive(Clone, Debug)]
pub struct DomainMetric<T> {
    flat: bool,
    g: SymTensorField<T>,
    /// Full `m×m` inverse per node.
    ginv: NodeField<T>,
    sqrt_det: Vec<T>,
    /// `Γ^k_{ij}` per node, laid out `[k][i][j]`.
    christoffel: NodeField<T>,
}

impl<T: Scalar> DomainMetric<T> {
    /// Euclidean metric on the grid chart.
    pub fn flat(grid: &DomainGrid<T>) -> Self {
        let m = grid.dim();
        let nodes = grid.node_count();
        let mut ginv = NodeField::zeros(nodes, m * m);
        for node in 0..nodes {
            for a in 0..m {
                ginv.node_mut(node)[a * m + a] = T::one();
            }
        }
        Self {
            flat: true,
            g: SymTensorField::identity(nodes, m),
            ginv,
            sqrt_det: vec![T::one(); nodes],
            christoffel: NodeField::zeros(nodes, m * m * m),
        }
    }

    /// General metric; fails on the first node where `g` is not SPD.
    pub fn from_tensor(grid: &DomainGrid<T>, g: SymTensorField<T>) -> Result<Self> {
        let m = grid.dim();
        let nodes = grid.node_count();
        if g.dim() != m || g.nodes() != nodes {
            return Err(Error::Argument("metric field does not match the grid".into()));
        }
        let mut ginv = NodeField::zeros(nodes, m * m);
        let mut sqrt_det = vec![T::zero(); nodes];
        for node in 0..nodes {
            let mat = g.matrix_at(node);
            let (inv, det) = linalg::spd_inverse(&mat, m).ok_or_else(|| Error::Geometry {
                point: grid.coordinates(node).iter().map(|v| v.as_f64()).collect(),
                reason: "domain metric is not symmetric positive definite".into(),
            })?;
            ginv.node_mut(node).copy_from_slice(&inv);
            sqrt_det[node] = det.sqrt();
        }
        let christoffel = domain_christoffels(grid, &g, &ginv);
        Ok(Self {
            flat: false,
            g,
            ginv,
            sqrt_det,
            christoffel,
        })
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn tensor(&self) -> &SymTensorField<T> {
        &self.g
    }

    #[inline]
    pub fn inverse_at(&self, node: usize) -> &[T] {
        self.ginv.node(node)
    }

    pub fn inverse(&self) -> &NodeField<T> {
        &self.ginv
    }

    pub fn sqrt_det(&self) -> &[T] {
        &self.sqrt_det
    }

    pub fn christoffels(&self) -> &NodeField<T> {
        &self.christoffel
    }
}

/// `Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})` with the grid scheme.
pub fn domain_christoffels<T: Scalar>(
    grid: &DomainGrid<T>,
    g: &SymTensorField<T>,
    ginv: &NodeField<T>,
) -> NodeField<T> {
    let m = grid.dim();
    let nodes = grid.node_count();
    let dg: Vec<NodeField<T>> = (0..m).map(|a| grid.partial_derivative(g.values(), a)).collect();
    let mut out = NodeField::zeros(nodes, m * m * m);
    let half = T::cst(0.5);
    for node in 0..nodes {
        let gi = ginv.node(node);
        let d = |a: usize, i: usize, j: usize| dg[a].node(node)[sym_index(i, j, m)];
        let o = out.node_mut(node);
        for k in 0..m {
            for i in 0..m {
                for j in 0..m {
                    let mut s = T::zero();
                    for l in 0..m {
                        s += gi[k * m + l] * (d(i, j, l) + d(j, i, l) - d(l, i, j));
                    }
                    o[(k * m + i) * m + j] = half * s;
                }
            }
        }
    }
    out
}
