//! Differential calculus on the pullback bundle `φ*TN`.
//!
//! Sign conventions:
//! * `Δ̄ = d*d = −g^{ij}(∇̄∇̄V)_{ij}` has non-negative spectrum;
//! * `(∇̄_i V)^α = ∂_i V^α + Γ^α_{βγ}(φ) ∂_iφ^β V^γ`;
//! * every domain slot of a bundle-valued tensor picks up `−Γ^k_{ij}`.
//!
//! Orthonormal frame sums `Σ_j (·)(e_j, e_j)` are `g^{ij}` contractions.

use crate::error::{Error, Result};
use crate::grid::{DomainGrid, DomainMetric, GridMode, NodeField};
use crate::manifold::{ChartTarget, PointGeometry};
use crate::scalar::Scalar;

/// A map from the grid into a target chart.
#[derive(Clone, Debug)]
pub struct MapField<'a, T: Scalar> {
    grid: &'a DomainGrid<T>,
    target: &'a ChartTarget<T>,
    values: NodeField<T>,
}

impl<'a, T: Scalar> MapField<'a, T> {
    /// Checks shapes, chart membership and (in compact-support mode) that the
    /// map is constant outside the support radius.
    pub fn new(grid: &'a DomainGrid<T>, target: &'a ChartTarget<T>, values: NodeField<T>) -> Result<Self> {
        if values.ncomp() != target.dim() || values.nodes() != grid.node_count() {
            return Err(Error::Argument(format!(
                "map has {} nodes × {} components, grid/target need {} × {}",
                values.nodes(),
                values.ncomp(),
                grid.node_count(),
                target.dim()
            )));
        }
        for node in 0..values.nodes() {
            if !target.in_domain(values.node(node)) {
                return Err(Error::ChartExit {
                    point: values.node(node).iter().map(|v| v.as_f64()).collect(),
                });
            }
        }
        if let GridMode::CompactSupport { support_radius } = grid.mode() {
            let mut base: Option<Vec<T>> = None;
            let mut x = Vec::new();
            for node in 0..values.nodes() {
                grid.coordinates_into(node, &mut x);
                let r = x.iter().map(|v| *v * *v).sum::<T>().sqrt();
                if r <= support_radius {
                    continue;
                }
                let v = values.node(node);
                match &base {
                    None => base = Some(v.to_vec()),
                    Some(p) => {
                        let scale = T::one() + crate::scalar::max_abs(p);
                        let dev = p.iter().zip(v).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
                        if dev > T::cst(1e-12) * scale {
                            return Err(Error::Mode(format!(
                                "map is not constant outside the support radius (node {node} deviates by {dev})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self { grid, target, values })
    }

    /// Samples `f(x)` at every node.
    pub fn from_fn<F>(grid: &'a DomainGrid<T>, target: &'a ChartTarget<T>, f: F) -> Result<Self>
    where
        F: FnMut(&[T]) -> Vec<T>,
    {
        let values = grid.sample(target.dim(), f);
        Self::new(grid, target, values)
    }

    pub fn constant(grid: &'a DomainGrid<T>, target: &'a ChartTarget<T>, point: &[T]) -> Result<Self> {
        Self::from_fn(grid, target, |_| point.to_vec())
    }

    pub fn grid(&self) -> &'a DomainGrid<T> {
        self.grid
    }

    pub fn target(&self) -> &'a ChartTarget<T> {
        self.target
    }

    pub fn values(&self) -> &NodeField<T> {
        &self.values
    }

    /// Chart-linear perturbation `φ + t·V`.
    pub fn perturbed(&self, v: &BundleTensor<T>, t: T) -> Result<Self> {
        if v.rank() != 0 || v.values().nodes() != self.values.nodes() {
            return Err(Error::Argument("perturbation must be a section over the same grid".into()));
        }
        let values = self.values.axpy(t, v.values());
        Self::new(self.grid, self.target, values)
    }
}

/// Tensor field on the domain with values in `φ*TN`.
///
/// Per node the components are laid out `[i_1]…[i_r][α]` (row-major), so a
/// rank-0 tensor is a section and a rank-1 tensor a bundle-valued one-form.
#[derive(Clone, Debug, PartialEq)]
pub struct BundleTensor<T> {
    rank: usize,
    m: usize,
    n: usize,
    values: NodeField<T>,
}

/// Rank-0 bundle tensor.
pub type Section<T> = BundleTensor<T>;
/// Rank-1 bundle tensor.
pub type BundleOneForm<T> = BundleTensor<T>;

impl<T: Scalar> BundleTensor<T> {
    pub fn zeros(nodes: usize, rank: usize, m: usize, n: usize) -> Self {
        Self {
            rank,
            m,
            n,
            values: NodeField::zeros(nodes, m.pow(rank as u32) * n),
        }
    }

    pub fn from_node_field(rank: usize, m: usize, n: usize, values: NodeField<T>) -> Result<Self> {
        if values.ncomp() != m.pow(rank as u32) * n {
            return Err(Error::Argument(format!(
                "rank-{rank} bundle tensor needs {} components per node, got {}",
                m.pow(rank as u32) * n,
                values.ncomp()
            )));
        }
        Ok(Self { rank, m, n, values })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn domain_dim(&self) -> usize {
        self.m
    }

    pub fn fiber_dim(&self) -> usize {
        self.n
    }

    /// Number of domain multi-indices, `m^rank`.
    pub fn labels(&self) -> usize {
        self.m.pow(self.rank as u32)
    }

    pub fn nodes(&self) -> usize {
        self.values.nodes()
    }

    pub fn values(&self) -> &NodeField<T> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut NodeField<T> {
        &mut self.values
    }

    #[inline]
    pub fn node(&self, node: usize) -> &[T] {
        self.values.node(node)
    }

    #[inline]
    pub fn node_mut(&mut self, node: usize) -> &mut [T] {
        self.values.node_mut(node)
    }

    /// Fiber vector at `(node, label)`.
    #[inline]
    pub fn at(&self, node: usize, label: usize) -> &[T] {
        &self.values.node(node)[label * self.n..(label + 1) * self.n]
    }

    /// Row-major label of a multi-index.
    pub fn label_of(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.m + i)
    }

    /// The section obtained by fixing every domain slot.
    pub fn component_section(&self, label: usize) -> Section<T> {
        let nodes = self.nodes();
        let mut out = Section::zeros(nodes, 0, self.m, self.n);
        for node in 0..nodes {
            out.node_mut(node).copy_from_slice(self.at(node, label));
        }
        out
    }

    /// Stacks equal-rank tensors along a new leading slot.
    pub fn stack(parts: &[BundleTensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Argument("nothing to stack".into()))?;
        let (rank, m, n, nodes) = (first.rank, first.m, first.n, first.nodes());
        if parts.len() != m || parts.iter().any(|p| p.rank != rank || p.nodes() != nodes) {
            return Err(Error::Argument("stack needs m tensors of equal shape".into()));
        }
        let mut out = Self::zeros(nodes, rank + 1, m, n);
        let w = first.values.ncomp();
        for node in 0..nodes {
            let o = out.node_mut(node);
            for (k, p) in parts.iter().enumerate() {
                o[k * w..(k + 1) * w].copy_from_slice(p.node(node));
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            rank: self.rank,
            m: self.m,
            n: self.n,
            values: self.values.scaled(s),
        }
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        debug_assert_eq!((self.rank, self.m, self.n), (other.rank, other.m, other.n));
        Self {
            rank: self.rank,
            m: self.m,
            n: self.n,
            values: self.values.axpy(s, &other.values),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(T::one(), other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-T::one(), other)
    }

    pub fn max_abs(&self) -> T {
        self.values.max_abs()
    }
}

/// The pullback bundle of a map together with the domain metric.
///
/// Caches the target geometry at `φ(x)` and `dφ` at every node; all
/// operators take their inputs by reference and allocate fresh outputs.
pub struct Pullback<'a, T: Scalar> {
    grid: &'a DomainGrid<T>,
    metric: &'a DomainMetric<T>,
    target: &'a ChartTarget<T>,
    geometry: Vec<PointGeometry<T>>,
    dphi: BundleTensor<T>,
}

impl<'a, T: Scalar> Pullback<'a, T> {
    pub fn new(map: &MapField<'a, T>, metric: &'a DomainMetric<T>) -> Result<Self> {
        let grid = map.grid();
        let target = map.target();
        let m = grid.dim();
        let n = target.dim();
        let nodes = grid.node_count();
        let geometry = (0..nodes)
            .map(|node| target.geometry_at(map.values().node(node)))
            .collect::<Result<Vec<_>>>()?;
        let mut dphi = BundleTensor::zeros(nodes, 1, m, n);
        for i in 0..m {
            let d = grid.partial_derivative(map.values(), i);
            for node in 0..nodes {
                dphi.node_mut(node)[i * n..(i + 1) * n].copy_from_slice(d.node(node));
            }
        }
        Ok(Self {
            grid,
            metric,
            target,
            geometry,
            dphi,
        })
    }

    pub fn grid(&self) -> &'a DomainGrid<T> {
        self.grid
    }

    pub fn metric(&self) -> &'a DomainMetric<T> {
        self.metric
    }

    pub fn target(&self) -> &'a ChartTarget<T> {
        self.target
    }

    pub fn domain_dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.target.dim()
    }

    pub fn nodes(&self) -> usize {
        self.grid.node_count()
    }

    #[inline]
    pub fn geometry(&self, node: usize) -> &PointGeometry<T> {
        &self.geometry[node]
    }

    /// `dφ` as a bundle one-form.
    pub fn differential(&self) -> &BundleOneForm<T> {
        &self.dphi
    }

    pub fn zero_section(&self) -> Section<T> {
        Section::zeros(self.nodes(), 0, self.domain_dim(), self.fiber_dim())
    }

    pub fn section_from(&self, values: NodeField<T>) -> Result<Section<T>> {
        BundleTensor::from_node_field(0, self.domain_dim(), self.fiber_dim(), values)
    }

    /// `∇̄A`; the new derivative slot comes first.
    pub fn covariant_derivative(&self, a: &BundleTensor<T>) -> BundleTensor<T> {
        let (m, n, r) = (self.domain_dim(), self.fiber_dim(), a.rank());
        let labels = a.labels();
        let nodes = self.nodes();
        let mut out = BundleTensor::zeros(nodes, r + 1, m, n);
        let curved_domain = !self.metric.is_flat() && r > 0;
        let mut tmp = vec![T::zero(); n];
        let mut idx = vec![0usize; r];
        for k in 0..m {
            let partial = self.grid.partial_derivative(a.values(), k);
            for node in 0..nodes {
                let geo = &self.geometry[node];
                let src = a.node(node);
                let dk = partial.node(node);
                let dphik = &self.dphi.node(node)[k * n..(k + 1) * n];
                let dst = &mut out.node_mut(node)[k * labels * n..(k + 1) * labels * n];
                for l in 0..labels {
                    geo.connection(dphik, &src[l * n..(l + 1) * n], &mut tmp);
                    for al in 0..n {
                        dst[l * n + al] = dk[l * n + al] + tmp[al];
                    }
                }
                if curved_domain {
                    let gam = self.metric.christoffels().node(node);
                    for l in 0..labels {
                        label_to_index(l, m, &mut idx);
                        for s in 0..r {
                            let place = m.pow((r - 1 - s) as u32);
                            let base = l - idx[s] * place;
                            for p in 0..m {
                                let c = gam[(p * m + k) * m + idx[s]];
                                if c == T::zero() {
                                    continue;
                                }
                                let lp = base + p * place;
                                for al in 0..n {
                                    dst[l * n + al] -= c * src[lp * n + al];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `∂_k A + Γ(φ)(dφ_k, A)` label by label.
    ///
    /// Equals `∇̄_k A` when the domain metric is flat and is used there to
    /// avoid forming rank-(r+1) tensors.
    pub fn flat_directional_derivative(&self, a: &BundleTensor<T>, k: usize) -> BundleTensor<T> {
        let n = self.fiber_dim();
        let labels = a.labels();
        let mut out = self.grid_partial(a, k);
        let mut tmp = vec![T::zero(); n];
        for node in 0..self.nodes() {
            let geo = &self.geometry[node];
            let dphik = &self.dphi.node(node)[k * n..(k + 1) * n];
            let src = a.node(node);
            let dst = out.node_mut(node);
            for l in 0..labels {
                geo.connection(dphik, &src[l * n..(l + 1) * n], &mut tmp);
                for al in 0..n {
                    dst[l * n + al] += tmp[al];
                }
            }
        }
        out
    }

    fn grid_partial(&self, a: &BundleTensor<T>, k: usize) -> BundleTensor<T> {
        BundleTensor {
            rank: a.rank,
            m: a.m,
            n: a.n,
            values: self.grid.partial_derivative(a.values(), k),
        }
    }

    /// `∇̄dφ`, symmetric in its two slots.
    pub fn second_fundamental_form(&self) -> BundleTensor<T> {
        self.covariant_derivative(&self.dphi)
    }

    /// `g^{ij}` contraction of the first two slots.
    pub fn trace(&self, a: &BundleTensor<T>) -> BundleTensor<T> {
        assert!(a.rank() >= 2, "trace needs two slots");
        let (m, n) = (self.domain_dim(), self.fiber_dim());
        let rest = m.pow((a.rank() - 2) as u32) * n;
        let mut out = BundleTensor::zeros(self.nodes(), a.rank() - 2, m, n);
        for node in 0..self.nodes() {
            let ginv = self.metric.inverse_at(node);
            let src = a.node(node);
            let dst = out.node_mut(node);
            for i in 0..m {
                for j in 0..m {
                    let w = ginv[i * m + j];
                    if w == T::zero() {
                        continue;
                    }
                    let block = &src[(i * m + j) * rest..(i * m + j + 1) * rest];
                    for (d, s) in dst.iter_mut().zip(block) {
                        *d += w * *s;
                    }
                }
            }
        }
        out
    }

    /// `τ(φ) = Tr_g ∇̄dφ`.
    pub fn tension(&self) -> Section<T> {
        self.trace(&self.second_fundamental_form())
    }

    /// `Δ̄A = −Tr_g ∇̄∇̄A`, for bundle tensors of any rank.
    pub fn rough_laplacian(&self, a: &BundleTensor<T>) -> BundleTensor<T> {
        if self.metric.is_flat() {
            let mut acc = BundleTensor::zeros(self.nodes(), a.rank(), self.domain_dim(), self.fiber_dim());
            for k in 0..self.domain_dim() {
                let d = self.flat_directional_derivative(a, k);
                let dd = self.flat_directional_derivative(&d, k);
                acc = acc.sub(&dd);
            }
            acc
        } else {
            self.trace(&self.covariant_derivative(&self.covariant_derivative(a)))
                .scaled(-T::one())
        }
    }

    /// `Δ̄^p A` by repeated application.
    pub fn laplacian_power(&self, a: &BundleTensor<T>, p: usize) -> BundleTensor<T> {
        let mut out = a.clone();
        for _ in 0..p {
            out = self.rough_laplacian(&out);
        }
        out
    }

    /// `d*A = −g^{ij}(∇̄_i A)_j` for a bundle one-form.
    pub fn codifferential(&self, a: &BundleOneForm<T>) -> Section<T> {
        assert_eq!(a.rank(), 1, "codifferential takes a one-form");
        self.trace(&self.covariant_derivative(a)).scaled(-T::one())
    }

    /// Pointwise full contraction `⟨A, B⟩` (g on domain slots, h on the fiber).
    pub fn inner(&self, a: &BundleTensor<T>, b: &BundleTensor<T>) -> Vec<T> {
        assert_eq!(a.rank(), b.rank(), "inner product needs equal ranks");
        let (m, n, r) = (self.domain_dim(), self.fiber_dim(), a.rank());
        let labels = a.labels();
        let flat = self.metric.is_flat();
        let mut raised = vec![T::zero(); labels * n];
        let mut scratch = vec![T::zero(); labels * n];
        (0..self.nodes())
            .map(|node| {
                let geo = &self.geometry[node];
                let av = a.node(node);
                let bv = b.node(node);
                let bsrc: &[T] = if flat || r == 0 {
                    bv
                } else {
                    raised.copy_from_slice(bv);
                    raise_all(&mut raised, &mut scratch, self.metric.inverse_at(node), m, n, r);
                    &raised
                };
                let mut s = T::zero();
                for l in 0..labels {
                    s += geo.inner(&av[l * n..(l + 1) * n], &bsrc[l * n..(l + 1) * n]);
                }
                s
            })
            .collect()
    }

    pub fn norm_sq(&self, a: &BundleTensor<T>) -> Vec<T> {
        self.inner(a, a)
    }

    /// Pointwise `h(A_label, B_label')` for two fixed labels.
    pub fn fiber_inner(&self, a: &BundleTensor<T>, la: usize, b: &BundleTensor<T>, lb: usize) -> Vec<T> {
        (0..self.nodes())
            .map(|node| self.geometry[node].inner(a.at(node, la), b.at(node, lb)))
            .collect()
    }

    /// `∫ f dV` with this bundle's domain metric.
    pub fn integrate(&self, f: &[T]) -> Result<T> {
        self.grid.integrate(f, self.metric)
    }
}

fn label_to_index(mut l: usize, m: usize, idx: &mut [usize]) {
    for s in (0..idx.len()).rev() {
        idx[s] = l % m;
        l /= m;
    }
}

/// Raises every domain slot of a per-node tensor with `g^{-1}`.
fn raise_all<T: Scalar>(v: &mut [T], scratch: &mut [T], ginv: &[T], m: usize, n: usize, r: usize) {
    for s in 0..r {
        let inner = m.pow((r - 1 - s) as u32) * n;
        let outer = m.pow(s as u32);
        scratch.iter_mut().for_each(|x| *x = T::zero());
        for o in 0..outer {
            for i in 0..m {
                for j in 0..m {
                    let w = ginv[i * m + j];
                    if w == T::zero() {
                        continue;
                    }
                    let dst = (o * m + i) * inner;
                    let src = (o * m + j) * inner;
                    for t in 0..inner {
                        scratch[dst + t] += w * v[src + t];
                    }
                }
            }
        }
        v.copy_from_slice(scratch);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, SymTensorField};
    use std::f64::consts::PI;

    fn line(n: usize) -> DomainGrid<f64> {
        GridSpec::periodic(vec![2.0 * PI], vec![n]).build().unwrap()
    }

    #[test]
    fn sinusoid_into_the_line() {
        let grid = line(32);
        let target = ChartTarget::euclidean(1).unwrap();
        let metric = DomainMetric::flat(&grid);
        let (a, w) = (0.7, 3.0);
        let map = MapField::from_fn(&grid, &target, |x| vec![a * (w * x[0]).sin()]).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let tau = pb.tension();
        let lap = pb.rough_laplacian(&tau);
        let e = pb.norm_sq(pb.differential());
        for node in 0..grid.node_count() {
            let x = grid.coordinates(node)[0];
            assert!((tau.node(node)[0] + a * w * w * (w * x).sin()).abs() < 1e-12);
            // Δ̄ = −d²/dx², so Δ̄τ = τ·w² = −a w⁴ sin(wx).
            assert!((lap.node(node)[0] + a * w.powi(4) * (w * x).sin()).abs() < 1e-10);
            assert!((e[node] - (a * w * (w * x).cos()).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_map_has_zero_differential() {
        let grid = line(16);
        let target = ChartTarget::sphere(2, 1.0).unwrap();
        let metric = DomainMetric::flat(&grid);
        let map = MapField::constant(&grid, &target, &[0.3, -0.2]).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        assert!(pb.differential().max_abs() < 1e-15);
        assert!(pb.tension().max_abs() < 1e-15);
    }

    #[test]
    fn chart_exit_is_reported() {
        let grid = line(16);
        let target = ChartTarget::hyperbolic(1, 1.0).unwrap();
        let err = MapField::constant(&grid, &target, &[0.99]).unwrap_err();
        assert!(matches!(err, Error::ChartExit { .. }));
    }

    #[test]
    fn compact_support_requires_constant_exterior() {
        let grid = GridSpec::compact_support(vec![8.0], vec![32], 2.0).build().unwrap();
        let target = ChartTarget::euclidean(1).unwrap();
        assert!(MapField::from_fn(&grid, &target, |x| vec![x[0]]).is_err());
        assert!(MapField::from_fn(&grid, &target, |x: &[f64]| vec![if x[0].abs() < 1.0 { x[0] } else { 0.0 }]).is_ok());
    }

    #[test]
    fn codifferential_of_differential_is_minus_tension() {
        let grid = GridSpec::periodic(vec![2.0 * PI, 2.0 * PI], vec![24, 24]).build().unwrap();
        let target = ChartTarget::sphere(2, 1.0).unwrap();
        let metric = DomainMetric::flat(&grid);
        let map = MapField::from_fn(&grid, &target, |x| {
            vec![0.4 * x[0].sin() + 0.1 * x[1].cos(), 0.3 * (x[0] + x[1]).cos()]
        })
        .unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let residual = pb.codifferential(pb.differential()).add(&pb.tension());
        assert!(residual.max_abs() < 1e-12);
        let sff = pb.second_fundamental_form();
        for node in 0..grid.node_count() {
            for al in 0..2 {
                let d = sff.node(node)[2 + al] - sff.node(node)[4 + al];
                assert!(d.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn general_metric_path_matches_flat_path() {
        let grid = GridSpec::periodic(vec![2.0 * PI, 2.0 * PI], vec![16, 16]).build().unwrap();
        let target = ChartTarget::sphere(2, 1.0).unwrap();
        let flat = DomainMetric::flat(&grid);
        let ident = DomainMetric::from_tensor(&grid, SymTensorField::identity(grid.node_count(), 2)).unwrap();
        let map = MapField::from_fn(&grid, &target, |x| vec![0.4 * x[0].sin(), 0.3 * x[1].cos()]).unwrap();
        let a = Pullback::new(&map, &flat).unwrap();
        let b = Pullback::new(&map, &ident).unwrap();
        let da = a.rough_laplacian(a.differential());
        let db = b.rough_laplacian(b.differential());
        assert!(da.sub(&db).max_abs() < 1e-12 * (1.0 + da.max_abs()));
    }
}
