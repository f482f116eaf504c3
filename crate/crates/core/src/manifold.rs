//! Target manifolds in a single coordinate chart.
//!
//! A [`ChartTarget`] hands out, at any chart point, the metric `h`, the
//! Christoffel symbols, the Riemann tensor and its covariant derivative.
//! Space forms (flat space, round spheres in the stereographic chart,
//! hyperbolic space in the Poincaré ball) are closed-form; any other metric
//! goes through [`GenericMetric`], whose derivatives are taken by finite
//! differences of the metric function.
//!
//! Curvature convention: `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`, so a
//! space form of sectional curvature `c` has `R(X,Y)Z = c(⟨Y,Z⟩X − ⟨X,Z⟩Y)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Metric function of a generic chart: point `y` to row-major `n×n` matrix.
pub type MetricFn<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;

/// A chart metric known only through evaluations.
#[derive(Clone)]
pub struct GenericMetric<T> {
    name: String,
    metric: MetricFn<T>,
    step: T,
    /// Largest admissible `|y|`; `None` accepts every finite point.
    radius_limit: Option<T>,
}

impl<T: Scalar> fmt::Debug for GenericMetric<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericMetric")
            .field("name", &self.name)
            .field("step", &self.step)
            .field("radius_limit", &self.radius_limit)
            .finish()
    }
}

/// One monomial term `coeff · Π y_k^{powers[k]}` added to `h_{ab}` (and,
/// mirrored, to `h_{ba}`).
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialTerm<T> {
    pub entry: (usize, usize),
    pub coeff: T,
    pub powers: Vec<u32>,
}

/// Default finite-difference step of generic charts.
pub const DEFAULT_GENERIC_STEP: f64 = 1e-3;

/// Default chart bound of the stereographic sphere chart, in units of the radius.
pub const SPHERE_CHART_LIMIT: f64 = 10.0;

/// Default chart bound of the Poincaré ball, as a fraction of the radius.
pub const POINCARE_CHART_LIMIT: f64 = 0.95;

impl<T: Scalar> GenericMetric<T> {
    pub fn new(name: impl Into<String>, metric: MetricFn<T>, step: T) -> Self {
        Self {
            name: name.into(),
            metric,
            step,
            radius_limit: None,
        }
    }

    pub fn with_radius_limit(mut self, limit: T) -> Self {
        self.radius_limit = Some(limit);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn step(&self) -> T {
        self.step
    }

    /// Round sphere metric of the stereographic chart, evaluated numerically.
    pub fn sphere(radius: T, step: T) -> Self {
        let r2 = radius * radius;
        let metric: MetricFn<T> = Arc::new(move |y: &[T]| {
            let n = y.len();
            let s: T = y.iter().map(|v| *v * *v).sum();
            let w = T::cst(4.0) / (T::one() + s / r2).powi(2);
            diagonal(n, w)
        });
        Self::new("sphere", metric, step).with_radius_limit(radius * T::cst(SPHERE_CHART_LIMIT))
    }

    /// Hyperbolic metric of the Poincaré ball, evaluated numerically.
    pub fn hyperbolic(radius: T, step: T) -> Self {
        let r2 = radius * radius;
        let metric: MetricFn<T> = Arc::new(move |y: &[T]| {
            let n = y.len();
            let s: T = y.iter().map(|v| *v * *v).sum();
            let w = T::cst(4.0) / (T::one() - s / r2).powi(2);
            diagonal(n, w)
        });
        Self::new("hyperbolic", metric, step)
            .with_radius_limit(radius * T::cst(POINCARE_CHART_LIMIT))
    }

    /// Torus of revolution in angle coordinates: `b² dθ² + (a + b cos θ)² dϕ²`.
    /// Its curvature is not parallel, which makes it the test bed for `∇R`.
    pub fn torus(major: T, minor: T, step: T) -> Self {
        let metric: MetricFn<T> = Arc::new(move |y: &[T]| {
            let w = major + minor * y[0].cos();
            vec![minor * minor, T::zero(), T::zero(), w * w]
        });
        Self::new("torus", metric, step)
    }

    /// `h = I + Σ terms`, each term mirrored to keep `h` symmetric.
    pub fn polynomial(dim: usize, terms: Vec<PolynomialTerm<T>>, step: T) -> Result<Self> {
        for t in &terms {
            if t.entry.0 >= dim || t.entry.1 >= dim || t.powers.len() > dim {
                return Err(Error::Config(format!(
                    "polynomial metric term {:?} does not fit dimension {dim}",
                    t.entry
                )));
            }
        }
        let metric: MetricFn<T> = Arc::new(move |y: &[T]| {
            let n = y.len();
            let mut h = diagonal(n, T::one());
            for t in &terms {
                let mut v = t.coeff;
                for (k, &p) in t.powers.iter().enumerate() {
                    v *= y[k].powi(p as i32);
                }
                let (a, b) = t.entry;
                h[a * n + b] += v;
                if a != b {
                    h[b * n + a] += v;
                }
            }
            h
        });
        Ok(Self::new("polynomial", metric, step))
    }
}

fn diagonal<T: Scalar>(n: usize, w: T) -> Vec<T> {
    let mut h = vec![T::zero(); n * n];
    for a in 0..n {
        h[a * n + a] = w;
    }
    h
}

/// Which closed form (if any) backs a target.
#[derive(Clone)]
pub enum TargetKind<T> {
    Euclidean,
    /// Round sphere in the stereographic chart from the north pole.
    Sphere { radius: T },
    /// Hyperbolic space in the Poincaré ball chart.
    Hyperbolic { radius: T },
    Generic(GenericMetric<T>),
}

/// Target manifold `N` described in one chart of `ℝ^n`.
#[derive(Clone)]
pub struct ChartTarget<T> {
    dim: usize,
    kind: TargetKind<T>,
}

impl<T: Scalar> fmt::Debug for TargetKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetKind::Euclidean => f.write_str("Euclidean"),
            TargetKind::Sphere { radius } => f.debug_struct("Sphere").field("radius", radius).finish(),
            TargetKind::Hyperbolic { radius } => f.debug_struct("Hyperbolic").field("radius", radius).finish(),
            TargetKind::Generic(g) => f.debug_tuple("Generic").field(g).finish(),
        }
    }
}

impl<T: Scalar> fmt::Debug for ChartTarget<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartTarget").field("dim", &self.dim).field("kind", &self.kind).finish()
    }
}

/// Geometry of the target at one chart point.
///
/// Index layout (row-major): `christoffel[a][b][c] = Γ^a_{bc}`,
/// `riemann[a][b][c][d]` = component `a` of `R(∂_b,∂_c)∂_d`,
/// `nabla_riemann[e][a][b][c][d]` = component `a` of `(∇_e R)(∂_b,∂_c)∂_d`.
#[derive(Clone, Debug)]
pub struct PointGeometry<T> {
    pub n: usize,
    pub metric: Vec<T>,
    pub christoffel: Vec<T>,
    pub riemann: Vec<T>,
    /// `None` when the curvature is parallel (space forms).
    pub nabla_riemann: Option<Vec<T>>,
}

impl<T: Scalar> PointGeometry<T> {
    #[inline]
    pub fn inner(&self, u: &[T], v: &[T]) -> T {
        let n = self.n;
        let mut s = T::zero();
        for a in 0..n {
            let mut row = T::zero();
            for b in 0..n {
                row += self.metric[a * n + b] * v[b];
            }
            s += u[a] * row;
        }
        s
    }

    /// `out^a = Γ^a_{bc} u^b v^c`.
    #[inline]
    pub fn connection(&self, u: &[T], v: &[T], out: &mut [T]) {
        let n = self.n;
        for a in 0..n {
            let mut s = T::zero();
            for b in 0..n {
                if u[b] == T::zero() {
                    continue;
                }
                let base = (a * n + b) * n;
                let mut t = T::zero();
                for c in 0..n {
                    t += self.christoffel[base + c] * v[c];
                }
                s += u[b] * t;
            }
            out[a] = s;
        }
    }

    /// `out = R(x,y)z`.
    #[inline]
    pub fn curvature(&self, x: &[T], y: &[T], z: &[T], out: &mut [T]) {
        let n = self.n;
        for a in 0..n {
            let mut s = T::zero();
            for b in 0..n {
                if x[b] == T::zero() {
                    continue;
                }
                for c in 0..n {
                    let xy = x[b] * y[c];
                    if xy == T::zero() {
                        continue;
                    }
                    let base = ((a * n + b) * n + c) * n;
                    let mut t = T::zero();
                    for d in 0..n {
                        t += self.riemann[base + d] * z[d];
                    }
                    s += xy * t;
                }
            }
            out[a] = s;
        }
    }

    pub fn curvature_vec(&self, x: &[T], y: &[T], z: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        self.curvature(x, y, z, &mut out);
        out
    }

    /// `out = (∇_w R)(x,y)z`; identically zero for parallel curvature.
    pub fn curvature_derivative(&self, w: &[T], x: &[T], y: &[T], z: &[T], out: &mut [T]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = T::zero());
        let Some(nr) = &self.nabla_riemann else {
            return;
        };
        for e in 0..n {
            if w[e] == T::zero() {
                continue;
            }
            for a in 0..n {
                let mut s = T::zero();
                for b in 0..n {
                    for c in 0..n {
                        let xy = x[b] * y[c];
                        if xy == T::zero() {
                            continue;
                        }
                        let base = (((e * n + a) * n + b) * n + c) * n;
                        let mut t = T::zero();
                        for d in 0..n {
                            t += nr[base + d] * z[d];
                        }
                        s += xy * t;
                    }
                }
                out[a] += w[e] * s;
            }
        }
    }
}

impl<T: Scalar> ChartTarget<T> {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("target dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            kind: TargetKind::Euclidean,
        })
    }

    pub fn sphere(dim: usize, radius: T) -> Result<Self> {
        check_positive("sphere radius", radius)?;
        if dim == 0 {
            return Err(Error::Config("target dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            kind: TargetKind::Sphere { radius },
        })
    }

    pub fn hyperbolic(dim: usize, radius: T) -> Result<Self> {
        check_positive("hyperbolic radius", radius)?;
        if dim == 0 {
            return Err(Error::Config("target dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            kind: TargetKind::Hyperbolic { radius },
        })
    }

    /// Wraps a metric function; `h` must be SPD at the probe points
    /// (origin and `±½` along every axis, where admissible).
    pub fn generic(dim: usize, metric: GenericMetric<T>) -> Result<Self> {
        check_positive("differentiation step", metric.step)?;
        if dim == 0 {
            return Err(Error::Config("target dimension must be positive".into()));
        }
        let target = Self {
            dim,
            kind: TargetKind::Generic(metric),
        };
        let mut probes = vec![vec![T::zero(); dim]];
        for a in 0..dim {
            for s in [T::cst(0.5), T::cst(-0.5)] {
                let mut p = vec![T::zero(); dim];
                p[a] = s;
                probes.push(p);
            }
        }
        for p in probes.iter().filter(|p| target.in_domain(p)) {
            let h = target.metric(p)?;
            if h.len() != dim * dim {
                return Err(Error::Config(format!(
                    "metric function returned {} entries, expected {}",
                    h.len(),
                    dim * dim
                )));
            }
            if linalg::cholesky(&h, dim).is_none() {
                return Err(Error::Geometry {
                    point: p.iter().map(|v| v.as_f64()).collect(),
                    reason: "metric is not symmetric positive definite".into(),
                });
            }
        }
        Ok(target)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &TargetKind<T> {
        &self.kind
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, TargetKind::Euclidean)
    }

    /// Sectional curvature for space forms, `None` for generic charts.
    pub fn constant_curvature(&self) -> Option<T> {
        match &self.kind {
            TargetKind::Euclidean => Some(T::zero()),
            TargetKind::Sphere { radius } => Some((*radius * *radius).recip()),
            TargetKind::Hyperbolic { radius } => Some(-(*radius * *radius).recip()),
            TargetKind::Generic(_) => None,
        }
    }

    /// Chart-domain predicate (finite, and within the chart's safety bound).
    pub fn in_domain(&self, y: &[T]) -> bool {
        if y.len() != self.dim || y.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let norm = || y.iter().map(|v| *v * *v).sum::<T>().sqrt();
        match &self.kind {
            TargetKind::Euclidean => true,
            TargetKind::Sphere { radius } => norm() <= *radius * T::cst(SPHERE_CHART_LIMIT),
            TargetKind::Hyperbolic { radius } => norm() <= *radius * T::cst(POINCARE_CHART_LIMIT),
            TargetKind::Generic(g) => g.radius_limit.map_or(true, |l| norm() <= l),
        }
    }

    fn check_domain(&self, y: &[T]) -> Result<()> {
        if self.in_domain(y) {
            Ok(())
        } else {
            Err(Error::ChartExit {
                point: y.iter().map(|v| v.as_f64()).collect(),
            })
        }
    }

    /// `h_{ab}(y)` row-major.
    pub fn metric(&self, y: &[T]) -> Result<Vec<T>> {
        self.check_domain(y)?;
        Ok(match &self.kind {
            TargetKind::Euclidean => diagonal(self.dim, T::one()),
            TargetKind::Sphere { .. } | TargetKind::Hyperbolic { .. } => {
                diagonal(self.dim, self.conformal(y).0)
            }
            TargetKind::Generic(g) => (g.metric)(y),
        })
    }

    /// Conformal factor `w = e^{2u}` and gradient `∂u` of the space-form charts.
    fn conformal(&self, y: &[T]) -> (T, Vec<T>) {
        let s: T = y.iter().map(|v| *v * *v).sum();
        match &self.kind {
            TargetKind::Sphere { radius } => {
                let r2 = *radius * *radius;
                let q = T::one() + s / r2;
                let w = T::cst(4.0) / (q * q);
                let du = y.iter().map(|v| -T::cst(2.0) * *v / (r2 * q)).collect();
                (w, du)
            }
            TargetKind::Hyperbolic { radius } => {
                let r2 = *radius * *radius;
                let q = T::one() - s / r2;
                let w = T::cst(4.0) / (q * q);
                let du = y.iter().map(|v| T::cst(2.0) * *v / (r2 * q)).collect();
                (w, du)
            }
            _ => (T::one(), vec![T::zero(); self.dim]),
        }
    }

    /// `Γ^a_{bc}(y)` laid out `[a][b][c]`.
    pub fn christoffels(&self, y: &[T]) -> Result<Vec<T>> {
        Ok(self.geometry_at(y)?.christoffel)
    }

    /// `R(x,y)z` at the chart point `p`.
    pub fn curvature(&self, p: &[T], x: &[T], y: &[T], z: &[T]) -> Result<Vec<T>> {
        Ok(self.geometry_at(p)?.curvature_vec(x, y, z))
    }

    /// `(∇_w R)(x,y)z` at the chart point `p`.
    pub fn curvature_derivative(&self, p: &[T], w: &[T], x: &[T], y: &[T], z: &[T]) -> Result<Vec<T>> {
        let g = self.geometry_at(p)?;
        let mut out = vec![T::zero(); self.dim];
        g.curvature_derivative(w, x, y, z, &mut out);
        Ok(out)
    }

    /// Full local geometry at `y`.
    pub fn geometry_at(&self, y: &[T]) -> Result<PointGeometry<T>> {
        self.check_domain(y)?;
        let n = self.dim;
        match &self.kind {
            TargetKind::Euclidean => Ok(PointGeometry {
                n,
                metric: diagonal(n, T::one()),
                christoffel: vec![T::zero(); n * n * n],
                riemann: vec![T::zero(); n * n * n * n],
                nabla_riemann: None,
            }),
            TargetKind::Sphere { .. } | TargetKind::Hyperbolic { .. } => {
                let (w, du) = self.conformal(y);
                let k = self.constant_curvature().unwrap_or_else(T::zero);
                let metric = diagonal(n, w);
                let mut christoffel = vec![T::zero(); n * n * n];
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            let mut v = T::zero();
                            if a == b {
                                v += du[c];
                            }
                            if a == c {
                                v += du[b];
                            }
                            if b == c {
                                v -= du[a];
                            }
                            christoffel[(a * n + b) * n + c] = v;
                        }
                    }
                }
                Ok(PointGeometry {
                    n,
                    riemann: space_form_riemann(n, k, &metric),
                    metric,
                    christoffel,
                    nabla_riemann: None,
                })
            }
            TargetKind::Generic(g) => generic_geometry(n, g, y),
        }
    }
}

fn check_positive<T: Scalar>(what: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive, got {v}")))
    }
}

/// `R(∂_b,∂_c)∂_d = k(h_{cd}∂_b − h_{bd}∂_c)`.
fn space_form_riemann<T: Scalar>(n: usize, k: T, h: &[T]) -> Vec<T> {
    let mut r = vec![T::zero(); n * n * n * n];
    if k == T::zero() {
        return r;
    }
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut v = T::zero();
                    if a == b {
                        v += h[c * n + d];
                    }
                    if a == c {
                        v -= h[b * n + d];
                    }
                    r[((a * n + b) * n + c) * n + d] = k * v;
                }
            }
        }
    }
    r
}

/// Nested fourth-order central differences of the metric along `dirs`.
fn metric_partial<T: Scalar>(f: &MetricFn<T>, y: &mut Vec<T>, dirs: &[usize], steps: &[T]) -> Vec<T> {
    let Some((&dir, rest)) = dirs.split_first() else {
        return f(y);
    };
    let s = steps[dirs.len() - 1];
    let w1 = T::cst(2.0 / 3.0);
    let w2 = T::cst(-1.0 / 12.0);
    let y0 = y[dir];
    let eval = |offset: T, y: &mut Vec<T>| {
        y[dir] = y0 + offset;
        let v = metric_partial(f, y, rest, steps);
        y[dir] = y0;
        v
    };
    let p1 = eval(s, y);
    let m1 = eval(-s, y);
    let p2 = eval(s + s, y);
    let m2 = eval(-(s + s), y);
    p1.iter()
        .zip(&m1)
        .zip(p2.iter().zip(&m2))
        .map(|((a, b), (c, d))| (w1 * (*a - *b) + w2 * (*c - *d)) / s)
        .collect()
}

fn generic_geometry<T: Scalar>(n: usize, g: &GenericMetric<T>, y: &[T]) -> Result<PointGeometry<T>> {
    let h = (g.metric)(y);
    let (hinv, _) = linalg::spd_inverse(&h, n).ok_or_else(|| Error::Geometry {
        point: y.iter().map(|v| v.as_f64()).collect(),
        reason: "metric is not symmetric positive definite".into(),
    })?;
    // Per-order steps: deeper nesting trades truncation for roundoff.
    let step = g.step;
    let steps = [step, step * T::cst(2.0), step * T::cst(5.0)];
    let mut yy = y.to_vec();
    let n2 = n * n;

    // d1h[c][a][b] = ∂_c h_ab
    let mut d1h = vec![T::zero(); n * n2];
    for c in 0..n {
        let v = metric_partial(&g.metric, &mut yy, &[c], &steps);
        d1h[c * n2..(c + 1) * n2].copy_from_slice(&v);
    }
    // d2h[c][e][a][b] = ∂_c ∂_e h_ab
    let mut d2h = vec![T::zero(); n * n * n2];
    for c in 0..n {
        for e in c..n {
            let v = metric_partial(&g.metric, &mut yy, &[c, e], &steps);
            d2h[(c * n + e) * n2..(c * n + e + 1) * n2].copy_from_slice(&v);
            d2h[(e * n + c) * n2..(e * n + c + 1) * n2].copy_from_slice(&v);
        }
    }
    // d3h[f][c][e][a][b]
    let mut d3h = vec![T::zero(); n * n * n * n2];
    for f in 0..n {
        for c in f..n {
            for e in c..n {
                let v = metric_partial(&g.metric, &mut yy, &[f, c, e], &steps);
                for (i, j, k) in [(f, c, e), (f, e, c), (c, f, e), (c, e, f), (e, f, c), (e, c, f)] {
                    let base = ((i * n + j) * n + k) * n2;
                    d3h[base..base + n2].copy_from_slice(&v);
                }
            }
        }
    }

    let idx3 = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    // First-kind symbols G_dbc = ½(∂_b h_dc + ∂_c h_db − ∂_d h_bc) and derivatives.
    let mut gk = vec![T::zero(); n * n2];
    let mut dgk = vec![T::zero(); n * n * n2]; // [e][d][b][c]
    let mut d2gk = vec![T::zero(); n * n * n * n2]; // [f][e][d][b][c]
    let half = T::cst(0.5);
    for d in 0..n {
        for b in 0..n {
            for c in 0..n {
                gk[idx3(d, b, c)] =
                    half * (d1h[b * n2 + d * n + c] + d1h[c * n2 + d * n + b] - d1h[d * n2 + b * n + c]);
                for e in 0..n {
                    let pe = |i: usize, r: usize, s: usize| d2h[(e * n + i) * n2 + r * n + s];
                    dgk[e * n * n2 + idx3(d, b, c)] = half * (pe(b, d, c) + pe(c, d, b) - pe(d, b, c));
                    for f in 0..n {
                        let pfe =
                            |i: usize, r: usize, s: usize| d3h[((f * n + e) * n + i) * n2 + r * n + s];
                        d2gk[(f * n + e) * n * n2 + idx3(d, b, c)] =
                            half * (pfe(b, d, c) + pfe(c, d, b) - pfe(d, b, c));
                    }
                }
            }
        }
    }
    // Derivatives of the inverse metric.
    let mut dhinv = vec![T::zero(); n * n2]; // [e][a][d]
    for e in 0..n {
        for a in 0..n {
            for d in 0..n {
                let mut s = T::zero();
                for p in 0..n {
                    for q in 0..n {
                        s += hinv[a * n + p] * d1h[e * n2 + p * n + q] * hinv[q * n + d];
                    }
                }
                dhinv[e * n2 + a * n + d] = -s;
            }
        }
    }
    let mut d2hinv = vec![T::zero(); n * n * n2]; // [f][e][a][d]
    for f in 0..n {
        for e in 0..n {
            for a in 0..n {
                for d in 0..n {
                    let mut s = T::zero();
                    for p in 0..n {
                        for q in 0..n {
                            s += dhinv[f * n2 + a * n + p] * d1h[e * n2 + p * n + q] * hinv[q * n + d];
                            s += hinv[a * n + p] * d2h[(f * n + e) * n2 + p * n + q] * hinv[q * n + d];
                            s += hinv[a * n + p] * d1h[e * n2 + p * n + q] * dhinv[f * n2 + q * n + d];
                        }
                    }
                    d2hinv[(f * n + e) * n2 + a * n + d] = -s;
                }
            }
        }
    }
    // Γ^a_bc, ∂_eΓ^a_bc, ∂_f∂_eΓ^a_bc.
    let mut gam = vec![T::zero(); n * n2];
    let mut dgam = vec![T::zero(); n * n * n2];
    let mut d2gam = vec![T::zero(); n * n * n * n2];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let mut s = T::zero();
                for d in 0..n {
                    s += hinv[a * n + d] * gk[idx3(d, b, c)];
                }
                gam[idx3(a, b, c)] = s;
                for e in 0..n {
                    let mut s = T::zero();
                    for d in 0..n {
                        s += dhinv[e * n2 + a * n + d] * gk[idx3(d, b, c)]
                            + hinv[a * n + d] * dgk[e * n * n2 + idx3(d, b, c)];
                    }
                    dgam[e * n * n2 + idx3(a, b, c)] = s;
                    for f in 0..n {
                        let mut s = T::zero();
                        for d in 0..n {
                            s += d2hinv[(f * n + e) * n2 + a * n + d] * gk[idx3(d, b, c)]
                                + dhinv[e * n2 + a * n + d] * dgk[f * n * n2 + idx3(d, b, c)]
                                + dhinv[f * n2 + a * n + d] * dgk[e * n * n2 + idx3(d, b, c)]
                                + hinv[a * n + d] * d2gk[(f * n + e) * n * n2 + idx3(d, b, c)];
                        }
                        d2gam[(f * n + e) * n * n2 + idx3(a, b, c)] = s;
                    }
                }
            }
        }
    }
    let n3 = n * n2;
    let n4 = n * n3;
    let ridx = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
    let g3 = |a: usize, b: usize, c: usize| gam[idx3(a, b, c)];
    let dg = |e: usize, a: usize, b: usize, c: usize| dgam[e * n3 + idx3(a, b, c)];
    let mut riemann = vec![T::zero(); n4];
    let mut driem = vec![T::zero(); n * n4];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut r = dg(b, a, c, d) - dg(c, a, b, d);
                    for e in 0..n {
                        r += g3(a, b, e) * g3(e, c, d) - g3(a, c, e) * g3(e, b, d);
                    }
                    riemann[ridx(a, b, c, d)] = r;
                    for f in 0..n {
                        let d2 = |i: usize, a: usize, b: usize, c: usize| {
                            d2gam[(f * n + i) * n3 + idx3(a, b, c)]
                        };
                        let mut s = d2(b, a, c, d) - d2(c, a, b, d);
                        for e in 0..n {
                            s += dg(f, a, b, e) * g3(e, c, d) + g3(a, b, e) * dg(f, e, c, d)
                                - dg(f, a, c, e) * g3(e, b, d)
                                - g3(a, c, e) * dg(f, e, b, d);
                        }
                        driem[f * n4 + ridx(a, b, c, d)] = s;
                    }
                }
            }
        }
    }
    let mut nabla = vec![T::zero(); n * n4];
    for f in 0..n {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let mut s = driem[f * n4 + ridx(a, b, c, d)];
                        for e in 0..n {
                            s += g3(a, f, e) * riemann[ridx(e, b, c, d)]
                                - g3(e, f, b) * riemann[ridx(a, e, c, d)]
                                - g3(e, f, c) * riemann[ridx(a, b, e, d)]
                                - g3(e, f, d) * riemann[ridx(a, b, c, e)];
                        }
                        nabla[f * n4 + ridx(a, b, c, d)] = s;
                    }
                }
            }
        }
    }
    Ok(PointGeometry {
        n,
        metric: h,
        christoffel: gam,
        riemann,
        nabla_riemann: Some(nabla),
    })
}
