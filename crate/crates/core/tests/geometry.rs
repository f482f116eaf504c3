//! Target geometry against independent oracles: curvature symmetries,
//! constant-curvature closed forms, and the round sphere seen from `ℝ³`
//! through inverse stereographic projection.

use polytension::calculus::{MapField, Pullback};
use polytension::grid::{DomainMetric, GridSpec};
use polytension::manifold::{ChartTarget, GenericMetric, PointGeometry};
use polytension::tension::catalog::MapSpec;
use proptest::prelude::*;

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn sub(u: &[f64], v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(a, b)| a - b).collect()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// `⟨R(x,y)z, w⟩`.
fn r4(g: &PointGeometry<f64>, x: &[f64], y: &[f64], z: &[f64], w: &[f64]) -> f64 {
    g.inner(&g.curvature_vec(x, y, z), w)
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

/// Largest violation of the curvature symmetries at one point: both
/// antisymmetries, pair symmetry and the first Bianchi identity, plus
/// `⟨R(x,y)z, z⟩ = 0` on its own.
fn symmetry_violation(g: &PointGeometry<f64>, x: &[f64], y: &[f64], z: &[f64], w: &[f64]) -> f64 {
    let xyzw = r4(g, x, y, z, w);
    let cyclic = g.inner(
        &g.curvature_vec(x, y, z)
            .iter()
            .zip(g.curvature_vec(y, z, x))
            .zip(g.curvature_vec(z, x, y))
            .map(|((a, b), c)| a + b + c)
            .collect::<Vec<_>>(),
        w,
    );
    [
        xyzw + r4(g, y, x, z, w),
        xyzw + r4(g, x, y, w, z),
        xyzw - r4(g, z, w, x, y),
        cyclic,
    ]
    .iter()
    .fold(0.0f64, |a, r| a.max(r.abs()))
    .max(r4(g, x, y, z, z).abs())
}

/// `k` times the product of the norms: the size of `⟨R(x,y)z,w⟩` or of
/// `R(x,y)z` when `|sec| ≤ k`.
fn curvature_scale(g: &PointGeometry<f64>, k: f64, vs: &[&[f64]]) -> f64 {
    vs.iter().fold(k, |a, v| a * g.inner(v, v).sqrt())
}

/// `|R(x,y)z − k(⟨y,z⟩x − ⟨x,z⟩y)|`, zero on a space form of curvature `k`.
fn space_form_residual(g: &PointGeometry<f64>, k: f64, x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let exact: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(xa, ya)| k * (g.inner(y, z) * xa - g.inner(x, z) * ya))
        .collect();
    let got = g.curvature_vec(x, y, z);
    let diff = sub(&got, &exact);
    g.inner(&diff, &diff).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sphere_curvature_is_a_space_form(
        y in vector(3).prop_map(|v| v.iter().map(|a| 3.0 * a).collect::<Vec<_>>()),
        x in vector(3), v in vector(3), z in vector(3), w in vector(3),
        radius in 0.5..3.0f64,
    ) {
        let target = ChartTarget::sphere(3, radius).unwrap();
        let y: Vec<f64> = y.iter().map(|a| a * radius).collect();
        let g = target.geometry_at(&y).unwrap();
        let k = 1.0 / (radius * radius);
        prop_assert!(symmetry_violation(&g, &x, &v, &z, &w) <= 1e-10 * curvature_scale(&g, k, &[&x, &v, &z, &w]));
        prop_assert!(space_form_residual(&g, k, &x, &v, &z) <= 1e-10 * curvature_scale(&g, k, &[&x, &v, &z]));
    }

    #[test]
    fn hyperbolic_curvature_is_a_space_form(
        y in vector(3).prop_map(|v| v.iter().map(|a| 0.5 * a).collect::<Vec<_>>()),
        x in vector(3), v in vector(3), z in vector(3), w in vector(3),
        radius in 0.5..3.0f64,
    ) {
        let target = ChartTarget::hyperbolic(3, radius).unwrap();
        let y: Vec<f64> = y.iter().map(|a| a * radius).collect();
        let g = target.geometry_at(&y).unwrap();
        let k = 1.0 / (radius * radius);
        prop_assert!(symmetry_violation(&g, &x, &v, &z, &w) <= 1e-10 * curvature_scale(&g, k, &[&x, &v, &z, &w]));
        prop_assert!(space_form_residual(&g, -k, &x, &v, &z) <= 1e-10 * curvature_scale(&g, k, &[&x, &v, &z]));
    }

    #[test]
    fn generic_torus_curvature_has_the_tensor_symmetries(
        y in vector(2).prop_map(|v| v.iter().map(|a| 3.0 * a).collect::<Vec<_>>()),
        x in vector(2), v in vector(2), z in vector(2), w in vector(2),
    ) {
        let target = ChartTarget::generic(2, GenericMetric::torus(2.0, 0.7, 1e-3)).unwrap();
        let g = target.geometry_at(&y).unwrap();
        // Gaussian curvature is bounded by 1/(b(a − b)); finite-difference
        // curvature is symmetric only to the step's order.
        let k = 1.0 / (0.7 * 1.3);
        prop_assert!(symmetry_violation(&g, &x, &v, &z, &w) <= 1e-5 * curvature_scale(&g, k, &[&x, &v, &z, &w]));
    }

    #[test]
    fn generic_charts_reproduce_the_closed_forms(
        y in vector(2).prop_map(|v| v.iter().map(|a| 0.5 * a).collect::<Vec<_>>()),
        x in vector(2), v in vector(2), z in vector(2),
    ) {
        for (closed, generic) in [
            (ChartTarget::sphere(2, 1.0).unwrap(), GenericMetric::sphere(1.0, 1e-3)),
            (ChartTarget::hyperbolic(2, 1.0).unwrap(), GenericMetric::hyperbolic(1.0, 1e-3)),
        ] {
            let generic = ChartTarget::generic(2, generic).unwrap();
            let (a, b) = (closed.geometry_at(&y).unwrap(), generic.geometry_at(&y).unwrap());
            let scale = a.christoffel.iter().chain(&a.riemann).fold(1.0f64, |m, v| m.max(v.abs()));
            let gamma = a.christoffel.iter().zip(&b.christoffel).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            prop_assert!(gamma <= 1e-5 * scale, "Γ differs by {gamma}");
            let r = norm(&sub(&a.curvature_vec(&x, &v, &z), &b.curvature_vec(&x, &v, &z)));
            prop_assert!(r <= 1e-5 * scale, "R differs by {r}");
        }
    }
}

/// Inverse stereographic projection of the unit sphere from the north pole.
fn embed(y: &[f64]) -> [f64; 3] {
    let s = dot(y, y);
    [2.0 * y[0] / (1.0 + s), 2.0 * y[1] / (1.0 + s), (s - 1.0) / (s + 1.0)]
}

/// Differential of [`embed`] at `y` applied to `v`.
fn push(y: &[f64], v: &[f64]) -> [f64; 3] {
    let s = dot(y, y);
    let yv = dot(y, v);
    let d = 1.0 + s;
    [
        2.0 * v[0] / d - 4.0 * yv * y[0] / (d * d),
        2.0 * v[1] / d - 4.0 * yv * y[1] / (d * d),
        4.0 * yv / (d * d),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// The chart metric is the pullback of the Euclidean one, and the
    /// sectional curvature is 1 (Gauss equation for the unit sphere).
    #[test]
    fn unit_sphere_chart_agrees_with_the_embedding(
        y in vector(2).prop_map(|v| v.iter().map(|a| 3.0 * a).collect::<Vec<_>>()),
        x in vector(2), v in vector(2),
    ) {
        let g = ChartTarget::sphere(2, 1.0).unwrap().geometry_at(&y).unwrap();
        let (ex, ev) = (push(&y, &x), push(&y, &v));
        let inner = dot(&ex, &ev);
        prop_assert!((g.inner(&x, &v) - inner).abs() <= 1e-12 * norm(&ex) * norm(&ev) + 1e-300);
        let area = dot(&ex, &ex) * dot(&ev, &ev) - inner * inner;
        let sectional = r4(&g, &x, &v, &v, &x);
        prop_assert!((sectional - area).abs() <= 1e-10 * dot(&ex, &ex) * dot(&ev, &ev));
    }
}

/// The tension of a closed curve in `S² ⊂ ℝ³` is the tangential part of its
/// acceleration, `c″ + |c′|²c`. Derivatives of the embedded curve are taken
/// spectrally, independently of the chart calculus.
#[test]
fn curve_tension_matches_the_embedding_oracle() {
    let grid = GridSpec::periodic(vec![2.0 * std::f64::consts::PI], vec![96]).build().unwrap();
    let target = ChartTarget::sphere(2, 1.0).unwrap();
    let metric = DomainMetric::flat(&grid);
    for seed in 0..3 {
        let map = MapSpec::Random {
            amplitude: 0.4,
            seed,
            max_mode: Some(3),
        }
        .build(&grid, &target)
        .unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let tau = pb.tension();
        let nodes = grid.node_count();
        let c: Vec<[f64; 3]> = (0..nodes).map(|i| embed(map.values().node(i))).collect();
        let comp = |k: usize| c.iter().map(|p| p[k]).collect::<Vec<_>>();
        let d1: Vec<Vec<f64>> = (0..3).map(|k| grid.partial_derivative_scalar(&comp(k), 0)).collect();
        let d2: Vec<Vec<f64>> = d1.iter().map(|d| grid.partial_derivative_scalar(d, 0)).collect();
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..nodes {
            let speed2: f64 = (0..3).map(|k| d1[k][i] * d1[k][i]).sum();
            let oracle: Vec<f64> = (0..3).map(|k| d2[k][i] + speed2 * c[i][k]).collect();
            let got = push(map.values().node(i), tau.node(i));
            err = err.max(norm(&sub(&got, &oracle)));
            scale = scale.max(norm(&oracle));
        }
        assert!(err <= 1e-9 * scale, "seed {seed}: {err:e} against {scale:e}");
    }
}

/// Tension of a map from a square into the sphere against the embedded
/// formula `Δc + |dc|²c`, with the same independent derivatives.
#[test]
fn surface_tension_matches_the_embedding_oracle() {
    let grid = GridSpec::periodic(vec![2.0 * std::f64::consts::PI; 2], vec![48; 2]).build().unwrap();
    let target = ChartTarget::sphere(2, 1.0).unwrap();
    let metric = DomainMetric::flat(&grid);
    let map = MapSpec::Random {
        amplitude: 0.3,
        seed: 11,
        max_mode: Some(2),
    }
    .build(&grid, &target)
    .unwrap();
    let tau = Pullback::new(&map, &metric).unwrap().tension();
    let nodes = grid.node_count();
    let c: Vec<[f64; 3]> = (0..nodes).map(|i| embed(map.values().node(i))).collect();
    let mut lap = vec![vec![0.0; nodes]; 3];
    let mut energy = vec![0.0; nodes];
    for k in 0..3 {
        let ck: Vec<f64> = c.iter().map(|p| p[k]).collect();
        for axis in 0..2 {
            let d = grid.partial_derivative_scalar(&ck, axis);
            let dd = grid.partial_derivative_scalar(&d, axis);
            for i in 0..nodes {
                lap[k][i] += dd[i];
                energy[i] += d[i] * d[i];
            }
        }
    }
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..nodes {
        let oracle: Vec<f64> = (0..3).map(|k| lap[k][i] + energy[i] * c[i][k]).collect();
        err = err.max(norm(&sub(&push(map.values().node(i), tau.node(i)), &oracle)));
        scale = scale.max(norm(&oracle));
    }
    assert!(err <= 1e-9 * scale, "{err:e} against {scale:e}");
}

/// A chart-valued field that leaves the sphere's chart domain is reported,
/// not silently evaluated.
#[test]
fn maps_leaving_the_chart_are_rejected() {
    let grid = GridSpec::periodic(vec![1.0], vec![8]).build().unwrap();
    let target = ChartTarget::sphere(2, 1.0).unwrap();
    assert!(MapField::constant(&grid, &target, &[100.0, 0.0]).is_err());
}
