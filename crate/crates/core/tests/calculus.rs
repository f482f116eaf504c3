//! Pullback-bundle calculus against closed forms and structural identities.

use std::f64::consts::PI;

use polytension::calculus::{MapField, Pullback, Section};
use polytension::grid::{DerivativeScheme, DomainGrid, DomainMetric, GridSpec};
use polytension::manifold::ChartTarget;
use polytension::random::band_limited;
use polytension::tension::catalog::MapSpec;
use proptest::prelude::*;

fn torus(n: usize, scheme: DerivativeScheme) -> DomainGrid<f64> {
    GridSpec::periodic(vec![2.0 * PI, 2.0 * PI], vec![n, n])
        .with_scheme(scheme)
        .build()
        .unwrap()
}

/// Unfiltered spectral torus for pointwise identities, where the dealiasing
/// band would cut genuine high modes of products.
fn unfiltered_torus(n: usize) -> DomainGrid<f64> {
    GridSpec::periodic(vec![2.0 * PI, 2.0 * PI], vec![n, n])
        .with_spectral_band(1.0)
        .build()
        .unwrap()
}

fn random_section(pb: &Pullback<'_, f64>, seed: u64, max_mode: usize) -> Section<f64> {
    let values = band_limited(pb.grid(), pb.fiber_dim(), seed, max_mode, 1.0).unwrap();
    pb.section_from(values).unwrap()
}

fn scheme() -> impl Strategy<Value = DerivativeScheme> {
    prop_oneof![
        Just(DerivativeScheme::Spectral),
        (1usize..=4).prop_map(|h| DerivativeScheme::FiniteDifference { order: 2 * h }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Both discrete derivatives are skew-adjoint on the torus, so
    /// `∫⟨Δ̄V, W⟩ = ∫⟨∇̄V, ∇̄W⟩` holds to roundoff on a flat target.
    #[test]
    fn laplacian_integrates_by_parts_on_a_flat_target(
        scheme in scheme(), seed in 0u64..1000, n in prop::sample::select(vec![12usize, 16, 20]),
    ) {
        let grid = torus(n, scheme);
        let target = ChartTarget::euclidean(3).unwrap();
        let metric = DomainMetric::flat(&grid);
        let map = MapSpec::Random { amplitude: 1.0, seed, max_mode: Some(3) }.build(&grid, &target).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let v = random_section(&pb, seed + 1, 4);
        let w = random_section(&pb, seed + 2, 4);
        let lhs = pb.integrate(&pb.inner(&pb.rough_laplacian(&v), &w)).unwrap();
        let rhs = pb.integrate(&pb.inner(&pb.covariant_derivative(&v), &pb.covariant_derivative(&w))).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    /// `∫ ∂_a f·w = −∫ f·∂_a w` on the torus, to roundoff for the spectral
    /// derivative and at the stencil's order for finite differences.
    #[test]
    fn partial_derivatives_integrate_by_parts(
        scheme in scheme(), seed in 0u64..1000, axis in 0usize..2,
    ) {
        let grid = torus(32, scheme);
        let f = band_limited(&grid, 1, seed, 3, 1.0).unwrap().into_data();
        let w = band_limited(&grid, 1, seed + 1, 3, 1.0).unwrap().into_data();
        let (df, dw) = (grid.partial_derivative_scalar(&f, axis), grid.partial_derivative_scalar(&w, axis));
        let a = grid.integrate_flat(&df.iter().zip(&w).map(|(p, q)| p * q).collect::<Vec<_>>()).unwrap();
        let b = grid.integrate_flat(&f.iter().zip(&dw).map(|(p, q)| p * q).collect::<Vec<_>>()).unwrap();
        let scale = grid.integrate_flat(&df.iter().map(|p| p * p).collect::<Vec<_>>()).unwrap().sqrt();
        prop_assert!((a + b).abs() <= 1e-12 * (1.0 + scale), "{a} + {b}");
    }

    /// `∂_i⟨V, W⟩ = ⟨∇̄_i V, W⟩ + ⟨V, ∇̄_i W⟩` along a map into the sphere.
    #[test]
    fn connection_is_metric_compatible(seed in 0u64..1000) {
        let grid = unfiltered_torus(64);
        let target = ChartTarget::sphere(2, 1.0).unwrap();
        let metric = DomainMetric::flat(&grid);
        let map = MapSpec::Random { amplitude: 0.5, seed, max_mode: Some(2) }.build(&grid, &target).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let v = random_section(&pb, seed + 1, 2);
        let w = random_section(&pb, seed + 2, 2);
        let (dv, dw) = (pb.covariant_derivative(&v), pb.covariant_derivative(&w));
        let vw = pb.inner(&v, &w);
        let scale = vw.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for i in 0..2 {
            let lhs = grid.partial_derivative_scalar(&vw, i);
            let a = pb.fiber_inner(&dv, i, &w, 0);
            let b = pb.fiber_inner(&v, 0, &dw, i);
            let worst = (0..grid.node_count()).fold(0.0f64, |m, k| m.max((lhs[k] - a[k] - b[k]).abs()));
            prop_assert!(worst <= 1e-9 * scale, "axis {i}: {worst}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// `E(φ) = ∫|φ′|²` for a trigonometric polynomial into the line is a
    /// finite sum over its coefficients.
    #[test]
    fn dirichlet_energy_obeys_parseval(
        coeffs in prop::collection::vec((-1.0..1.0f64, 0.0..2.0 * PI), 1..6),
    ) {
        let grid = GridSpec::periodic(vec![2.0 * PI], vec![32]).build().unwrap();
        let target = ChartTarget::euclidean(1).unwrap();
        let metric = DomainMetric::flat(&grid);
        let f = |x: &[f64]| {
            vec![coeffs.iter().enumerate().map(|(k, (a, p))| a * ((k + 1) as f64 * x[0] + p).cos()).sum()]
        };
        let map = MapField::from_fn(&grid, &target, f).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let got = pb.integrate(&pb.norm_sq(pb.differential())).unwrap();
        let exact: f64 = PI * coeffs.iter().enumerate().map(|(k, (a, _))| a * a * ((k + 1) * (k + 1)) as f64).sum::<f64>();
        prop_assert!((got - exact).abs() <= 1e-12 * (1.0 + exact), "{got} vs {exact}");
    }
}

/// The rough Laplacian is non-negative: `Δ̄ cos(ξ·x) = |ξ|² cos(ξ·x)`.
#[test]
fn rough_laplacian_has_positive_spectrum() {
    let grid = torus(16, DerivativeScheme::Spectral);
    let target = ChartTarget::euclidean(2).unwrap();
    let metric = DomainMetric::flat(&grid);
    let map = MapField::constant(&grid, &target, &[0.0, 0.0]).unwrap();
    let pb = Pullback::new(&map, &metric).unwrap();
    for xi in [[1.0, 0.0], [2.0, -1.0], [3.0, 3.0]] {
        let k2: f64 = xi[0] * xi[0] + xi[1] * xi[1];
        let v = pb.section_from(grid.sample(2, |x| vec![(xi[0] * x[0] + xi[1] * x[1]).cos(), 0.0])).unwrap();
        let lap = pb.rough_laplacian(&v);
        let err = lap.sub(&v.scaled(k2)).max_abs();
        assert!(err <= 1e-11 * k2, "ξ = {xi:?}: {err}");
    }
}

/// `(∇̄²V)_ij − (∇̄²V)_ji = R(dφ_i, dφ_j)V` on a flat domain.
#[test]
fn second_derivative_commutator_is_the_pulled_back_curvature() {
    let grid = unfiltered_torus(64);
    let target = ChartTarget::sphere(2, 1.0).unwrap();
    let metric = DomainMetric::flat(&grid);
    for seed in 0..3 {
        let map = MapSpec::Random { amplitude: 0.5, seed, max_mode: Some(2) }.build(&grid, &target).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let v = random_section(&pb, seed + 10, 2);
        let ddv = pb.covariant_derivative(&pb.covariant_derivative(&v));
        let dphi = pb.differential();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for node in 0..grid.node_count() {
            let geo = pb.geometry(node);
            let curv = geo.curvature_vec(dphi.at(node, 0), dphi.at(node, 1), v.at(node, 0));
            let (a, b) = (ddv.at(node, ddv.label_of(&[0, 1])), ddv.at(node, ddv.label_of(&[1, 0])));
            for al in 0..2 {
                worst = worst.max((a[al] - b[al] - curv[al]).abs());
                scale = scale.max(curv[al].abs());
            }
        }
        assert!(worst <= 1e-9 * scale, "seed {seed}: {worst} against {scale}");
    }
}
