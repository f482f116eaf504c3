//! Higher tensions, energies and stress tensors on targets where they are
//! known in closed form.

use std::f64::consts::PI;

use polytension::calculus::{MapField, Pullback};
use polytension::grid::{DomainMetric, GridSpec};
use polytension::manifold::ChartTarget;
use polytension::stress::{conservation_residual, stress4, stress4_es, Law};
use polytension::tension::catalog::MapSpec;
use polytension::tension::{curvature_energy, curvature_quantities, poly_energy, poly_tension, tau4, tau4_hat};
use proptest::prelude::*;

/// Roundoff of `d` spectral derivatives of an `O(1)` field on `n` points.
fn roundoff(n: usize, d: usize) -> f64 {
    64.0 * f64::EPSILON * (n as f64 / 2.0).powi(d as i32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Into flat space every `τ_k` is linear in the map and every `E_k` is
    /// quadratic.
    #[test]
    fn flat_target_quantities_scale_homogeneously(seed in 0u64..1000, c in 0.2..3.0f64) {
        let grid = GridSpec::periodic(vec![2.0 * PI, 2.0 * PI], vec![16, 16]).build().unwrap();
        let target = ChartTarget::euclidean(2).unwrap();
        let metric = DomainMetric::flat(&grid);
        let map = MapSpec::Random { amplitude: 1.0, seed, max_mode: Some(2) }.build(&grid, &target).unwrap();
        let scaled = MapField::new(&grid, &target, map.values().scaled(c)).unwrap();
        let (a, b) = (Pullback::new(&map, &metric).unwrap(), Pullback::new(&scaled, &metric).unwrap());
        for k in 2..=5 {
            let (ta, tb) = (poly_tension(&a, k).unwrap(), poly_tension(&b, k).unwrap());
            let err = tb.sub(&ta.scaled(c)).max_abs();
            prop_assert!(err <= 1e-12 * c * ta.max_abs() + c * roundoff(16, 2 * k - 1), "τ_{k}: {err}");
            let (ea, eb) = (poly_energy(&a, k).unwrap(), poly_energy(&b, k).unwrap());
            prop_assert!((eb - c * c * ea).abs() <= 1e-12 * c * c * ea, "E_{k}: {eb} vs {}", c * c * ea);
        }
        let t4 = tau4(&a).max_abs();
        prop_assert!(tau4(&b).sub(&tau4(&a).scaled(c)).max_abs() <= 1e-12 * c * t4 + c * roundoff(16, 7));
    }
}

/// A great circle is a geodesic, so every higher tension and the curvature
/// correction vanish identically.
#[test]
fn great_circles_are_polyharmonic() {
    let target = ChartTarget::sphere(2, 1.0).unwrap();
    for dims in [vec![16], vec![16, 8]] {
        let lengths = vec![2.0 * PI; dims.len()];
        let grid = GridSpec::periodic(lengths, dims.clone()).build().unwrap();
        let metric = DomainMetric::flat(&grid);
        let map = MapSpec::GreatCircle { wraps: 1 }.build(&grid, &target).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        assert!(pb.tension().max_abs() <= roundoff(16, 1), "{dims:?}");
        for k in 2..=5 {
            let t = poly_tension(&pb, k).unwrap().max_abs();
            assert!(t <= roundoff(16, 2 * k - 1), "{dims:?} τ_{k} = {t}");
        }
        assert!(tau4_hat(&pb).max_abs() <= roundoff(16, 7));
        assert!(curvature_energy(&pb).unwrap().abs() <= 1e-20);
        assert!(poly_energy(&pb, 4).unwrap().abs() <= 1e-20);
    }
}

/// A `k`-fold great circle on `[0, L)` has `E = (2πk/L)²·L`.
#[test]
fn wrapped_great_circle_energy() {
    let target = ChartTarget::sphere(2, 1.0).unwrap();
    let l = 3.0;
    let grid = GridSpec::periodic(vec![l], vec![48]).build().unwrap();
    let metric = DomainMetric::flat(&grid);
    for k in 1..=3 {
        let map = MapSpec::GreatCircle { wraps: k }.build(&grid, &target).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let exact = (2.0 * PI * k as f64 / l).powi(2) * l;
        let e = poly_energy(&pb, 1).unwrap();
        assert!((e - exact).abs() <= 1e-12 * exact, "k = {k}: {e} vs {exact}");
        assert!(poly_energy(&pb, 4).unwrap() <= roundoff(48, 7).powi(2) * l);
    }
}

/// With zero curvature the Eells–Sampson correction vanishes, so both laws
/// coincide node for node.
#[test]
fn flat_targets_make_both_laws_identical() {
    let grid = GridSpec::periodic(vec![2.0 * PI, 2.0 * PI], vec![24, 24]).build().unwrap();
    let target = ChartTarget::euclidean(3).unwrap();
    let metric = DomainMetric::flat(&grid);
    let map = MapSpec::Random { amplitude: 1.0, seed: 5, max_mode: Some(3) }.build(&grid, &target).unwrap();
    let pb = Pullback::new(&map, &metric).unwrap();
    assert_eq!(stress4(&pb).axpy(-1.0, &stress4_es(&pb)).max_abs(), 0.0);
    let s4 = conservation_residual(&pb, Law::S4).unwrap();
    let es = conservation_residual(&pb, Law::S4ES).unwrap();
    assert_eq!(s4.field, es.field);
    assert!(s4.report.relative <= 1e-10, "{:?}", s4.report);
}

/// `⟨Ω₀, τ⟩ = −|R(dφ_i, dφ_j)τ|²` pointwise, by antisymmetry of the
/// curvature operator.
#[test]
fn omega0_pairs_with_tau_to_minus_the_curvature_density() {
    let grid = GridSpec::periodic(vec![2.0 * PI, 2.0 * PI], vec![32, 32]).build().unwrap();
    let target = ChartTarget::sphere(2, 1.0).unwrap();
    let metric = DomainMetric::flat(&grid);
    for seed in 0..3 {
        let map = MapSpec::Random { amplitude: 0.6, seed, max_mode: Some(2) }.build(&grid, &target).unwrap();
        let pb = Pullback::new(&map, &metric).unwrap();
        let q = curvature_quantities(&pb);
        let pairing = pb.inner(&q.omega0, &q.tau);
        let density = pb.norm_sq(&q.rt);
        let scale = density.iter().fold(0.0f64, |m, d| m.max(*d));
        let worst = pairing.iter().zip(&density).fold(0.0f64, |m, (p, d)| m.max((p + d).abs()));
        assert!(scale > 0.0 && worst <= 1e-10 * scale, "seed {seed}: {worst} against {scale}");
    }
}
