//! Seeded band-limited random fields.
//!
//! A field is a Fourier series over integer wave vectors `k` with
//! `max_d |k_d| ≤ K`, coefficients uniform in `[−1, 1]` damped by
//! `(1 + |k|²)^{−1}`, rescaled so that the largest nodal value is the
//! requested amplitude. The default cutoff is `K = N/8`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{DomainGrid, GridMode, NodeField, SymTensorField};
use crate::tension::catalog::bump_profile;
use crate::scalar::Scalar;

/// Default cutoff: the smallest resolution over eight.
pub fn default_max_mode<T: Scalar>(grid: &DomainGrid<T>) -> usize {
    (grid.resolutions().iter().copied().min().unwrap_or(8) / 8).max(1)
}

/// `ncomp` independent band-limited components on a periodic grid.
pub fn band_limited<T: Scalar>(
    grid: &DomainGrid<T>,
    ncomp: usize,
    seed: u64,
    max_mode: usize,
    amplitude: T,
) -> Result<NodeField<T>> {
    if !grid.is_periodic() {
        return Err(Error::Mode("band-limited random fields need a periodic grid".into()));
    }
    let m = grid.dim();
    let side = 2 * max_mode + 1;
    let modes = side.pow(m as u32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // coefficients[mode][comp] = (cos, sin)
    let mut coeffs = Vec::with_capacity(modes * ncomp);
    let mut wave = vec![0i64; m];
    for mode in 0..modes {
        decode(mode, side, max_mode, &mut wave);
        let k2: i64 = wave.iter().map(|k| k * k).sum();
        let damp = 1.0 / (1.0 + k2 as f64);
        for _ in 0..ncomp {
            let a: f64 = rng.gen_range(-1.0..=1.0);
            let b: f64 = rng.gen_range(-1.0..=1.0);
            // The constant mode has no sine part.
            coeffs.push((a * damp, if k2 == 0 { 0.0 } else { b * damp }));
        }
    }
    let nodes = grid.node_count();
    let mut out = NodeField::zeros(nodes, ncomp);
    let mut x = Vec::with_capacity(m);
    let base: Vec<f64> = (0..m)
        .map(|d| 2.0 * std::f64::consts::PI / grid.lengths()[d].as_f64())
        .collect();
    for node in 0..nodes {
        grid.coordinates_into(node, &mut x);
        let o = out.node_mut(node);
        for mode in 0..modes {
            decode(mode, side, max_mode, &mut wave);
            let phase: f64 = (0..m).map(|d| wave[d] as f64 * base[d] * x[d].as_f64()).sum();
            let (s, c) = phase.sin_cos();
            for (comp, v) in o.iter_mut().enumerate() {
                let (a, b) = coeffs[mode * ncomp + comp];
                *v += T::cst(a * c + b * s);
            }
        }
    }
    let peak = out.max_abs();
    if peak > T::zero() {
        out = out.scaled(amplitude / peak);
    }
    Ok(out)
}

fn decode(mut mode: usize, side: usize, max_mode: usize, wave: &mut [i64]) {
    for w in wave.iter_mut().rev() {
        *w = (mode % side) as i64 - max_mode as i64;
        mode /= side;
    }
}

/// `ncomp` smooth components supported in the support ball of a
/// compact-support grid: a seeded sum of plane waves of wavelength at least
/// the support radius, times the `C^∞` bump of that radius.
pub fn compact_section<T: Scalar>(grid: &DomainGrid<T>, ncomp: usize, seed: u64, amplitude: T) -> Result<NodeField<T>> {
    let GridMode::CompactSupport { support_radius } = grid.mode() else {
        return Err(Error::Mode("compact sections need a compact-support grid".into()));
    };
    let m = grid.dim();
    let waves = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = std::f64::consts::PI / support_radius.as_f64();
    // (wave vector, phase, coefficient) per component and wave
    let params: Vec<(Vec<f64>, f64, f64)> = (0..ncomp * waves)
        .map(|_| {
            let k = (0..m).map(|_| base * rng.gen_range(-1.0..=1.0)).collect();
            (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..=1.0))
        })
        .collect();
    let center = grid.center();
    let mut out = grid.sample(ncomp, |x| {
        let z: Vec<f64> = x.iter().zip(&center).map(|(a, c)| (*a - *c).as_f64()).collect();
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let chi = bump_profile(r / support_radius.as_f64());
        (0..ncomp)
            .map(|c| {
                let v: f64 = params[c * waves..(c + 1) * waves]
                    .iter()
                    .map(|(k, ph, a)| a * (k.iter().zip(&z).map(|(k, z)| k * z).sum::<f64>() + ph).sin())
                    .sum();
                T::cst(chi * v)
            })
            .collect()
    });
    let peak = out.max_abs();
    if peak > T::zero() {
        out = out.scaled(amplitude / peak);
    }
    Ok(out)
}

/// Random symmetric 2-tensor field with the same construction per component.
pub fn symmetric_tensor<T: Scalar>(
    grid: &DomainGrid<T>,
    seed: u64,
    max_mode: usize,
    amplitude: T,
) -> Result<SymTensorField<T>> {
    let m = grid.dim();
    let values = band_limited(grid, m * (m + 1) / 2, seed, max_mode, amplitude)?;
    SymTensorField::from_node_field(m, values)
}
