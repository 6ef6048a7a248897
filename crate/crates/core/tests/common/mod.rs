#![allow(dead_code)]

use floquet_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn propagator(op: EllipticOperator, field: CoefficientField, steps: usize) -> Propagator {
    Propagator::new(op, field, PropagatorConfig::with_steps_per_unit(steps)).unwrap()
}

/// `a ≡ a1`, Robin `c`, `a0 ≡ value` on `[0, 1]`.
pub fn autonomous(n: usize, a1: f64, c: f64, value: f64, steps: usize) -> Propagator {
    let mesh = SpatialMesh::interval(1.0, n).unwrap();
    let field = CoefficientField::constant(&mesh, value);
    propagator(EllipticOperator::uniform(mesh, a1, c).unwrap(), field, steps)
}

/// Neumann, `a ≡ d`, `a0 = amplitude · sin(2πt) cos(πx)`.
pub fn periodic(n: usize, d: f64, amplitude: f64, steps: usize) -> Propagator {
    let mesh = SpatialMesh::interval(1.0, n).unwrap();
    let field = CoefficientField::periodic(&mesh, &Profile::cos_kx(amplitude, PI), 1.0).unwrap();
    propagator(EllipticOperator::uniform(mesh, d, 0.0).unwrap(), field, steps)
}

/// Robin, variable diffusion, two-frequency `a0`.
pub fn quasi_periodic(n: usize, steps: usize) -> Propagator {
    let mesh = SpatialMesh::interval(1.0, n).unwrap();
    let field = CoefficientField::from_profiles(
        &mesh,
        FieldKind::QuasiPeriodic,
        &Profile::constant(0.3),
        &[Profile::cos_kx(0.8, PI), Profile::cos_kx(0.5, 2.0 * PI)],
        &[1.0, 2f64.sqrt()],
    )
    .unwrap();
    let op = EllipticOperator::from_profiles(mesh, |p| 0.4 + 0.2 * (3.0 * p[0]).sin(), |_| 0.7).unwrap();
    propagator(op, field, steps)
}

/// `h²` Richardson extrapolation from solutions on meshes `n` and `2n - 1`.
pub fn richardson(coarse: f64, fine: f64) -> f64 {
    fine + (fine - coarse) / 3.0
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) < 0.0, "no sign change");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
