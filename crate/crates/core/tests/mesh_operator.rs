mod common;

use common::*;
use floquet_core::spectrum::spectrum;
use floquet_core::*;
use proptest::prelude::*;
use std::f64::consts::PI;

fn smallest(n: usize, a: f64, c: f64) -> f64 {
    let mesh = SpatialMesh::interval(1.0, n).unwrap();
    spectrum(&EllipticOperator::uniform(mesh, a, c).unwrap(), 1).unwrap().eigenvalues[0]
}

#[test]
fn robin_ground_state_matches_transcendental_root() {
    // u = cos(kx) + (c/k) sin(kx) satisfies the left condition; the right
    // one gives (k² - c²) sin k = 2ck cos k
    let c = 1.0;
    let k = bisect(|k| (k * k - c * c) * k.sin() - 2.0 * c * k * k.cos(), 0.1, PI - 0.1);
    let exact = k * k;
    let (l101, l201, l401) = (smallest(101, 1.0, c), smallest(201, 1.0, c), smallest(401, 1.0, c));
    let extrapolated = richardson(l201, l401);
    assert!((extrapolated - exact).abs() < 1e-6 * exact, "{extrapolated} vs {exact}");
    let order = ((l101 - exact) / (l201 - exact)).log2();
    assert!((1.8..=2.2).contains(&order), "observed order {order}");
}

#[test]
fn neumann_eigenvalues_converge_at_second_order() {
    let eig = |n| {
        let mesh = SpatialMesh::interval(1.0, n).unwrap();
        spectrum(&EllipticOperator::uniform(mesh, 1.0, 0.0).unwrap(), 3).unwrap().eigenvalues
    };
    let (e101, e201, e401) = (eig(101), eig(201), eig(401));
    assert!(e401[0].abs() < 1e-10);
    for k in 1..3 {
        let exact = (k as f64 * PI).powi(2);
        let extrapolated = richardson(e201[k], e401[k]);
        assert!((extrapolated - exact).abs() < 0.01 * exact);
        // the order study is done against the extrapolated limit
        let limit = extrapolated;
        let order = ((e101[k] - limit) / (e201[k] - limit)).log2();
        assert!((1.8..=2.2).contains(&order), "mode {k}: order {order}");
    }
}

#[test]
fn robin_eigenvector_is_positive_and_residual_small() {
    let mesh = SpatialMesh::interval(1.0, 101).unwrap();
    let op = EllipticOperator::from_profiles(mesh, |p| 1.0 + 0.5 * p[0], |p| 2.0 - p[0]).unwrap();
    let s = spectrum(&op, 4).unwrap();
    assert!(s.eigenvectors[0].iter().all(|&v| v > 0.0));
    assert!(s.residuals.iter().all(|&r| r < 1e-8 * s.eigenvalues[3]));
    let mass: f64 = op.mesh().l1_norm(&s.eigenvectors[1]);
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn rectangle_recovers_separable_eigenvalues() {
    let mesh = SpatialMesh::rectangle(2.0, 1.0, 41, 21).unwrap();
    let op = EllipticOperator::uniform(mesh, 1.0, 0.0).unwrap();
    assert!(op.weighted_asymmetry() < 1e-12);
    let s = spectrum(&op, 3).unwrap();
    // Neumann modes cos(πx/2), cos(πx), cos(πy) on [0,2]×[0,1]
    assert!((s.eigenvalues[1] - (PI / 2.0).powi(2)).abs() < 0.01 * (PI / 2.0).powi(2));
    assert!((s.eigenvalues[2] - PI * PI).abs() < 0.01 * PI * PI);
}

#[test]
fn invalid_meshes_and_coefficients_are_rejected() {
    assert!(SpatialMesh::interval(1.0, 2).is_err());
    assert!(SpatialMesh::interval(0.0, 5).is_err());
    assert!(SpatialMesh::new(&[1.0, 1.0, 1.0], &[3, 3, 3]).is_err());
    let mesh = SpatialMesh::interval(1.0, 5).unwrap();
    assert!(EllipticOperator::uniform(mesh.clone(), 0.0, 0.0).is_err());
    assert!(EllipticOperator::uniform(mesh, 1.0, -0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_operators_keep_their_structure(
        n in 5usize..60,
        a0 in 0.05f64..5.0, a1 in 0.0f64..1.0, k in 0.0f64..10.0,
        c0 in 0.0f64..10.0, c1 in 0.0f64..10.0,
        dt in 1e-6f64..10.0,
    ) {
        let mesh = SpatialMesh::interval(1.0, n).unwrap();
        let op = EllipticOperator::from_profiles(
            mesh,
            |p| a0 + a1 * (k * p[0]).sin().abs(),
            |p| if p[0] < 0.5 { c0 } else { c1 },
        ).unwrap();
        prop_assert!(op.has_m_matrix_signs());
        prop_assert!(op.weighted_asymmetry() < 1e-12);
        // I - dt L is an M-matrix: its inverse is entrywise nonnegative
        let m = op.matrix().shifted(1.0, -dt).to_dense();
        let inv = m.try_inverse().unwrap();
        prop_assert!(inv.iter().all(|&x| x >= -1e-14 * inv.amax()));
        let s = spectrum(&op, 1).unwrap();
        prop_assert!(s.eigenvalues[0] >= -1e-10);
        prop_assert!(s.half_plane_bound >= 1.0 - 1e-10);
    }
}
