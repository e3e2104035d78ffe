//! Linear synchronizability checked against nalgebra's Schur eigenvalues.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synclab_core::linalg::{spectral_radius, Matrix};
use synclab_core::linear::{decide, decide_flow, decide_map, sample_transform, search_structure};
use synclab_core::structure::ProductStructure;
use synclab_core::systems::LinearKind;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn oracle_block(a: &Matrix, t: &Matrix, drive: &[usize]) -> DMatrix<f64> {
    let (a, t) = (to_na(a), to_na(t));
    let conj = &t * a * t.clone().try_inverse().unwrap();
    let resp: Vec<usize> = (0..conj.nrows()).filter(|i| !drive.contains(i)).collect();
    DMatrix::from_fn(resp.len(), resp.len(), |i, j| conj[(resp[i], resp[j])])
}

fn oracle_radius(b: &DMatrix<f64>) -> f64 {
    b.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn oracle_abscissa(b: &DMatrix<f64>) -> f64 {
    b.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

fn random_matrix(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(d, d, |_, _| rng.gen_range(-2.0..2.0))
}

#[test]
fn map_criterion_matches_oracle_4x4() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let a = random_matrix(4, &mut rng);
        if a.det().abs() < 1e-3 {
            continue;
        }
        let t = sample_transform(4, 5, case + 1);
        let k = rng.gen_range(1..4);
        let drive: Vec<usize> = (0..k).collect();
        let s = ProductStructure::new(t.clone(), vec![0.0; 4], drive.clone()).unwrap();
        let got = decide_map(&a, &s).unwrap().criterion_value;
        let want = oracle_radius(&oracle_block(&a, &t, &drive));
        assert!((got - want).abs() < 1e-6 * want.max(1.0), "case {case}: {got} vs {want}");
    }
}

#[test]
fn spectral_radius_matches_oracle_above_order_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let d = rng.gen_range(4..7);
        let a = random_matrix(d, &mut rng);
        let want = oracle_radius(&to_na(&a));
        let got = spectral_radius(&a);
        assert!((got - want).abs() < 1e-6 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn flow_criterion_matches_spectral_abscissa() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..100 {
        let a = random_matrix(3, &mut rng);
        let s = ProductStructure::new(sample_transform(3, 6, case + 1), vec![0.0; 3], vec![0]).unwrap();
        let got = decide_flow(&a, &s).unwrap().criterion_value;
        let want = oracle_abscissa(&oracle_block(&a, s.transform(), &[0]));
        assert!((got - want).abs() < 1e-4, "case {case}: {got} vs {want}");
    }
}

#[test]
fn criterion_is_similarity_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for case in 0..100 {
        let a = random_matrix(3, &mut rng);
        if a.det().abs() < 1e-3 {
            continue;
        }
        let t = sample_transform(3, 7, case + 1);
        let sim = sample_transform(3, 8, case + 1);
        let sim_inv = sim.inverse().unwrap();
        let a2 = sim.mul(&a).mul(&sim_inv);
        let s1 = ProductStructure::new(t.clone(), vec![0.0; 3], vec![0]).unwrap();
        let s2 = ProductStructure::new(t.mul(&sim_inv), vec![0.0; 3], vec![0]).unwrap();
        for kind in [LinearKind::Map, LinearKind::Flow] {
            let v1 = decide(&a, &s1, kind).unwrap().criterion_value;
            let v2 = decide(&a2, &s2, kind).unwrap().criterion_value;
            assert!((v1 - v2).abs() < 1e-6 * v1.abs().max(1.0), "case {case} {kind:?}: {v1} vs {v2}");
        }
    }
}

#[test]
fn search_finds_structure_for_mixed_spectrum() {
    // spectrum {2, 0.5, 0.3} hidden behind a generic change of basis
    let t = sample_transform(3, 21, 1);
    let a = t.mul(&Matrix::diag(&[2.0, 0.5, 0.3])).mul(&t.inverse().unwrap());
    let out = search_structure(&a, LinearKind::Map, 4096, 1).unwrap().expect("a structure exists");
    assert!(out.report.synchronizable);
    let s = &out.report.structure;
    let want = oracle_radius(&oracle_block(&a, s.transform(), s.drive_indices()));
    assert!((out.report.criterion_value - want).abs() < 1e-9);
    assert!(want < 1.0);
}

#[test]
fn expanding_scalar_has_no_structure() {
    let a = Matrix::diag(&[1.5, 1.5, 1.5]);
    assert!(search_structure(&a, LinearKind::Map, 2000, 0).unwrap().is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    // Planar case: a structure exists unless A = c·I with |c| ≥ 1.
    #[test]
    fn planar_maps_need_only_be_non_scalar(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0) {
        let m = Matrix::from_rows(&[[a, b], [c, d]]).unwrap();
        prop_assume!(m.det().abs() > 1e-2);
        prop_assume!(b.abs() + c.abs() + (a - d).abs() > 1e-2);
        let out = search_structure(&m, LinearKind::Map, 20_000, 3).unwrap();
        prop_assert!(out.is_some(), "no structure found for {:?}", m);
    }

    #[test]
    fn scalar_planar_maps(c in -3.0f64..3.0) {
        prop_assume!(c.abs() > 1e-2 && (c.abs() - 1.0).abs() > 1e-6);
        let m = Matrix::diag(&[c, c]);
        let found = search_structure(&m, LinearKind::Map, 500, 4).unwrap().is_some();
        prop_assert_eq!(found, c.abs() < 1.0);
    }
}
