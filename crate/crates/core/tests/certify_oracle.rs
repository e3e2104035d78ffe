use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synclab_core::certify::{
    certify, count_fixed_points, find_fixed_point, make_perturbation, rotated_structures, shear_structures, slave_section,
    CertificateVerdict, CertifyConfig, Crossing, Direction, PerturbationSpec, PerturbedMap,
};
use synclab_core::linalg::Matrix;
use synclab_core::structure::{ConjugatedPlane, ProductStructure};
use synclab_core::systems::{PlanarPolarMap, PlaneMap};

const WINDOW: (f64, f64) = (0.05, 4.95);

// ψ for the identity structure straight from the polar formula.
fn psi_oracle(t: f64) -> f64 {
    let mut p = 1.0;
    for k in 1..=5 {
        p *= t * t - (k * k) as f64;
    }
    (t + 1e-7 * t * p) * (TAU * t * t).cos()
}

fn sign_scan(g: impl Fn(f64) -> f64, (a, b): (f64, f64), step: f64) -> Vec<(f64, f64)> {
    let n = ((b - a) / step).ceil() as usize;
    let ts: Vec<f64> = (0..=n).map(|i| if i == n { b } else { a + i as f64 * step }).collect();
    ts.windows(2).filter(|w| g(w[0]) * g(w[1]) < 0.0).map(|w| (w[0], w[1])).collect()
}

#[test]
fn identity_section_matches_sign_scan_oracle() {
    let f = PlanarPolarMap::default();
    let s = ProductStructure::identity(2, &[0]).unwrap();
    let psi = slave_section(&f, &s, [0.0, 0.0]).unwrap();
    for i in 0..1000 {
        let t = 0.005 * i as f64;
        assert!((psi.eval(t) - psi_oracle(t)).abs() < 1e-12);
    }
    let brackets = sign_scan(|t| psi_oracle(t) - t, WINDOW, 1e-4);
    let found: Vec<f64> =
        count_fixed_points(|t| psi.eval(t), WINDOW, 1e-4, 1e-12).unwrap().into_iter().filter(|p| p.kind == Crossing::Transversal).map(|p| p.t).collect();
    assert_eq!(found.len(), brackets.len());
    for (t, (lo, hi)) in found.iter().zip(&brackets) {
        assert!(*t >= *lo - 1e-12 && *t <= *hi + 1e-12);
    }
    let near_root2: Vec<&f64> = found.iter().filter(|t| (**t - 2f64.sqrt()).abs() < 2e-3).collect();
    assert_eq!(near_root2.len(), 2);
}

#[test]
fn section_roots_are_roots() {
    let f = PlanarPolarMap::default();
    for s in rotated_structures(6) {
        let psi = slave_section(&f, &s, [0.0, 0.0]).unwrap();
        for p in count_fixed_points(|t| psi.eval(t), WINDOW, 1e-4, 1e-12).unwrap() {
            assert!((psi.eval(p.t) - p.t).abs() < 1e-10, "t = {}", p.t);
        }
    }
}

#[test]
fn every_certificate_has_its_anchor() {
    let f = PlanarPolarMap::default();
    let mut structures = rotated_structures(12);
    structures.extend(shear_structures(4, 8));
    for c in certify(&f, &structures, WINDOW, &CertifyConfig::default()).unwrap() {
        assert_eq!(c.fixed_points.iter().filter(|p| p.anchored).count(), 1);
        assert!(c.certified());
    }
}

#[test]
fn affine_structures_agree_with_conjugated_map() {
    let f = PlanarPolarMap::default();
    let z0 = [0.0, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let t = loop {
            let m = Matrix::from_fn(2, 2, |_, _| rng.gen_range(-1.5..1.5));
            if m.det().abs() > 0.2 {
                break m;
            }
        };
        let offset = vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
        let drive = rng.gen_range(0..2);
        let s = ProductStructure::new(t, offset, vec![drive]).unwrap();
        let g = ConjugatedPlane { map: f, structure: s.clone() };
        let id = ProductStructure::identity(2, &[drive]).unwrap();
        let direct = slave_section(&f, &s, z0).unwrap();
        let q0 = s.coords(&z0);
        let via = slave_section(&g, &id, [q0[0], q0[1]]).unwrap();
        for i in 0..200 {
            let u = -3.0 + 0.03 * i as f64;
            assert!((direct.eval(u) - via.eval(u)).abs() < 1e-9 * (1.0 + u.abs()));
        }
        let a = &certify(&f, std::slice::from_ref(&s), (-3.0, 3.0), &CertifyConfig::default()).unwrap()[0];
        let b = &certify(&g, std::slice::from_ref(&id), (-3.0, 3.0), &CertifyConfig { disk_center: [q0[0], q0[1]], ..Default::default() }).unwrap()[0];
        assert_eq!(a.verdict, b.verdict);
    }
}

#[test]
fn pure_rotation_has_no_certificate() {
    // μ = 0 turns ψ(t) − t = t(cos 2πt² − 1) ≤ 0: only touching points remain
    let f = PlanarPolarMap::new(0.0, TAU).unwrap();
    let c = &certify(&f, &rotated_structures(0)[..1], WINDOW, &CertifyConfig::default()).unwrap()[0];
    assert_eq!(c.verdict, CertificateVerdict::Inconclusive);
}

#[test]
fn fixed_point_search_reports_absence() {
    let shift = synclab_core::systems::FnPlaneMap(|p: [f64; 2]| [p[0] + 1.0, p[1]]);
    assert!(find_fixed_point(&shift, [0.0, 0.0], 0.9, 1e-10).is_err());
}

#[test]
fn perturbation_sup_norm_is_bounded_by_epsilon() {
    let dirs = [Direction::Fourier, Direction::RadialInward, Direction::RadialOutward, Direction::Tangential];
    for k in 0..50u64 {
        let eps = 10f64.powf(-1.0 - 4.0 * (k as f64 / 49.0));
        let eta = make_perturbation(PerturbationSpec::new(eps, k).with_direction(dirs[k as usize % 4])).unwrap();
        let mut sup: f64 = 0.0;
        for i in 0..316 {
            for j in 0..316 {
                let x = -6.5 + 13.0 * i as f64 / 315.0;
                let y = -6.5 + 13.0 * j as f64 / 315.0;
                let e = eta.eval([x, y]);
                sup = sup.max(e[0].hypot(e[1]));
            }
        }
        assert!(sup <= eps * (1.0 + 1e-12), "perturbation {k}: {sup} > {eps}");
        assert!(sup > 0.0);
    }
}

#[test]
fn small_perturbation_keeps_certificates() {
    let f = PlanarPolarMap::default();
    let structures = rotated_structures(4);
    for seed in 0..4 {
        let g = PerturbedMap { base: f, eta: make_perturbation(PerturbationSpec::new(1e-5, seed)).unwrap() };
        assert!(certify(&g, &structures, WINDOW, &CertifyConfig::default()).unwrap().iter().all(|c| c.certified()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbed_inverse_round_trip(x in -5.0f64..5.0, y in -5.0f64..5.0, seed in any::<u64>()) {
        let g = PerturbedMap { base: PlanarPolarMap::default(), eta: make_perturbation(PerturbationSpec::new(1e-4, seed)).unwrap() };
        let p = g.inverse2(g.apply2([x, y])).unwrap();
        prop_assert!((p[0] - x).abs() < 1e-9 && (p[1] - y).abs() < 1e-9);
    }

    #[test]
    fn rotations_by_pi_give_same_verdict(phi in 0.0f64..PI) {
        let f = PlanarPolarMap::default();
        let s1 = ProductStructure::rotation(phi);
        let s2 = ProductStructure::rotation(phi + PI);
        let c = certify(&f, &[s1, s2], WINDOW, &CertifyConfig::default()).unwrap();
        prop_assert_eq!(c[0].verdict, c[1].verdict);
    }
}
