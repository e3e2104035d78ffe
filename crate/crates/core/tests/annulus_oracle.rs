use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use synclab_core::annulus::{
    displacement_report, arc_meets_own_image, image_meets_arc, type_report, AnnulusAdapter, CrossingArc, TypeCheckConfig,
};
use synclab_core::systems::{FnPlaneMap, PlanarPolarMap, PlaneMap};

/// Radius-preserving twist (θ, r) ↦ (θ + 2π(c·r² + a·sin θ), r). It has no
/// lift hint, so lifts are built by path continuation.
fn wobbly_twist(c: f64, a: f64) -> FnPlaneMap<impl Fn([f64; 2]) -> [f64; 2] + Send + Sync> {
    FnPlaneMap(move |p: [f64; 2]| {
        let r = p[0].hypot(p[1]);
        let th = p[1].atan2(p[0]);
        let t = th + TAU * (c * r * r + a * th.sin());
        [r * t.cos(), r * t.sin()]
    })
}

/// Integers k with k + top_lo > lo_gap and k + bottom_hi < −hi_gap, by brute force.
fn scan(bottom_hi: f64, top_lo: f64, gap: f64) -> Option<(i64, i64)> {
    let ks: Vec<i64> = (-400..=400).filter(|&k| k as f64 + top_lo > gap && k as f64 + bottom_hi < -gap).collect();
    ks.first().map(|&f| (f, *ks.last().unwrap()))
}

fn near_integer(x: f64) -> bool {
    (x - x.round()).abs() < 1e-6
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn twist_windows_match_integer_scan(c in 0.1f64..2.5, a in 0.0f64..0.08, r_out in 1.5f64..3.0) {
        let map = wobbly_twist(c, a);
        let adapter = AnnulusAdapter::new(map, 1.0, r_out).unwrap();
        let rep = displacement_report(&adapter.lift(0), 1024).unwrap();
        // anchor: the displacement at (0, 0) is taken in (−1/2, 1/2]
        let d0 = c - c.round();
        let bottom = (d0 - a, d0 + a);
        let top = (d0 + c * (r_out * r_out - 1.0) - a, d0 + c * (r_out * r_out - 1.0) + a);
        prop_assert!((rep.bottom.0 - bottom.0).abs() < 1e-9 && (rep.bottom.1 - bottom.1).abs() < 1e-9);
        prop_assert!((rep.top.0 - top.0).abs() < 1e-9 && (rep.top.1 - top.1).abs() < 1e-9);
        let ends = [top.0, bottom.1, top.0 - 1.0, bottom.1 + 1.0];
        prop_assume!(!ends.iter().any(|&e| near_integer(e)));
        prop_assert_eq!(rep.condition_ii.witnesses, scan(bottom.1, top.0, 0.0));
        prop_assert_eq!(rep.condition_iii.witnesses, scan(bottom.1, top.0, 1.0));
    }

    #[test]
    fn lift_commutes_with_deck_translation(x in -2.0f64..2.0, s in 0.0f64..=1.0, sheet in -5i64..5) {
        let polar = AnnulusAdapter::new(PlanarPolarMap::default(), 3.0, 4.0).unwrap();
        let twist = AnnulusAdapter::new(wobbly_twist(0.7, 0.05), 1.0, 2.0).unwrap();
        let (p0, _) = polar.lift(sheet).apply(x, s).unwrap();
        let (p1, _) = polar.lift(sheet).apply(x + 1.0, s).unwrap();
        let (q0, _) = polar.lift(0).apply(x, s).unwrap();
        prop_assert!((p1 - p0 - 1.0).abs() < 1e-9);
        prop_assert!((p0 - q0 - sheet as f64).abs() < 1e-9);
        let (w0, _) = twist.lift(sheet).apply(x, s).unwrap();
        let (w1, _) = twist.lift(sheet).apply(x + 1.0, s).unwrap();
        prop_assert!((w1 - w0 - 1.0).abs() < 1e-9);
    }
}

#[test]
fn deck_equivariance_on_grid() {
    let a = AnnulusAdapter::new(PlanarPolarMap::default(), 1.0, 2.0).unwrap();
    let lift = a.lift(-2);
    for i in 0..1024 {
        let x = i as f64 / 1024.0 * 3.0 - 1.5;
        let s = (i % 97) as f64 / 96.0;
        let (y0, s0) = lift.apply(x, s).unwrap();
        let (y1, s1) = lift.apply(x + 2.0, s).unwrap();
        assert!((y1 - y0 - 2.0).abs() < 1e-9 && (s1 - s0).abs() < 1e-12);
    }
}

#[test]
fn polar_displacements_are_squared_radii() {
    for (beta, r_in, r_out) in [(TAU, 1.0, 2.0), (TAU, 3.0, 4.0), (3.0 * PI, 1.0, 2.0)] {
        let f = PlanarPolarMap::new(1e-7, beta).unwrap();
        let a = AnnulusAdapter::new(f, r_in, r_out).unwrap();
        let rep = displacement_report(&a.lift(0), 1024).unwrap();
        let turns = |r: f64| beta * r * r / TAU;
        assert!((rep.bottom.0 - turns(r_in)).abs() < 1e-9 && (rep.bottom.1 - turns(r_in)).abs() < 1e-9);
        assert!((rep.top.0 - turns(r_out)).abs() < 1e-9 && (rep.top.1 - turns(r_out)).abs() < 1e-9);
    }
}

#[test]
fn mu_scaled_type_reports() {
    let cfg = TypeCheckConfig::scaled(1e-7, 1e-3);
    let a1 = AnnulusAdapter::new(PlanarPolarMap::default(), 1.0, 2.0).unwrap();
    let r1 = type_report(&a1, 1.5, &cfg).unwrap();
    assert!(r1.condition_i.pass && r1.type_p && !r1.type_q);
    assert_eq!(r1.condition_ii.witness, Some(-2));
    assert!(r1.condition_iii.witnesses.is_none() && r1.condition_iii.borderline);
}

#[test]
fn random_arcs_meet_their_images() {
    let f = PlanarPolarMap::default();
    for (r_in, r_out) in [(1.0, 2.0), (3.0, 4.0)] {
        let a = AnnulusAdapter::new(f, r_in, r_out).unwrap();
        for seed in 0..25 {
            let arc = CrossingArc::random_monotone(seed, 6, 0.3);
            let w = arc_meets_own_image(&a, &arc, 1e-8).unwrap().expect("witness");
            assert!(w.t < w.t_prime && w.residual < 1e-8);
        }
    }
}

#[test]
fn image_meets_translated_arc() {
    let a = AnnulusAdapter::new(PlanarPolarMap::default(), 3.0, 4.0).unwrap();
    let g = CrossingArc::radial(0.1);
    let h = CrossingArc::radial(0.6);
    assert!(image_meets_arc(&a, &g, &h).unwrap());
    assert!(image_meets_arc(&a, &g, &g.translate(0.0)).is_err());
}

#[test]
fn identity_map_has_no_twist() {
    let id = FnPlaneMap(|p: [f64; 2]| p);
    let a = AnnulusAdapter::new(id, 1.0, 2.0).unwrap();
    let rep = displacement_report(&a.lift(0), 256).unwrap();
    assert!(!rep.condition_ii.pass && !rep.condition_iii.pass);
    assert!(id_check(&a));
}

fn id_check<M: PlaneMap>(a: &AnnulusAdapter<M>) -> bool {
    a.boundary_deviation(64) < 1e-12
}
