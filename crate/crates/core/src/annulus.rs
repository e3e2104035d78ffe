//! Planar maps seen as maps of the annulus T×[0,1], their lifts to the strip
//! ℝ×[0,1], and the boundary-twist conditions that certify types (P) and (Q).
//!
//! Angles are measured in turns (T = ℝ/ℤ) and the radial coordinate is
//! normalized affinely, s = (r − r_in)/(r_out − r_in).

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::PlaneMap;

/// Strict inequalities in the twist conditions must hold by at least this much.
pub const STRICT_MARGIN: f64 = 1e-9;
/// Largest angular increment (turns) accepted between neighbouring samples
/// during unwrapping.
pub const MAX_INCREMENT: f64 = 0.25;

const INVARIANCE_TOL: f64 = 1e-10;
const CURVE_SAMPLES: usize = 256;

fn wrap_half(t: f64) -> f64 {
    t - t.round()
}

#[derive(Debug, Clone)]
pub struct AnnulusAdapter<M> {
    pub map: M,
    pub r_in: f64,
    pub r_out: f64,
}

impl<M: PlaneMap> AnnulusAdapter<M> {
    pub fn new(map: M, r_in: f64, r_out: f64) -> Result<Self> {
        if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
            return Err(Error::Invalid(format!("need 0 < r_in < r_out, got [{r_in}, {r_out}]")));
        }
        Ok(AnnulusAdapter { map, r_in, r_out })
    }

    pub fn width(&self) -> f64 {
        self.r_out - self.r_in
    }

    pub fn to_plane(&self, x: f64, s: f64) -> [f64; 2] {
        let r = self.r_in + s * self.width();
        let (sn, c) = (TAU * x).sin_cos();
        [r * c, r * sn]
    }

    /// (x mod 1 in [0, 1), s) of a plane point.
    pub fn to_annulus(&self, p: [f64; 2]) -> (f64, f64) {
        let x = (p[1].atan2(p[0]) / TAU).rem_euclid(1.0);
        let s = (p[0].hypot(p[1]) - self.r_in) / self.width();
        (x, s)
    }

    /// Image in annulus coordinates, angle taken in [0, 1).
    pub fn apply(&self, x: f64, s: f64) -> (f64, f64) {
        self.to_annulus(self.map.apply2(self.to_plane(x, s)))
    }

    /// Largest radial deviation of the image of either boundary circle from
    /// that circle, over `samples` equally spaced points.
    pub fn boundary_deviation(&self, samples: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..samples {
            let x = j as f64 / samples as f64;
            for s in [0.0, 1.0] {
                let (_, s1) = self.apply(x, s);
                worst = worst.max(((s1 - s) * self.width()).abs());
            }
        }
        worst
    }

    pub fn check_invariant(&self) -> Result<()> {
        let dev = self.boundary_deviation(CURVE_SAMPLES);
        if dev > INVARIANCE_TOL {
            return Err(Error::Precondition(format!(
                "annulus [{}, {}] is not invariant: boundary moves by {dev:e}",
                self.r_in, self.r_out
            )));
        }
        Ok(())
    }

    pub fn lift(&self, sheet: i64) -> Lift<'_, M> {
        Lift { adapter: self, sheet, resolution: 1024 }
    }
}

/// A lift of the adapted map to ℝ×[0,1] on sheet `sheet`.
///
/// Maps that expose a lift hint are lifted pointwise by choosing the preimage
/// angle nearest to x + hint + sheet. Otherwise the lift is continued from the
/// anchor (0, 0), whose displacement is taken in (−1/2, 1/2] + sheet, along
/// the path (0,0) → (0,s) → (x,s) with `resolution` steps per unit length.
#[derive(Debug, Clone, Copy)]
pub struct Lift<'a, M> {
    pub adapter: &'a AnnulusAdapter<M>,
    pub sheet: i64,
    pub resolution: usize,
}

impl<M: PlaneMap> Lift<'_, M> {
    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution.max(1);
        self
    }

    fn hint(&self, x: f64, s: f64) -> Option<f64> {
        self.adapter.map.lift_hint(self.adapter.to_plane(x, s))
    }

    /// Lifted image (X, s′) of the cover point (x, s).
    pub fn apply(&self, x: f64, s: f64) -> Result<(f64, f64)> {
        let (raw, s1) = self.adapter.apply(x, s);
        if let Some(h) = self.hint(x, s) {
            let target = x + h + self.sheet as f64;
            return Ok((raw + (target - raw).round(), s1));
        }
        let (raw0, _) = self.adapter.apply(0.0, 0.0);
        let mut lifted = raw0 + (self.sheet as f64 - raw0).round();
        let mut prev = raw0;
        let walk = |px: f64, ps: f64, lifted: &mut f64, prev: &mut f64| -> Result<()> {
            let (r, _) = self.adapter.apply(px, ps);
            let inc = wrap_half(r - *prev);
            if inc.abs() > MAX_INCREMENT {
                return Err(Error::Resolution { index: 0, increment: inc });
            }
            *lifted += inc;
            *prev = r;
            Ok(())
        };
        let n_s = ((s.abs() * self.resolution as f64).ceil() as usize).max(1);
        for j in 1..=n_s {
            walk(0.0, s * j as f64 / n_s as f64, &mut lifted, &mut prev)?;
        }
        let n_x = ((x.abs() * self.resolution as f64).ceil() as usize).max(1);
        for j in 1..=n_x {
            walk(x * j as f64 / n_x as f64, s, &mut lifted, &mut prev)?;
        }
        Ok((lifted, s1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Bottom,
    Top,
}

impl Boundary {
    fn s(self) -> f64 {
        match self {
            Boundary::Bottom => 0.0,
            Boundary::Top => 1.0,
        }
    }
}

/// Extremes of π₁∘f(x, s_b) − x along a boundary, in turns. The boundary is
/// unwrapped from the anchor at x = 0 by nearest-integer continuation.
pub fn boundary_displacement<M: PlaneMap>(lift: &Lift<'_, M>, boundary: Boundary, grid_n: usize) -> Result<(f64, f64)> {
    if grid_n < 64 {
        return Err(Error::Precondition(format!("grid_n must be at least 64, got {grid_n}")));
    }
    let s = boundary.s();
    let (mut lifted, _) = lift.apply(0.0, s)?;
    let (mut prev, _) = lift.adapter.apply(0.0, s);
    let (mut lo, mut hi) = (lifted, lifted);
    for j in 1..=grid_n {
        let x = j as f64 / grid_n as f64;
        let (raw, _) = lift.adapter.apply(x, s);
        let inc = wrap_half(raw - prev);
        if inc.abs() > MAX_INCREMENT {
            return Err(Error::Resolution { index: j, increment: inc });
        }
        lifted += inc;
        prev = raw;
        let d = lifted - x;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    Ok((lo, hi))
}

/// Integers strictly inside (lo, hi) by at least the margin, and whether an
/// integer sits within the margin of an endpoint.
fn integer_window(lo: f64, hi: f64) -> (Option<(i64, i64)>, bool) {
    let first = (lo + STRICT_MARGIN).floor() as i64 + 1;
    let last = (hi - STRICT_MARGIN).ceil() as i64 - 1;
    let near = |e: f64| (e - e.round()).abs() <= STRICT_MARGIN;
    let borderline = near(lo) || near(hi);
    ((first <= last).then_some((first, last)), borderline)
}

fn smallest_magnitude((first, last): (i64, i64)) -> i64 {
    if first <= 0 && last >= 0 {
        0
    } else if first > 0 {
        first
    } else {
        last
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub pass: bool,
    /// Open interval of admissible sheet shifts.
    pub window: (f64, f64),
    /// Inclusive range of integer witnesses, if any.
    pub witnesses: Option<(i64, i64)>,
    /// Smallest-magnitude witness, as an absolute sheet.
    pub witness: Option<i64>,
    /// An integer lies within the strictness margin of a window endpoint.
    pub borderline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementReport {
    /// Sheet of the lift the displacements were measured on.
    pub sheet: i64,
    pub bottom: (f64, f64),
    pub top: (f64, f64),
    pub condition_ii: ConditionResult,
    pub condition_iii: ConditionResult,
}

fn condition(sheet: i64, lo: f64, hi: f64) -> ConditionResult {
    let window = (lo + sheet as f64, hi + sheet as f64);
    let (w, borderline) = integer_window(window.0, window.1);
    ConditionResult { pass: w.is_some(), window, witnesses: w, witness: w.map(smallest_magnitude), borderline }
}

pub fn displacement_report<M: PlaneMap>(lift: &Lift<'_, M>, grid_n: usize) -> Result<DisplacementReport> {
    let bottom = boundary_displacement(lift, Boundary::Bottom, grid_n)?;
    let top = boundary_displacement(lift, Boundary::Top, grid_n)?;
    Ok(DisplacementReport {
        sheet: lift.sheet,
        bottom,
        top,
        condition_ii: condition(lift.sheet, -top.0, -bottom.1),
        condition_iii: condition(lift.sheet, 1.0 - top.0, -1.0 - bottom.1),
    })
}

/// Sheet k with π₁f(x,0) < x and π₁f(x,1) > x, i.e. k in (−min_top, −max_bottom).
pub fn condition_ii_check(report: &DisplacementReport) -> Option<i64> {
    report.condition_ii.witness
}

/// Sheet k with π₁f(x,0) < x − 1 and π₁f(x,1) > x + 1, i.e. k in
/// (1 − min_top, −1 − max_bottom).
pub fn condition_iii_check(report: &DisplacementReport) -> Option<i64> {
    report.condition_iii.witness
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionIReport {
    pub pass: bool,
    pub curve_radius: f64,
    /// min over the sampled curve of |F(p)| − c; positive means F(C) lies above C.
    pub min_radial_gap: f64,
    pub forward_iterations: usize,
    /// Largest distance from the forward iterate of C to the top boundary.
    pub forward_distance: f64,
    pub backward_iterations: usize,
    pub backward_distance: f64,
    pub reason: Option<String>,
}

fn circle(c: f64) -> Vec<[f64; 2]> {
    (0..CURVE_SAMPLES)
        .map(|j| {
            let (s, co) = (TAU * j as f64 / CURVE_SAMPLES as f64).sin_cos();
            [c * co, c * s]
        })
        .collect()
}

fn distance_to_circle(points: &[[f64; 2]], r: f64) -> f64 {
    points.iter().map(|p| (p[0].hypot(p[1]) - r).abs()).fold(0.0, f64::max)
}

/// Iterates the sampled curve until it is within `tol` of the circle of radius
/// `target`, or `n_iter` steps have been taken.
fn accumulate(points: &mut [[f64; 2]], step: impl Fn([f64; 2]) -> Option<[f64; 2]>, target: f64, n_iter: usize, tol: f64) -> (usize, f64) {
    let mut dist = distance_to_circle(points, target);
    let mut n = 0;
    while n < n_iter && dist > tol {
        for p in points.iter_mut() {
            match step(*p) {
                Some(q) => *p = q,
                None => return (n, f64::INFINITY),
            }
        }
        n += 1;
        dist = distance_to_circle(points, target);
    }
    (n, dist)
}

/// Condition (i) for the circle C of radius `c`: F(C) lies strictly above C,
/// and within `n_iter` forward (backward) iterates the curve comes within `tol`
/// of the top (bottom) boundary. Iteration stops as soon as the tolerance is met.
pub fn condition_i_check<M: PlaneMap>(adapter: &AnnulusAdapter<M>, c: f64, n_iter: usize, tol: f64) -> Result<ConditionIReport> {
    if !(c > adapter.r_in && c < adapter.r_out) {
        return Err(Error::Precondition(format!("curve radius {c} must lie inside the annulus")));
    }
    adapter.check_invariant()?;
    let curve = circle(c);
    let min_radial_gap =
        curve.iter().map(|&p| {
            let q = adapter.map.apply2(p);
            q[0].hypot(q[1]) - c
        }).fold(f64::INFINITY, f64::min);
    let mut report = ConditionIReport {
        pass: false,
        curve_radius: c,
        min_radial_gap,
        forward_iterations: 0,
        forward_distance: f64::NAN,
        backward_iterations: 0,
        backward_distance: f64::NAN,
        reason: None,
    };
    if !(min_radial_gap > STRICT_MARGIN) {
        report.reason = Some("F(C) is not strictly above C".into());
        return Ok(report);
    }
    let mut fwd = curve.clone();
    let (n, d) = accumulate(&mut fwd, |p| Some(adapter.map.apply2(p)), adapter.r_out, n_iter, tol);
    report.forward_iterations = n;
    report.forward_distance = d;
    let mut bwd = curve;
    let (n, d) = accumulate(&mut bwd, |p| adapter.map.inverse2(p), adapter.r_in, n_iter, tol);
    report.backward_iterations = n;
    report.backward_distance = d;
    if report.forward_distance > tol {
        report.reason = Some("forward iterates do not reach the top boundary".into());
    } else if report.backward_distance.is_infinite() {
        report.reason = Some("map provides no inverse".into());
    } else if report.backward_distance > tol {
        report.reason = Some("backward iterates do not reach the bottom boundary".into());
    } else {
        report.pass = true;
    }
    Ok(report)
}

/// Sampled curves C, F(C), F²(C), … for plotting.
pub fn curve_iterates<M: PlaneMap>(adapter: &AnnulusAdapter<M>, c: f64, count: usize, stride: usize) -> Vec<Vec<[f64; 2]>> {
    let mut cur = circle(c);
    let mut out = vec![cur.clone()];
    for _ in 0..count {
        for _ in 0..stride.max(1) {
            cur.iter_mut().for_each(|p| *p = adapter.map.apply2(*p));
        }
        out.push(cur.clone());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeCheckConfig {
    /// Cap on iterations for the accumulation test.
    pub n_iter: usize,
    pub tol: f64,
    pub grid_n: usize,
}

impl TypeCheckConfig {
    /// Horizon ~ log(1/tol)/μ: radial contraction near the invariant circles
    /// of the polar family is O(μ) per step.
    pub fn scaled(mu: f64, tol: f64) -> Self {
        let n = ((1.0 / tol).ln() / mu.abs().max(1e-12)).ceil().min(1e8) as usize;
        TypeCheckConfig { n_iter: n.max(1000), tol, grid_n: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub r_in: f64,
    pub r_out: f64,
    pub condition_i: ConditionIReport,
    pub displacement: DisplacementReport,
    pub condition_ii: ConditionResult,
    pub condition_iii: ConditionResult,
    pub type_p: bool,
    pub type_q: bool,
}

pub fn type_report<M: PlaneMap>(adapter: &AnnulusAdapter<M>, c: f64, cfg: &TypeCheckConfig) -> Result<TypeReport> {
    let condition_i = condition_i_check(adapter, c, cfg.n_iter, cfg.tol)?;
    let displacement = displacement_report(&adapter.lift(0), cfg.grid_n)?;
    let type_p = condition_i.pass && displacement.condition_ii.pass;
    let type_q = type_p && displacement.condition_iii.pass;
    Ok(TypeReport {
        r_in: adapter.r_in,
        r_out: adapter.r_out,
        condition_ii: displacement.condition_ii,
        condition_iii: displacement.condition_iii,
        condition_i,
        displacement,
        type_p,
        type_q,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRReport {
    pub annuli: Vec<TypeReport>,
    pub overall: bool,
}

/// Condition (R): two disjoint nested annuli, each of type (Q) with its inner
/// circle as the bottom boundary. The test curve is the middle circle.
pub fn condition_r_report<M: PlaneMap + Clone>(map: &M, annuli: [(f64, f64); 2], cfg: &TypeCheckConfig) -> Result<ConditionRReport> {
    let mut sorted = annuli;
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if !(sorted[0].1 < sorted[1].0) {
        return Err(Error::Invalid(format!("annuli {:?} and {:?} overlap", sorted[0], sorted[1])));
    }
    let reports = sorted
        .iter()
        .map(|&(a, b)| {
            let adapter = AnnulusAdapter::new(map.clone(), a, b)?;
            type_report(&adapter, 0.5 * (a + b), cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let overall = reports.iter().all(|r| r.type_q);
    Ok(ConditionRReport { annuli: reports, overall })
}

/// A polyline in cover coordinates (X, s) parametrized by normalized arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingArc {
    pub points: Vec<[f64; 2]>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (d1, d2) = (cross(c, d, a), cross(c, d, b));
    let (d3, d4) = (cross(a, b, c), cross(a, b, d));
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != d2 && d3 != d4
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    cross(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_touch(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    segments_cross(a, b, c, d) || on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

impl CrossingArc {
    /// Vertical segment at cover abscissa `x`.
    pub fn radial(x: f64) -> Self {
        CrossingArc { points: vec![[x, 0.0], [x, 1.0]] }
    }

    /// Seeded piecewise-linear arc, strictly increasing in s, with horizontal
    /// steps uniform in ±`spread`.
    pub fn random_monotone(seed: u64, vertices: usize, spread: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = vertices.max(2);
        let mut cuts: Vec<f64> = (0..n - 2).map(|_| rng.gen_range(0.0..1.0)).collect();
        cuts.sort_by(f64::total_cmp);
        let mut x = rng.gen_range(0.0..1.0);
        let mut points = vec![[x, 0.0]];
        for s in cuts.into_iter().chain(std::iter::once(1.0)) {
            x += rng.gen_range(-spread..=spread);
            points.push([x, s]);
        }
        CrossingArc { points }
    }

    pub fn translate(&self, dx: f64) -> Self {
        CrossingArc { points: self.points.iter().map(|p| [p[0] + dx, p[1]]).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.points;
        if p.len() < 2 {
            return Err(Error::Invalid("arc needs at least two points".into()));
        }
        if p[0][1] != 0.0 || p[p.len() - 1][1] != 1.0 {
            return Err(Error::Invalid("arc must run from s = 0 to s = 1".into()));
        }
        if p[1..p.len() - 1].iter().any(|q| !(q[1] > 0.0 && q[1] < 1.0)) {
            return Err(Error::Invalid("arc interior must lie strictly inside the annulus".into()));
        }
        if p.iter().any(|q| !q[0].is_finite()) {
            return Err(Error::Invalid("arc has non-finite points".into()));
        }
        for i in 0..p.len() - 1 {
            if p[i] == p[i + 1] {
                return Err(Error::Invalid("arc has repeated vertices".into()));
            }
            for j in i + 2..p.len() - 1 {
                if segments_touch(p[i], p[i + 1], p[j], p[j + 1]) {
                    return Err(Error::Invalid("arc is not simple".into()));
                }
            }
        }
        Ok(())
    }

    fn cumulative(&self) -> Vec<f64> {
        let mut acc = vec![0.0];
        for w in self.points.windows(2) {
            let l = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            acc.push(acc.last().unwrap() + l);
        }
        let total = *acc.last().unwrap();
        acc.iter().map(|a| a / total).collect()
    }

    pub fn at(&self, t: f64) -> [f64; 2] {
        let cum = self.cumulative();
        self.at_with(&cum, t)
    }

    fn at_with(&self, cum: &[f64], t: f64) -> [f64; 2] {
        let t = t.clamp(0.0, 1.0);
        let i = cum.partition_point(|&c| c <= t).clamp(1, cum.len() - 1) - 1;
        let span = cum[i + 1] - cum[i];
        let w = if span > 0.0 { (t - cum[i]) / span } else { 0.0 };
        let (a, b) = (self.points[i], self.points[i + 1]);
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcWitness {
    pub t: f64,
    pub t_prime: f64,
    /// |f(γ(t)) − γ(t′)| in cover coordinates.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Hit {
    t: f64,
    t_prime: f64,
    residual: f64,
}

/// Crossings of the lifted image of `gamma` with `target`, refined by bisection
/// on the side of the crossed target segment.
fn image_crossings<M: PlaneMap>(lift: &Lift<'_, M>, gamma: &CrossingArc, target: &CrossingArc, samples: usize) -> Result<Vec<Hit>> {
    let cum = gamma.cumulative();
    let tcum = target.cumulative();
    let image = |t: f64| -> Result<[f64; 2]> {
        let p = gamma.at_with(&cum, t);
        let (x, s) = lift.apply(p[0], p[1])?;
        Ok([x, s])
    };
    let ts: Vec<f64> = (0..=samples).map(|i| i as f64 / samples as f64).collect();
    let img = ts.iter().map(|&t| image(t)).collect::<Result<Vec<_>>>()?;
    let mut hits = Vec::new();
    for i in 0..samples {
        let (p, q) = (img[i], img[i + 1]);
        for j in 0..target.points.len() - 1 {
            let (a, b) = (target.points[j], target.points[j + 1]);
            let (sp, sq) = (cross(a, b, p), cross(a, b, q));
            if sp == 0.0 && sq == 0.0 {
                continue;
            }
            if (sp > 0.0) == (sq > 0.0) && sp != 0.0 && sq != 0.0 {
                continue;
            }
            let (sa, sb) = (cross(p, q, a), cross(p, q, b));
            if (sa > 0.0) == (sb > 0.0) && sa != 0.0 && sb != 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (ts[i], ts[i + 1]);
            let lo_side = sp > 0.0;
            let mut pt = p;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let m = image(mid)?;
                let side = cross(a, b, m);
                pt = m;
                if side == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (side > 0.0) == lo_side {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            if lo != hi {
                pt = image(t)?;
            }
            let ab = [b[0] - a[0], b[1] - a[1]];
            let len2 = ab[0] * ab[0] + ab[1] * ab[1];
            let w = (((pt[0] - a[0]) * ab[0] + (pt[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
            let foot = [a[0] + w * ab[0], a[1] + w * ab[1]];
            let residual = (pt[0] - foot[0]).hypot(pt[1] - foot[1]);
            let t_prime = tcum[j] + w * (tcum[j + 1] - tcum[j]);
            hits.push(Hit { t, t_prime, residual });
        }
    }
    Ok(hits)
}

/// Looks for f(γ(t)) = γ(t′) with t < t′, f the lift on the sheet of the
/// condition-(ii) witness. Returns the crossing with the smallest t.
pub fn arc_meets_own_image<M: PlaneMap>(adapter: &AnnulusAdapter<M>, arc: &CrossingArc, tol: f64) -> Result<Option<ArcWitness>> {
    arc_meets_own_image_with(adapter, arc, tol, 4096)
}

pub fn arc_meets_own_image_with<M: PlaneMap>(
    adapter: &AnnulusAdapter<M>,
    arc: &CrossingArc,
    tol: f64,
    samples: usize,
) -> Result<Option<ArcWitness>> {
    arc.validate()?;
    let report = displacement_report(&adapter.lift(0), 1024)?;
    let Some(k) = report.condition_ii.witness else {
        return Err(Error::Precondition("no lift satisfies the boundary twist condition".into()));
    };
    let lift = adapter.lift(k);
    let hits = image_crossings(&lift, arc, arc, samples)?;
    Ok(hits
        .into_iter()
        .filter(|h| h.t_prime > h.t + STRICT_MARGIN && h.residual <= tol)
        .min_by(|a, b| a.t.total_cmp(&b.t))
        .map(|h| ArcWitness { t: h.t, t_prime: h.t_prime, residual: h.residual }))
}

/// Whether F(γ) meets γ′ in the annulus, i.e. whether the lifted image of γ
/// meets some integer translate of γ′. The arcs must be disjoint.
pub fn image_meets_arc<M: PlaneMap>(adapter: &AnnulusAdapter<M>, gamma: &CrossingArc, gamma_prime: &CrossingArc) -> Result<bool> {
    gamma.validate()?;
    gamma_prime.validate()?;
    let span = |a: &CrossingArc| {
        a.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[0]), hi.max(p[0])))
    };
    let (g_lo, g_hi) = span(gamma);
    let (h_lo, h_hi) = span(gamma_prime);
    let lift = adapter.lift(0);
    for j in ((g_lo - h_hi).floor() as i64 - 1)..=((g_hi - h_lo).ceil() as i64 + 1) {
        let shifted = gamma_prime.translate(j as f64);
        for a in gamma.points.windows(2) {
            for b in shifted.points.windows(2) {
                if segments_touch(a[0], a[1], b[0], b[1]) {
                    return Err(Error::Precondition("arcs must be disjoint in the annulus".into()));
                }
            }
        }
    }
    let samples = 4096;
    let cum = gamma.cumulative();
    let mut xs = Vec::with_capacity(samples + 1);
    for i in 0..=samples {
        let p = gamma.at_with(&cum, i as f64 / samples as f64);
        xs.push(lift.apply(p[0], p[1])?.0);
    }
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for j in ((lo - h_hi).floor() as i64 - 1)..=((hi - h_lo).ceil() as i64 + 1) {
        let hits = image_crossings(&lift, gamma, &gamma_prime.translate(j as f64), samples)?;
        if hits.iter().any(|h| h.residual < 1e-8) {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{FnPlaneMap, PlanarPolarMap};
    use std::f64::consts::PI;

    fn polar(mu: f64, c: f64) -> PlanarPolarMap {
        PlanarPolarMap::new(mu, c).unwrap()
    }

    #[test]
    fn adapter_roundtrip() {
        let a = AnnulusAdapter::new(polar(1e-7, TAU), 1.0, 2.0).unwrap();
        let (x, s) = a.to_annulus(a.to_plane(0.3, 0.25));
        assert!((x - 0.3).abs() < 1e-15 && (s - 0.25).abs() < 1e-15);
        assert!(AnnulusAdapter::new(polar(1e-7, TAU), 2.0, 1.0).is_err());
        assert!(a.boundary_deviation(256) < 1e-12);
    }

    #[test]
    fn polar_boundary_rotation() {
        let a = AnnulusAdapter::new(polar(1e-7, TAU), 1.0, 2.0).unwrap();
        let (lo, hi) = boundary_displacement(&a.lift(0), Boundary::Bottom, 256).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        let (lo, hi) = boundary_displacement(&a.lift(0), Boundary::Top, 256).unwrap();
        assert!((lo - 4.0).abs() < 1e-12 && (hi - 4.0).abs() < 1e-12);
        let (lo, _) = boundary_displacement(&a.lift(-3), Boundary::Top, 256).unwrap();
        assert!((lo - 1.0).abs() < 1e-12);
        assert!(boundary_displacement(&a.lift(0), Boundary::Top, 63).is_err());
    }

    #[test]
    fn identity_has_no_twist() {
        let id = FnPlaneMap(|p: [f64; 2]| p);
        let a = AnnulusAdapter::new(id, 1.0, 2.0).unwrap();
        let r = displacement_report(&a.lift(0), 128).unwrap();
        for v in [r.bottom.0, r.bottom.1, r.top.0, r.top.1] {
            assert!(v.abs() < 1e-15);
        }
        assert!(condition_ii_check(&r).is_none());
        assert!(condition_iii_check(&r).is_none());
    }

    #[test]
    fn coarse_grid_is_a_resolution_error() {
        let a = AnnulusAdapter::new(polar(1e-7, TAU), 1.0, 2.0).unwrap();
        // rotation x ↦ 3x on the boundary: increments 3/64 are fine, but a
        // map winding 40 times is not
        let wind = FnPlaneMap(|p: [f64; 2]| {
            let th = p[1].atan2(p[0]) * 40.0;
            let r = p[0].hypot(p[1]);
            [r * th.cos(), r * th.sin()]
        });
        assert!(boundary_displacement(&a.lift(0), Boundary::Top, 64).is_ok());
        let b = AnnulusAdapter::new(wind, 1.0, 2.0).unwrap();
        assert!(matches!(boundary_displacement(&b.lift(0), Boundary::Top, 64), Err(Error::Resolution { .. })));
    }

    #[test]
    fn window_examples() {
        let a = AnnulusAdapter::new(polar(1e-7, TAU), 1.0, 2.0).unwrap();
        let r = displacement_report(&a.lift(0), 1024).unwrap();
        assert_eq!(r.condition_ii.witness, Some(-2));
        assert_eq!(r.condition_ii.witnesses, Some((-3, -2)));
        assert!(!r.condition_iii.pass && r.condition_iii.borderline);
        let b = AnnulusAdapter::new(polar(1e-7, TAU), 3.0, 4.0).unwrap();
        let r = displacement_report(&b.lift(0), 1024).unwrap();
        assert_eq!(r.condition_ii.witness, Some(-10));
        assert_eq!(r.condition_iii.witnesses, Some((-14, -11)));
        let c = AnnulusAdapter::new(polar(1e-7, 3.0 * PI), 1.0, 2.0).unwrap();
        let r = displacement_report(&c.lift(0), 1024).unwrap();
        assert_eq!(r.condition_iii.witnesses, Some((-4, -3)));
        assert_eq!(r.condition_iii.witness, Some(-3));
    }

    #[test]
    fn report_on_shifted_sheet_gives_same_absolute_witness() {
        let b = AnnulusAdapter::new(polar(1e-7, TAU), 3.0, 4.0).unwrap();
        let r = displacement_report(&b.lift(-12), 1024).unwrap();
        assert_eq!(r.condition_iii.witnesses, Some((-14, -11)));
        assert_eq!(r.condition_ii.witness, Some(-10));
    }

    #[test]
    fn lift_equivariance_without_hint() {
        let twist = FnPlaneMap(|p: [f64; 2]| {
            let r = p[0].hypot(p[1]);
            let th = p[1].atan2(p[0]) + 0.3 * r;
            [r * th.cos(), r * th.sin()]
        });
        let a = AnnulusAdapter::new(twist, 1.0, 2.0).unwrap();
        let l = a.lift(2).with_resolution(256);
        for (x, s) in [(0.1, 0.2), (0.7, 0.9), (-0.4, 0.5)] {
            let (x0, s0) = l.apply(x, s).unwrap();
            let (x1, s1) = l.apply(x + 1.0, s).unwrap();
            assert!((x1 - x0 - 1.0).abs() < 1e-10 && (s1 - s0).abs() < 1e-12);
            let r = 1.0 + s;
            assert!((x0 - (x + 0.3 * r / TAU + 2.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn condition_i_examples() {
        let a = AnnulusAdapter::new(polar(1e-7, TAU), 1.0, 2.0).unwrap();
        let r = condition_i_check(&a, 1.5, 1_000_000, 1e-3).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.forward_iterations > 100 && r.backward_iterations > 100);
        let z = AnnulusAdapter::new(polar(0.0, TAU), 1.0, 2.0).unwrap();
        let r = condition_i_check(&z, 1.5, 1000, 1e-3).unwrap();
        assert!(!r.pass);
        assert!(condition_i_check(&a, 2.5, 10, 1e-3).is_err());
        let bad = AnnulusAdapter::new(polar(1e-7, TAU), 1.2, 2.0).unwrap();
        assert!(condition_i_check(&bad, 1.5, 10, 1e-3).is_err());
    }

    #[test]
    fn radial_arcs_meet_their_images() {
        let a = AnnulusAdapter::new(polar(1e-7, TAU), 1.0, 2.0).unwrap();
        let w = arc_meets_own_image(&a, &CrossingArc::radial(0.0), 1e-10).unwrap().unwrap();
        let m = polar(1e-7, TAU);
        assert!((w.t - (2f64.sqrt() - 1.0)).abs() < 1e-9);
        assert!((w.t_prime - (m.alpha(2f64.sqrt()) - 1.0)).abs() < 1e-9);
        let b = AnnulusAdapter::new(polar(1e-7, TAU), 3.0, 4.0).unwrap();
        let w = arc_meets_own_image(&b, &CrossingArc::radial(0.0), 1e-10).unwrap().unwrap();
        assert!((w.t - (10f64.sqrt() - 3.0)).abs() < 1e-9);
    }

    #[test]
    fn self_crossing_requires_twist() {
        let z = AnnulusAdapter::new(polar(0.0, TAU), 1.0, 2.0).unwrap();
        assert_eq!(arc_meets_own_image(&z, &CrossingArc::radial(0.0), 1e-10).unwrap(), None);
        let id = AnnulusAdapter::new(FnPlaneMap(|p: [f64; 2]| p), 1.0, 2.0).unwrap();
        assert!(arc_meets_own_image(&id, &CrossingArc::radial(0.0), 1e-10).is_err());
    }

    #[test]
    fn image_meets_arc_examples() {
        let (g, h) = (CrossingArc::radial(0.0), CrossingArc::radial(0.5));
        let b = AnnulusAdapter::new(polar(1e-7, TAU), 3.0, 4.0).unwrap();
        assert!(image_meets_arc(&b, &g, &h).unwrap());
        let id = AnnulusAdapter::new(FnPlaneMap(|p: [f64; 2]| p), 1.0, 2.0).unwrap();
        assert!(!image_meets_arc(&id, &g, &h).unwrap());
        assert!(image_meets_arc(&id, &g, &CrossingArc::radial(1.0)).is_err());
    }

    #[test]
    fn arc_validation() {
        assert!(CrossingArc { points: vec![[0.0, 0.0], [0.0, 0.5]] }.validate().is_err());
        assert!(CrossingArc { points: vec![[0.0, 0.0], [0.0, 1.2], [0.0, 1.0]] }.validate().is_err());
        let zig = CrossingArc { points: vec![[0.0, 0.0], [1.0, 0.6], [1.0, 0.2], [0.0, 0.5], [0.5, 1.0]] };
        assert!(zig.validate().is_err());
        for seed in 0..20 {
            CrossingArc::random_monotone(seed, 8, 0.3).validate().unwrap();
        }
        let r = CrossingArc::radial(0.25);
        assert_eq!(r.at(0.5), [0.25, 0.5]);
    }
}
