//! Fixed-point certificates of non-synchronization for planar maps.
//!
//! If F has a fixed point z₀ and the slave map with the drive frozen at z₀'s
//! drive coordinate has a second fixed point, two slave trajectories under the
//! same (constant) drive never meet, so the structure does not synchronize.
//! Perturbed maps G = F + η are certified the same way.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_seed;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::structure::ProductStructure;
use crate::systems::PlaneMap;

/// Radius outside which perturbations vanish.
pub const BUMP_RADIUS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub point: [f64; 2],
    /// ‖F(z₀) − z₀‖.
    pub residual: f64,
}

fn residual<M: PlaneMap + ?Sized>(map: &M, p: [f64; 2]) -> f64 {
    let q = map.apply2(p);
    (q[0] - p[0]).hypot(q[1] - p[1])
}

/// Grid search on a 64×64 lattice over the disk followed by damped Newton on
/// F(p) − p with a central-difference Jacobian.
pub fn find_fixed_point<M: PlaneMap + ?Sized>(map: &M, center: [f64; 2], radius: f64, tol: f64) -> Result<FixedPoint> {
    if !(radius > 0.0) {
        return Err(Error::Precondition("disk radius must be positive".into()));
    }
    const N: usize = 64;
    let mut best = (f64::INFINITY, center);
    for i in 0..N {
        for j in 0..N {
            let u = -1.0 + 2.0 * (i as f64 + 0.5) / N as f64;
            let v = -1.0 + 2.0 * (j as f64 + 0.5) / N as f64;
            if u * u + v * v > 1.0 {
                continue;
            }
            let p = [center[0] + radius * u, center[1] + radius * v];
            let r = residual(map, p);
            if r < best.0 {
                best = (r, p);
            }
        }
    }
    let (mut res, mut p) = best;
    const H: f64 = 1e-7;
    for _ in 0..100 {
        if res == 0.0 {
            break;
        }
        let g = |p: [f64; 2]| {
            let q = map.apply2(p);
            [q[0] - p[0], q[1] - p[1]]
        };
        let g0 = g(p);
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let mut a = p;
            let mut b = p;
            a[k] += H;
            b[k] -= H;
            let (ga, gb) = (g(a), g(b));
            jac[0][k] = (ga[0] - gb[0]) / (2.0 * H);
            jac[1][k] = (ga[1] - gb[1]) / (2.0 * H);
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let step = [
            -(jac[1][1] * g0[0] - jac[0][1] * g0[1]) / det,
            -(-jac[1][0] * g0[0] + jac[0][0] * g0[1]) / det,
        ];
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let cand = [p[0] + lambda * step[0], p[1] + lambda * step[1]];
            let rc = residual(map, cand);
            if rc < res {
                p = cand;
                res = rc;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved || step[0].hypot(step[1]) <= 1e-16 * (1.0 + p[0].hypot(p[1])) {
            break;
        }
    }
    if res < tol {
        Ok(FixedPoint { point: p, residual: res })
    } else {
        Err(Error::NotFound(format!("no fixed point below {tol:e} in the disk (best residual {res:e})")))
    }
}

/// ψ(t): response coordinate of F at the point with drive coordinate x₀ and
/// response coordinate t.
pub struct SlaveSection<'a, M: ?Sized> {
    pub map: &'a M,
    pub structure: &'a ProductStructure,
    pub leaf_constant: f64,
}

impl<M: PlaneMap + ?Sized> SlaveSection<'_, M> {
    pub fn eval(&self, t: f64) -> f64 {
        let s = self.structure;
        let mut q = [0.0; 2];
        q[s.drive_indices()[0]] = self.leaf_constant;
        q[s.response_indices()[0]] = t;
        let p = s.ambient(&q);
        let img = self.map.apply2([p[0], p[1]]);
        s.response_of(&img)[0]
    }
}

fn planar_split(structure: &ProductStructure) -> Result<()> {
    if structure.dim() != 2 || structure.drive_dim() != 1 {
        return Err(Error::Precondition("need a planar structure with one drive coordinate".into()));
    }
    Ok(())
}

pub fn slave_section<'a, M: PlaneMap + ?Sized>(map: &'a M, structure: &'a ProductStructure, z0: [f64; 2]) -> Result<SlaveSection<'a, M>> {
    planar_split(structure)?;
    Ok(SlaveSection { map, structure, leaf_constant: structure.drive_of(&z0)[0] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    Transversal,
    Tangential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionFixedPoint {
    pub t: f64,
    pub kind: Crossing,
    /// The fixed point on the leaf through z₀ itself.
    #[serde(default)]
    pub anchored: bool,
}

/// Fixed points of ψ on [a, b]: sign changes of ψ(t) − t on the grid are
/// bisected down to adjacent floats (interval width ≤ `tol` guaranteed) and
/// labeled transversal; exact grid zeros without a sign change are tangential.
pub fn count_fixed_points(psi: impl Fn(f64) -> f64, interval: (f64, f64), grid_step: f64, tol: f64) -> Result<Vec<SectionFixedPoint>> {
    let (a, b) = interval;
    if !(grid_step > 0.0 && grid_step <= 1e-4) {
        return Err(Error::Precondition(format!("grid_step must be in (0, 1e-4], got {grid_step}")));
    }
    if !(a < b) {
        return Err(Error::Invalid(format!("empty interval [{a}, {b}]")));
    }
    let g = |t: f64| psi(t) - t;
    let n = ((b - a) / grid_step).ceil() as usize;
    let ts: Vec<f64> = (0..=n).map(|i| if i == n { b } else { a + i as f64 * grid_step }).collect();
    let gs: Vec<f64> = ts.iter().map(|&t| g(t)).collect();
    let mut out = Vec::new();
    for i in 0..=n {
        if gs[i] == 0.0 {
            let left = if i > 0 { Some(gs[i - 1]) } else { None };
            let right = if i < n { Some(gs[i + 1]) } else { None };
            let kind = match (left, right) {
                (Some(l), Some(r)) if l != 0.0 && r != 0.0 && (l > 0.0) != (r > 0.0) => Crossing::Transversal,
                (Some(_), Some(_)) => Crossing::Tangential,
                (Some(v), None) | (None, Some(v)) if v != 0.0 => Crossing::Transversal,
                _ => Crossing::Tangential,
            };
            out.push(SectionFixedPoint { t: ts[i], kind, anchored: false });
        }
        if i < n && gs[i] != 0.0 && gs[i + 1] != 0.0 && (gs[i] > 0.0) != (gs[i + 1] > 0.0) {
            let (mut lo, mut hi) = (ts[i], ts[i + 1]);
            let (mut glo, mut ghi) = (gs[i], gs[i + 1]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let gm = g(mid);
                if gm == 0.0 {
                    (lo, hi, glo, ghi) = (mid, mid, 0.0, 0.0);
                    break;
                }
                if (gm > 0.0) == (glo > 0.0) {
                    (lo, glo) = (mid, gm);
                } else {
                    (hi, ghi) = (mid, gm);
                }
            }
            debug_assert!(hi - lo <= tol.max(0.0) || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0));
            let t = if glo.abs() <= ghi.abs() { lo } else { hi };
            out.push(SectionFixedPoint { t, kind: Crossing::Transversal, anchored: false });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateVerdict {
    NonSynchronizingForStructure,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCertificate {
    pub structure: ProductStructure,
    pub fixed_point: Option<FixedPoint>,
    pub leaf_constant: Option<f64>,
    /// Response coordinate of z₀ (a fixed point of ψ by construction).
    pub anchor: Option<f64>,
    pub fixed_points: Vec<SectionFixedPoint>,
    pub transversal_count: usize,
    pub verdict: CertificateVerdict,
    pub note: Option<String>,
}

impl FixedPointCertificate {
    pub fn certified(&self) -> bool {
        self.verdict == CertificateVerdict::NonSynchronizingForStructure
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub disk_center: [f64; 2],
    pub disk_radius: f64,
    pub fixed_point_tol: f64,
    pub grid_step: f64,
    pub root_tol: f64,
    /// Section fixed points closer than this to the anchor are the anchor.
    pub anchor_merge: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            disk_center: [0.0, 0.0],
            disk_radius: 0.9,
            fixed_point_tol: 1e-10,
            grid_step: 1e-4,
            root_tol: 1e-12,
            anchor_merge: 1e-6,
        }
    }
}

fn certify_at<M: PlaneMap + ?Sized>(
    map: &M,
    structure: &ProductStructure,
    fp: &Result<FixedPoint>,
    window: (f64, f64),
    cfg: &CertifyConfig,
) -> Result<FixedPointCertificate> {
    planar_split(structure)?;
    let mut cert = FixedPointCertificate {
        structure: structure.clone(),
        fixed_point: None,
        leaf_constant: None,
        anchor: None,
        fixed_points: Vec::new(),
        transversal_count: 0,
        verdict: CertificateVerdict::Inconclusive,
        note: None,
    };
    let fp = match fp {
        Ok(fp) => *fp,
        Err(e) => {
            cert.note = Some(format!("fixed-point search failed: {e}"));
            return Ok(cert);
        }
    };
    let section = slave_section(map, structure, fp.point)?;
    let anchor = structure.response_of(&fp.point)[0];
    cert.fixed_point = Some(fp);
    cert.leaf_constant = Some(section.leaf_constant);
    cert.anchor = Some(anchor);
    let mut pts = count_fixed_points(|t| section.eval(t), window, cfg.grid_step, cfg.root_tol)?;
    let n_grid = ((window.1 - window.0) / cfg.grid_step).ceil() as usize + 1;
    let zeros = pts.iter().filter(|p| p.kind == Crossing::Tangential).count();
    if zeros * 2 > n_grid {
        cert.fixed_points = pts;
        cert.note = Some("degenerate section: ψ(t) = t on most of the window".into());
        return Ok(cert);
    }
    match pts.iter_mut().find(|p| (p.t - anchor).abs() <= cfg.anchor_merge) {
        Some(p) => p.anchored = true,
        None => {
            pts.push(SectionFixedPoint { t: anchor, kind: Crossing::Transversal, anchored: true });
            pts.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
    }
    let transversal = pts.iter().filter(|p| p.kind == Crossing::Transversal).count();
    cert.transversal_count = transversal;
    cert.verdict = if transversal >= 2 {
        CertificateVerdict::NonSynchronizingForStructure
    } else {
        CertificateVerdict::Inconclusive
    };
    cert.fixed_points = pts;
    Ok(cert)
}

/// Certificates for each structure. The fixed point z₀ is searched once; its
/// drive coordinate fixes the leaf for each structure and ψ is scanned over
/// `window` in leaf (response) coordinates. The anchor at z₀ always counts,
/// inside the window or not.
pub fn certify<M: PlaneMap + ?Sized>(
    map: &M,
    structures: &[ProductStructure],
    window: (f64, f64),
    cfg: &CertifyConfig,
) -> Result<Vec<FixedPointCertificate>> {
    let fp = find_fixed_point(map, cfg.disk_center, cfg.disk_radius, cfg.fixed_point_tol);
    structures.par_iter().map(|s| certify_at(map, s, &fp, window, cfg)).collect()
}

/// Identity structure and rotations by kπ/n for k = 1..=n.
pub fn rotated_structures(n: usize) -> Vec<ProductStructure> {
    if n == 0 {
        return vec![ProductStructure::rotation(0.0)];
    }
    (0..=n).map(|k| ProductStructure::rotation(k as f64 * PI / n as f64)).collect()
}

/// Seeded shears (x, y) ↦ (x + σy, y), σ uniform in [−1, 1], drive coordinate 0.
pub fn shear_structures(seed: u64, n: usize) -> Vec<ProductStructure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let sigma = rng.gen_range(-1.0..=1.0);
            let t = Matrix::from_rows(&[[1.0, sigma], [0.0, 1.0]]).expect("finite");
            ProductStructure::new(t, vec![0.0, 0.0], vec![0]).expect("shears are invertible")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Seeded finite Fourier series in the angle.
    #[default]
    Fourier,
    RadialInward,
    RadialOutward,
    Tangential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub direction: Direction,
}

fn default_modes() -> usize {
    3
}

impl PerturbationSpec {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        PerturbationSpec { epsilon, n_modes: 3, seed, direction: Direction::Fourier }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }
}

/// η(p) = w(r)·Σⱼ (r/6)ʲ(aⱼ cos jθ + bⱼ sin jθ) per component, j = 0..=n_modes,
/// with w(r) = (1 − (r/6)²)² for r < 6 and 0 beyond. Since w and (r/6)ʲ are
/// bounded by 1, ‖η‖ ≤ √(S₀² + S₁²) where Sc = Σ|coefficients of component c|;
/// coefficients are rescaled so this bound equals ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub spec: PerturbationSpec,
    /// [component][mode] = (a, b).
    pub coefficients: [Vec<(f64, f64)>; 2],
}

pub fn bump(r: f64) -> f64 {
    if r >= BUMP_RADIUS {
        0.0
    } else {
        let u = r / BUMP_RADIUS;
        (1.0 - u * u).powi(2)
    }
}

pub fn make_perturbation(spec: PerturbationSpec) -> Result<Perturbation> {
    if !(spec.epsilon >= 0.0 && spec.epsilon.is_finite()) {
        return Err(Error::Precondition(format!("epsilon must be finite and non-negative, got {}", spec.epsilon)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut coefficients: [Vec<(f64, f64)>; 2] = Default::default();
    for c in coefficients.iter_mut() {
        *c = (0..=spec.n_modes).map(|j| (rng.gen_range(-1.0..=1.0), if j == 0 { 0.0 } else { rng.gen_range(-1.0..=1.0) })).collect();
    }
    let sums: Vec<f64> = coefficients.iter().map(|c| c.iter().map(|(a, b)| a.abs() + b.abs()).sum()).collect();
    let bound = sums[0].hypot(sums[1]);
    let scale = if bound > 0.0 { spec.epsilon / bound } else { 0.0 };
    for c in coefficients.iter_mut() {
        c.iter_mut().for_each(|(a, b)| {
            *a *= scale;
            *b *= scale;
        });
    }
    Ok(Perturbation { spec, coefficients })
}

impl Perturbation {
    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        let r = p[0].hypot(p[1]);
        let w = bump(r);
        if w == 0.0 || self.spec.epsilon == 0.0 {
            return [0.0, 0.0];
        }
        let eps = self.spec.epsilon;
        match self.spec.direction {
            Direction::RadialInward => [-eps * w * p[0] / BUMP_RADIUS, -eps * w * p[1] / BUMP_RADIUS],
            Direction::RadialOutward => [eps * w * p[0] / BUMP_RADIUS, eps * w * p[1] / BUMP_RADIUS],
            Direction::Tangential => [-eps * w * p[1] / BUMP_RADIUS, eps * w * p[0] / BUMP_RADIUS],
            Direction::Fourier => {
                // (r/6)ʲ(cos jθ, sin jθ) = Re/Im of ((x + iy)/6)ʲ
                let (zr, zi) = (p[0] / BUMP_RADIUS, p[1] / BUMP_RADIUS);
                let (mut cr, mut ci) = (1.0, 0.0);
                let mut out = [0.0; 2];
                for j in 0..=self.spec.n_modes {
                    for (c, o) in out.iter_mut().enumerate() {
                        let (a, b) = self.coefficients[c][j];
                        *o += a * cr + b * ci;
                    }
                    (cr, ci) = (cr * zr - ci * zi, cr * zi + ci * zr);
                }
                [w * out[0], w * out[1]]
            }
        }
    }
}

/// G = F + η.
#[derive(Debug, Clone)]
pub struct PerturbedMap<M> {
    pub base: M,
    pub eta: Perturbation,
}

impl<M: PlaneMap> PlaneMap for PerturbedMap<M> {
    fn apply2(&self, p: [f64; 2]) -> [f64; 2] {
        let q = self.base.apply2(p);
        let e = self.eta.eval(p);
        [q[0] + e[0], q[1] + e[1]]
    }

    fn lift_hint(&self, p: [f64; 2]) -> Option<f64> {
        let h = self.base.lift_hint(p)?;
        let q = self.base.apply2(p);
        let g = self.apply2(p);
        let d = (g[1].atan2(g[0]) - q[1].atan2(q[0])) / TAU;
        Some(h + d - d.round())
    }

    /// Solves G(p) = q by the iteration p ← F⁻¹(q − η(p)), which contracts
    /// when η is small.
    fn inverse2(&self, q: [f64; 2]) -> Option<[f64; 2]> {
        let mut p = self.base.inverse2(q)?;
        for _ in 0..200 {
            let e = self.eta.eval(p);
            let next = self.base.inverse2([q[0] - e[0], q[1] - e[1]])?;
            let moved = (next[0] - p[0]).hypot(next[1] - p[1]);
            p = next;
            if moved <= 1e-15 * (1.0 + p[0].hypot(p[1])) {
                return Some(p);
            }
        }
        let g = self.apply2(p);
        ((g[0] - q[0]).hypot(g[1] - q[1]) < 1e-12).then_some(p)
    }
}

/// Grid points in the disk of radius `radius` where the finite-difference
/// Jacobian determinant of G is not positive (suspected folds).
pub fn injectivity_check<M: PlaneMap + ?Sized>(map: &M, radius: f64, n: usize) -> usize {
    const H: f64 = 1e-6;
    let mut bad = 0;
    for i in 0..n {
        for j in 0..n {
            let x = -radius + 2.0 * radius * (i as f64 + 0.5) / n as f64;
            let y = -radius + 2.0 * radius * (j as f64 + 0.5) / n as f64;
            if x * x + y * y > radius * radius {
                continue;
            }
            let d = |dx: f64, dy: f64| map.apply2([x + dx, y + dy]);
            let (a, b, c, e) = (d(H, 0.0), d(-H, 0.0), d(0.0, H), d(0.0, -H));
            let det = (a[0] - b[0]) * (c[1] - e[1]) - (a[1] - b[1]) * (c[0] - e[0]);
            if det <= 0.0 {
                bad += 1;
            }
        }
    }
    bad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub sample: usize,
    pub structure_id: usize,
    /// Transversal fixed points of ψ, anchor included.
    pub n_fixed_points: usize,
    pub verdict: CertificateVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFraction {
    pub epsilon: f64,
    /// Fraction of samples certified for every sampled structure.
    pub success_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub fractions: Vec<SweepFraction>,
}

/// Perturbation of sample `sample` in a sweep seeded with `seed`; the same
/// direction is reused for every ε.
pub fn sweep_spec(epsilon: f64, seed: u64, sample: usize, direction: Direction) -> PerturbationSpec {
    PerturbationSpec { epsilon, n_modes: 3, seed: cell_seed(seed, sample as u64, 0), direction }
}

#[allow(clippy::too_many_arguments)]
pub fn perturbation_sweep<M: PlaneMap + Clone>(
    map: &M,
    eps_list: &[f64],
    n_samples: usize,
    structures: &[ProductStructure],
    seed: u64,
    direction: Direction,
    window: (f64, f64),
    cfg: &CertifyConfig,
) -> Result<SweepReport> {
    if eps_list.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Precondition("eps_list must be sorted ascending".into()));
    }
    if structures.is_empty() || n_samples == 0 {
        return Err(Error::Precondition("need at least one structure and one sample".into()));
    }
    let cells: Vec<(usize, usize)> = (0..eps_list.len()).flat_map(|e| (0..n_samples).map(move |s| (e, s))).collect();
    let results = cells
        .par_iter()
        .map(|&(e, sample)| {
            let eta = make_perturbation(sweep_spec(eps_list[e], seed, sample, direction))?;
            let g = PerturbedMap { base: map.clone(), eta };
            let fp = find_fixed_point(&g, cfg.disk_center, cfg.disk_radius, cfg.fixed_point_tol);
            structures
                .iter()
                .enumerate()
                .map(|(id, s)| {
                    let c = certify_at(&g, s, &fp, window, cfg)?;
                    Ok(SweepRow {
                        epsilon: eps_list[e],
                        sample,
                        structure_id: id,
                        n_fixed_points: c.transversal_count,
                        verdict: c.verdict,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let fractions = eps_list
        .iter()
        .enumerate()
        .map(|(e, &epsilon)| {
            let ok = results[e * n_samples..(e + 1) * n_samples]
                .iter()
                .filter(|rows| rows.iter().all(|r| r.verdict == CertificateVerdict::NonSynchronizingForStructure))
                .count();
            SweepFraction { epsilon, success_fraction: ok as f64 / n_samples as f64 }
        })
        .collect();
    Ok(SweepReport { rows: results.into_iter().flatten().collect(), fractions })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalEpsilon {
    /// Largest ε found to keep the certificate.
    pub lo: f64,
    /// Smallest ε found to break it.
    pub hi: f64,
}

/// Bisection on ε along the fixed direction of `sweep_spec(·, seed, 0, direction)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_critical_epsilon<M: PlaneMap + Clone>(
    map: &M,
    structure: &ProductStructure,
    seed: u64,
    direction: Direction,
    eps_lo: f64,
    eps_hi: f64,
    iters: usize,
    window: (f64, f64),
    cfg: &CertifyConfig,
) -> Result<CriticalEpsilon> {
    if !(eps_lo >= 0.0 && eps_lo < eps_hi) {
        return Err(Error::Precondition("need 0 ≤ eps_lo < eps_hi".into()));
    }
    let holds = |eps: f64| -> Result<bool> {
        let eta = make_perturbation(sweep_spec(eps, seed, 0, direction))?;
        let g = PerturbedMap { base: map.clone(), eta };
        Ok(certify(&g, std::slice::from_ref(structure), window, cfg)?[0].certified())
    };
    if !holds(eps_lo)? {
        return Err(Error::Precondition(format!("certificate already fails at eps_lo = {eps_lo}")));
    }
    if holds(eps_hi)? {
        return Err(Error::Precondition(format!("certificate still holds at eps_hi = {eps_hi}")));
    }
    let (mut lo, mut hi) = (eps_lo, eps_hi);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalEpsilon { lo, hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{FnPlaneMap, PlanarPolarMap};

    #[test]
    fn origin_is_found() {
        let fp = find_fixed_point(&PlanarPolarMap::default(), [0.0, 0.0], 0.9, 1e-12).unwrap();
        assert!(fp.point[0].abs() < 1e-12 && fp.point[1].abs() < 1e-12);
        let fp = find_fixed_point(&FnPlaneMap(|p: [f64; 2]| p), [0.0, 0.0], 1.0, 1e-12).unwrap();
        assert_eq!(fp.residual, 0.0);
        let shift = FnPlaneMap(|p: [f64; 2]| [p[0] + 1.0, p[1]]);
        assert!(matches!(find_fixed_point(&shift, [0.0, 0.0], 1.0, 1e-10), Err(Error::NotFound(_))));
    }

    #[test]
    fn section_values() {
        let m = PlanarPolarMap::default();
        let s = ProductStructure::identity(2, &[0]).unwrap();
        let psi = slave_section(&m, &s, [0.0, 0.0]).unwrap();
        assert_eq!(psi.eval(0.0), 0.0);
        assert!((psi.eval(2.0) - 2.0).abs() < 1e-12);
        let t = 1.3;
        assert!((psi.eval(t) - m.alpha(t) * (TAU * t * t).cos()).abs() < 1e-12);
    }

    #[test]
    fn linear_section_has_one_fixed_point() {
        let pts = count_fixed_points(|t| t / 2.0, (-1.0, 1.0), 1e-4, 1e-12).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].kind, Crossing::Transversal);
        assert!(pts[0].t.abs() < 1e-12);
        assert!(count_fixed_points(|t| t / 2.0, (-1.0, 1.0), 1e-3, 1e-12).is_err());
    }

    #[test]
    fn tangency_is_not_transversal() {
        let pts = count_fixed_points(|t| t - (t - 0.5).powi(2), (0.0, 1.0), 1e-4, 1e-12).unwrap();
        assert!(pts.iter().all(|p| p.kind == Crossing::Tangential));
    }

    #[test]
    fn contraction_is_not_certified() {
        let half = FnPlaneMap(|p: [f64; 2]| [p[0] / 2.0, p[1] / 2.0]);
        let c = certify(&half, &[ProductStructure::identity(2, &[0]).unwrap()], (-2.0, 2.0), &CertifyConfig::default()).unwrap();
        assert_eq!(c[0].verdict, CertificateVerdict::Inconclusive);
        assert_eq!(c[0].transversal_count, 1);
    }

    #[test]
    fn identity_is_degenerate() {
        let id = FnPlaneMap(|p: [f64; 2]| p);
        let c = certify(&id, &[ProductStructure::identity(2, &[0]).unwrap()], (0.0, 1.0), &CertifyConfig::default()).unwrap();
        assert_eq!(c[0].verdict, CertificateVerdict::Inconclusive);
        assert!(c[0].note.as_deref().unwrap().contains("degenerate"));
    }

    #[test]
    fn polar_certified_on_identity_structure() {
        let c = certify(&PlanarPolarMap::default(), &[ProductStructure::identity(2, &[0]).unwrap()], (0.0, 5.0), &CertifyConfig::default())
            .unwrap();
        assert!(c[0].certified());
        assert!(c[0].fixed_points.iter().any(|p| p.anchored && p.t.abs() < 1e-9));
    }

    #[test]
    fn perturbation_bounds_and_determinism() {
        let z = make_perturbation(PerturbationSpec::new(0.0, 5)).unwrap();
        assert_eq!(z.eval([0.3, 0.2]), [0.0, 0.0]);
        let a = make_perturbation(PerturbationSpec::new(1e-3, 5)).unwrap();
        let b = make_perturbation(PerturbationSpec::new(1e-3, 5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.eval([7.0, 0.0]), [0.0, 0.0]);
        for dir in [Direction::RadialInward, Direction::RadialOutward, Direction::Tangential] {
            let p = make_perturbation(PerturbationSpec::new(1e-3, 1).with_direction(dir)).unwrap();
            let v = p.eval([3.0, 4.0]);
            assert!(v[0].hypot(v[1]) <= 1e-3);
        }
        assert!(make_perturbation(PerturbationSpec::new(-1.0, 0)).is_err());
    }

    #[test]
    fn perturbed_inverse_roundtrip() {
        let g = PerturbedMap { base: PlanarPolarMap::default(), eta: make_perturbation(PerturbationSpec::new(1e-4, 2)).unwrap() };
        for p in [[1.2, 0.3], [-2.5, 1.0], [0.1, -3.3]] {
            let q = g.inverse2(g.apply2(p)).unwrap();
            assert!((q[0] - p[0]).abs() < 1e-11 && (q[1] - p[1]).abs() < 1e-11);
        }
    }

    #[test]
    fn sweep_rejects_unsorted() {
        let s = rotated_structures(2);
        let r = perturbation_sweep(&PlanarPolarMap::default(), &[1e-3, 1e-4], 1, &s, 0, Direction::Fourier, (0.0, 5.0), &CertifyConfig::default());
        assert!(r.is_err());
    }

    #[test]
    fn rotated_family_has_thirteen_members() {
        let s = rotated_structures(12);
        assert_eq!(s.len(), 13);
        assert_eq!(s[0], ProductStructure::identity(2, &[0]).unwrap());
        assert_eq!(shear_structures(1, 4).len(), 4);
    }
}
