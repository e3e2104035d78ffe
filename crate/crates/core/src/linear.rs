//! Synchronizability of linear maps and flows under linear product structures.
//!
//! Imposing the drive coordinates of T·A·T⁻¹ leaves the response evolving by
//! the block B = (T·A·T⁻¹)[response, response] plus a drive-dependent term, so
//! the slave contracts for every drive exactly when B is stable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_seed;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{expm, power_iteration_radius, spectral_radius, Matrix, PowerEstimate};
use crate::structure::ProductStructure;
use crate::systems::LinearKind;

/// Criterion values closer than this to the threshold are flagged borderline
/// and never reported synchronizable.
pub const BORDERLINE_MARGIN: f64 = 1e-9;

const FLOW_STEP: f64 = 1e-2;
const MAX_CONDITION: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSyncReport {
    pub kind: LinearKind,
    pub structure: ProductStructure,
    pub response_block: Matrix,
    /// Spectral radius of B (maps) or spectral abscissa of B (flows).
    pub criterion_value: f64,
    pub synchronizable: bool,
    pub borderline: bool,
    /// Independent power-iteration estimate of the spectral radius of B
    /// (of exp(Bh) for flows).
    pub power_check: PowerEstimate,
}

/// B = response rows × response columns of T·A·T⁻¹; the offset plays no role.
pub fn response_block(a: &Matrix, s: &ProductStructure) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Invalid("matrix must be square".into()));
    }
    check_dim(s.dim(), a.rows())?;
    let conj = s.transform().mul(a).mul(s.inverse_transform());
    Ok(conj.select(s.response_indices(), s.response_indices()))
}

fn map_criterion(b: &Matrix) -> f64 {
    spectral_radius(b)
}

fn flow_criterion(b: &Matrix) -> Result<(f64, Matrix)> {
    let mut h = FLOW_STEP;
    for _ in 0..40 {
        let e = expm(&b.scale(h));
        if e.is_finite() {
            let rho = spectral_radius(&e);
            if rho > 0.0 && rho.is_finite() {
                return Ok((rho.ln() / h, e));
            }
        }
        h *= 0.1;
    }
    Err(Error::Invalid("matrix exponential overflows at every step size".into()))
}

fn judge(value: f64, threshold: f64) -> (bool, bool) {
    let borderline = (value - threshold).abs() < BORDERLINE_MARGIN;
    (value < threshold && !borderline, borderline)
}

pub fn decide_map(a: &Matrix, s: &ProductStructure) -> Result<LinearSyncReport> {
    let b = response_block(a, s)?;
    let det = a.det();
    if det.abs() <= 1e-12 {
        return Err(Error::Precondition(format!("map matrix must be invertible (det {det:e})")));
    }
    let criterion_value = map_criterion(&b);
    let power_check = power_iteration_radius(&b, 100, 5, 0);
    let (synchronizable, borderline) = judge(criterion_value, 1.0);
    Ok(LinearSyncReport {
        kind: LinearKind::Map,
        structure: s.clone(),
        response_block: b,
        criterion_value,
        synchronizable,
        borderline,
        power_check,
    })
}

pub fn decide_flow(a: &Matrix, s: &ProductStructure) -> Result<LinearSyncReport> {
    let b = response_block(a, s)?;
    let (criterion_value, e) = flow_criterion(&b)?;
    let power_check = power_iteration_radius(&e, 100, 5, 0);
    let (synchronizable, borderline) = judge(criterion_value, 0.0);
    Ok(LinearSyncReport {
        kind: LinearKind::Flow,
        structure: s.clone(),
        response_block: b,
        criterion_value,
        synchronizable,
        borderline,
        power_check,
    })
}

pub fn decide(a: &Matrix, s: &ProductStructure, kind: LinearKind) -> Result<LinearSyncReport> {
    match kind {
        LinearKind::Map => decide_map(a, s),
        LinearKind::Flow => decide_flow(a, s),
    }
}

fn quick_verdict(a: &Matrix, s: &ProductStructure, kind: LinearKind) -> bool {
    let Ok(b) = response_block(a, s) else { return false };
    match kind {
        LinearKind::Map => judge(map_criterion(&b), 1.0).0,
        LinearKind::Flow => flow_criterion(&b).map(|(v, _)| judge(v, 0.0).0).unwrap_or(false),
    }
}

/// Transform for search sample `index`: identity for 0, otherwise a seeded
/// matrix with entries uniform in [−1, 1], redrawn while the condition bound
/// exceeds 1e4.
pub fn sample_transform(d: usize, seed: u64, index: usize) -> Matrix {
    if index == 0 {
        return Matrix::identity(d);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, index as u64, 0x5eed));
    loop {
        let t = Matrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..=1.0));
        if t.det().abs() > 1e-12 && t.condition_bound() <= MAX_CONDITION {
            return t;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Index of the transform sample that succeeded (0 is the identity).
    pub sample_index: usize,
    pub report: LinearSyncReport,
}

/// Searches `budget` transform samples, each with every single-coordinate
/// drive split, for a structure under which A is synchronizable. The lowest
/// (sample, split) index wins, so the result does not depend on thread count.
pub fn search_structure(a: &Matrix, kind: LinearKind, budget: usize, seed: u64) -> Result<Option<SearchOutcome>> {
    if budget < 1 {
        return Err(Error::Precondition("budget must be at least 1".into()));
    }
    if !a.is_square() || a.rows() < 2 {
        return Err(Error::Invalid("need a square matrix of order at least 2".into()));
    }
    if kind == LinearKind::Map && a.det().abs() <= 1e-12 {
        return Err(Error::Precondition("map matrix must be invertible".into()));
    }
    let d = a.rows();
    const CHUNK: usize = 512;
    let mut start = 0;
    while start < budget {
        let end = (start + CHUNK).min(budget);
        let hit = (start..end)
            .into_par_iter()
            .filter_map(|i| {
                let t = sample_transform(d, seed, i);
                (0..d).find_map(|k| {
                    let s = ProductStructure::new(t.clone(), vec![0.0; d], vec![k]).ok()?;
                    quick_verdict(a, &s, kind).then_some((i, s))
                })
            })
            .min_by_key(|(i, _)| *i);
        if let Some((sample_index, s)) = hit {
            let report = decide(a, &s, kind)?;
            return Ok(Some(SearchOutcome { sample_index, report }));
        }
        start = end;
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MatrixFamily {
    /// Entries iid uniform in [−scale, scale].
    UniformEntries { scale: f64 },
    /// T·diag(λ)·T⁻¹ with one |λ| in [0.1, 0.9], the rest in [1.1, 3], random
    /// signs, and T a random well-conditioned transform.
    DiagonalDistinctModuli,
}

impl Default for MatrixFamily {
    fn default() -> Self {
        MatrixFamily::UniformEntries { scale: 2.0 }
    }
}

impl MatrixFamily {
    pub fn sample(&self, d: usize, rng: &mut ChaCha8Rng) -> Matrix {
        match *self {
            MatrixFamily::UniformEntries { scale } => loop {
                let a = Matrix::from_fn(d, d, |_, _| rng.gen_range(-scale..=scale));
                if a.det().abs() > 1e-6 {
                    return a;
                }
            },
            MatrixFamily::DiagonalDistinctModuli => {
                let lam: Vec<f64> = (0..d)
                    .map(|i| {
                        let m = if i == 0 { rng.gen_range(0.1..0.9) } else { rng.gen_range(1.1..3.0) };
                        if rng.gen_bool(0.5) { m } else { -m }
                    })
                    .collect();
                let t = sample_transform(d, rng.gen(), 1);
                t.mul(&Matrix::diag(&lam)).mul(&t.inverse().expect("sampled transforms are invertible"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub d: usize,
    pub n_samples: usize,
    pub found: usize,
    pub fraction: f64,
    /// 95% Wilson score interval for the fraction.
    pub wilson_low: f64,
    pub wilson_high: f64,
}

pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let denom = 1.0 + Z * Z / n_f;
    let center = (p + Z * Z / (2.0 * n_f)) / denom;
    let half = Z * (p * (1.0 - p) / n_f + Z * Z / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Fraction of seeded random matrices for which `search_structure` succeeds.
pub fn density_experiment(
    d: usize,
    n_samples: usize,
    budget: usize,
    seed: u64,
    family: MatrixFamily,
    kind: LinearKind,
) -> Result<DensityReport> {
    if !(2..=4).contains(&d) {
        return Err(Error::Precondition(format!("dimension must be 2, 3 or 4, got {d}")));
    }
    if n_samples == 0 {
        return Err(Error::Precondition("fraction is undefined for zero samples".into()));
    }
    let hits = (0..n_samples)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(seed, i as u64, 0xde));
            let a = family.sample(d, &mut rng);
            Ok(search_structure(&a, kind, budget, cell_seed(seed, i as u64, 1))?.is_some())
        })
        .collect::<Result<Vec<bool>>>()?;
    let found = hits.iter().filter(|&&h| h).count();
    let (wilson_low, wilson_high) = wilson_interval(found, n_samples);
    Ok(DensityReport { d, n_samples, found, fraction: found as f64 / n_samples as f64, wilson_low, wilson_high })
}
