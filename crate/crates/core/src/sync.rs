//! Finite-horizon synchronization trials.
//!
//! Two copies of the slave system are driven by the same sequence and the
//! Euclidean distance between their response coordinates is tracked. A trial
//! is *synchronizing* when every pair ends below `delta_sync`, and
//! *non-synchronizing* when some pair stays above `delta_fail` over the last
//! tenth of the run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::structure::{slave_flow_into, slave_step, slave_step_into, DriveSequence, ProductStructure, SlaveBuffers};
use crate::systems::{IntegratorConfig, LorenzSystem, Rk4, System};
use crate::{cell_seed, linalg::norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub n_steps: usize,
    pub n_pairs: usize,
    /// Per response coordinate [lo, hi] for initial conditions.
    pub init_box: Vec<(f64, f64)>,
    #[serde(default = "default_delta_sync")]
    pub delta_sync: f64,
    #[serde(default = "default_delta_fail")]
    pub delta_fail: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta_sync() -> f64 {
    1e-8
}

fn default_delta_fail() -> f64 {
    1e-2
}

impl TrialConfig {
    pub fn new(n_steps: usize, n_pairs: usize, init_box: Vec<(f64, f64)>, seed: u64) -> Self {
        TrialConfig { n_steps, n_pairs, init_box, delta_sync: 1e-8, delta_fail: 1e-2, seed }
    }

    pub fn validate(&self, response_dim: usize) -> Result<()> {
        if self.n_steps < 1 || self.n_pairs < 1 {
            return Err(Error::Invalid("n_steps and n_pairs must be at least 1".into()));
        }
        if !(self.delta_sync < self.delta_fail) {
            return Err(Error::Invalid("delta_sync must be below delta_fail".into()));
        }
        check_dim(response_dim, self.init_box.len())?;
        if self.init_box.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::Invalid("init_box intervals must be finite with lo ≤ hi".into()));
        }
        Ok(())
    }

    fn draw_pair(&self, source: usize, pair: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(self.seed, source as u64, pair as u64));
        let mut draw = || self.init_box.iter().map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..hi) }).collect::<Vec<f64>>();
        let a = draw();
        let b = draw();
        (a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Synchronizing,
    NonSynchronizing,
    Inconclusive,
}

/// Summary of one pair's distance series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvidence {
    /// Orbit start or generator index.
    pub source: usize,
    pub pair: usize,
    pub initial_distance: f64,
    pub final_distance: f64,
    /// Minimum distance over the last 10% of steps.
    pub tail_min: f64,
    pub diverged: bool,
}

/// A drive that could not be used (its master orbit left the finite range).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedDrive {
    pub source: usize,
    pub last_valid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncVerdict {
    pub verdict: Verdict,
    pub worst_final_distance: f64,
    pub evidence: Vec<PairEvidence>,
    pub excluded: Vec<ExcludedDrive>,
}

/// Distance series with full history, as written to CSV by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSeries {
    pub source: usize,
    pub pair: usize,
    pub distances: Vec<f64>,
    pub diverged: bool,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Iterates the slave from `y0` under `drive` (length ≥ n + 1 for flows, ≥ n for maps),
/// calling `visit` on every state including the initial one.
fn drive_slave(
    system: &System,
    s: &ProductStructure,
    drive: &[Vec<f64>],
    y0: &[f64],
    n: usize,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let mut y = y0.to_vec();
    visit(0, &y);
    let mut rk = Rk4::new(y.len());
    let mut buf = SlaveBuffers::new(s.dim());
    for k in 0..n {
        match system {
            System::Map(m) => slave_step_into(m.as_ref(), s, &drive[k], &mut y, &mut buf),
            System::Flow(f) => slave_flow_into(f, s, &drive[k], &drive[k + 1], &mut y, &mut rk),
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { last_valid: k });
        }
        visit(k + 1, &y);
    }
    Ok(())
}

fn check_system(system: &System, s: &ProductStructure) -> Result<()> {
    check_dim(system.dim(), s.dim())
}

/// Distance series d_N(Y₁(n), Y₂(n)) for n = 0..=steps under a common drive.
pub fn run_pair(
    system: &System,
    structure: &ProductStructure,
    drive: &DriveSequence,
    y1_0: &[f64],
    y2_0: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    check_system(system, structure)?;
    check_dim(structure.drive_dim(), drive.dim())?;
    check_dim(structure.response_dim(), y1_0.len())?;
    check_dim(structure.response_dim(), y2_0.len())?;
    let values = drive.values_at(steps + 1, system.sample_interval())?;
    pair_distances(system, structure, &values, y1_0, y2_0, steps)
}

fn pair_distances(
    system: &System,
    s: &ProductStructure,
    drive: &[Vec<f64>],
    y1: &[f64],
    y2: &[f64],
    steps: usize,
) -> Result<Vec<f64>> {
    let m = y1.len();
    let mut first = Vec::with_capacity(m * (steps + 1));
    drive_slave(system, s, drive, y1, steps, |_, y| first.extend_from_slice(y))?;
    let mut out = Vec::with_capacity(steps + 1);
    drive_slave(system, s, drive, y2, steps, |k, y| out.push(distance(&first[k * m..(k + 1) * m], y)))?;
    Ok(out)
}

fn summarize(source: usize, pair: usize, series: &[f64], diverged: bool) -> PairEvidence {
    if diverged {
        return PairEvidence {
            source,
            pair,
            initial_distance: series.first().copied().unwrap_or(f64::NAN),
            final_distance: f64::INFINITY,
            tail_min: f64::INFINITY,
            diverged,
        };
    }
    let n = series.len() - 1;
    let tail_start = n - n / 10;
    let tail_min = series[tail_start..].iter().cloned().fold(f64::INFINITY, f64::min);
    PairEvidence { source, pair, initial_distance: series[0], final_distance: series[n], tail_min, diverged }
}

fn decide(cfg: &TrialConfig, evidence: Vec<PairEvidence>, excluded: Vec<ExcludedDrive>) -> SyncVerdict {
    let worst = evidence.iter().map(|e| e.final_distance).fold(0.0, f64::max);
    let verdict = if evidence.is_empty() {
        Verdict::Inconclusive
    } else if evidence.iter().all(|e| e.final_distance < cfg.delta_sync) {
        Verdict::Synchronizing
    } else if evidence.iter().any(|e| e.tail_min > cfg.delta_fail) {
        Verdict::NonSynchronizing
    } else {
        Verdict::Inconclusive
    };
    SyncVerdict { verdict, worst_final_distance: worst, evidence, excluded }
}

/// Runs every (drive, pair) cell; a slave blow-up counts as a failing pair.
fn run_cells(
    system: &System,
    s: &ProductStructure,
    cfg: &TrialConfig,
    drives: &[(usize, Vec<Vec<f64>>)],
) -> Vec<PairSeries> {
    let cells: Vec<(usize, usize)> =
        drives.iter().enumerate().flat_map(|(d, _)| (0..cfg.n_pairs).map(move |p| (d, p))).collect();
    cells
        .par_iter()
        .map(|&(d, p)| {
            let (source, values) = &drives[d];
            let (y1, y2) = cfg.draw_pair(*source, p);
            match pair_distances(system, s, values, &y1, &y2, cfg.n_steps) {
                Ok(distances) => PairSeries { source: *source, pair: p, distances, diverged: false },
                Err(_) => PairSeries { source: *source, pair: p, distances: vec![distance(&y1, &y2)], diverged: true },
            }
        })
        .collect()
}

/// Series for every pair of an orbit-driven trial (for CSV output).
pub fn sync_series(
    system: &System,
    structure: &ProductStructure,
    cfg: &TrialConfig,
    orbit_starts: &[Vec<f64>],
) -> Result<(Vec<PairSeries>, Vec<ExcludedDrive>)> {
    check_system(system, structure)?;
    cfg.validate(structure.response_dim())?;
    if orbit_starts.is_empty() {
        return Err(Error::Precondition("orbit_starts must be nonempty".into()));
    }
    let mut drives = Vec::new();
    let mut excluded = Vec::new();
    for (i, x0) in orbit_starts.iter().enumerate() {
        let (traj, diverged) = system.orbit_partial(x0, cfg.n_steps)?;
        if diverged {
            excluded.push(ExcludedDrive { source: i, last_valid: traj.len() - 1 });
            continue;
        }
        drives.push((i, traj.states.iter().map(|p| structure.drive_of(p)).collect()));
    }
    Ok((run_cells(system, structure, cfg, &drives), excluded))
}

/// m-synchronization trial: drives are projections of master orbits.
pub fn sync_test(
    system: &System,
    structure: &ProductStructure,
    cfg: &TrialConfig,
    orbit_starts: &[Vec<f64>],
) -> Result<SyncVerdict> {
    let (series, excluded) = sync_series(system, structure, cfg, orbit_starts)?;
    Ok(verdict_from_series(cfg, &series, excluded))
}

pub fn verdict_from_series(cfg: &TrialConfig, series: &[PairSeries], excluded: Vec<ExcludedDrive>) -> SyncVerdict {
    let evidence = series.iter().map(|s| summarize(s.source, s.pair, &s.distances, s.diverged)).collect();
    decide(cfg, evidence, excluded)
}

/// Series for every pair of an arbitrary-drive trial.
pub fn absolute_sync_series(
    system: &System,
    structure: &ProductStructure,
    cfg: &TrialConfig,
    generators: &[DriveSequence],
) -> Result<Vec<PairSeries>> {
    check_system(system, structure)?;
    cfg.validate(structure.response_dim())?;
    if generators.is_empty() {
        return Err(Error::Precondition("need at least one drive generator".into()));
    }
    let drives = generators
        .iter()
        .enumerate()
        .map(|(i, g)| {
            check_dim(structure.drive_dim(), g.dim())?;
            Ok((i, g.values_at(cfg.n_steps + 1, system.sample_interval())?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(run_cells(system, structure, cfg, &drives))
}

/// Absolute synchronization trial: drives come from arbitrary generators.
pub fn absolute_sync_test(
    system: &System,
    structure: &ProductStructure,
    cfg: &TrialConfig,
    generators: &[DriveSequence],
) -> Result<SyncVerdict> {
    let series = absolute_sync_series(system, structure, cfg, generators)?;
    Ok(verdict_from_series(cfg, &series, Vec::new()))
}

/// Floor applied to the per-step log growth when the tangent collapses.
pub const LYAPUNOV_FLOOR: f64 = -50.0;

/// Largest conditional Lyapunov exponent of the response along the driven
/// trajectory of `orbit_start`, per unit time. Tangents are propagated with
/// central differences (step 1e-6) and renormalized each step.
pub fn conditional_lyapunov(system: &System, structure: &ProductStructure, orbit_start: &[f64], n: usize) -> Result<f64> {
    check_system(system, structure)?;
    if n < 1000 {
        return Err(Error::Precondition(format!("need at least 1000 steps, got {n}")));
    }
    const H: f64 = 1e-6;
    let (traj, diverged) = system.orbit_partial(orbit_start, n)?;
    if diverged {
        return Err(Error::Diverged { last_valid: traj.len() - 1 });
    }
    let drive: Vec<Vec<f64>> = traj.states.iter().map(|p| structure.drive_of(p)).collect();
    let k = structure.response_dim();
    let unit = || vec![1.0 / (k as f64).sqrt(); k];
    let mut y = structure.response_of(orbit_start);
    let mut v = unit();
    let mut rk = Rk4::new(k);
    let mut step = |i: usize, y: &[f64]| -> Vec<f64> {
        match system {
            System::Map(m) => slave_step(m.as_ref(), structure, &drive[i], y).expect("dimensions checked"),
            System::Flow(f) => {
                let mut out = y.to_vec();
                slave_flow_into(f, structure, &drive[i], &drive[i + 1], &mut out, &mut rk);
                out
            }
        }
    };
    let mut total = 0.0;
    for i in 0..n {
        let plus: Vec<f64> = y.iter().zip(&v).map(|(a, b)| a + H * b).collect();
        let minus: Vec<f64> = y.iter().zip(&v).map(|(a, b)| a - H * b).collect();
        let (fp, fm) = (step(i, &plus), step(i, &minus));
        let w: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * H)).collect();
        let nw = norm(&w);
        if nw < 1e-300 || !nw.is_finite() {
            total += LYAPUNOV_FLOOR;
            v = unit();
        } else {
            total += nw.ln().max(LYAPUNOV_FLOOR);
            v = w.into_iter().map(|a| a / nw).collect();
        }
        y = step(i, &y);
        if y.iter().any(|a| !a.is_finite()) {
            return Err(Error::Diverged { last_valid: i });
        }
    }
    Ok(total / (n as f64 * system.sample_interval()))
}

/// A scalar drive signal x(t) evaluated by linear interpolation of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolatedSignal {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl InterpolatedSignal {
    pub fn eval(&self, t: f64) -> f64 {
        let u = (t / self.dt).max(0.0);
        let i = (u.floor() as usize).min(self.values.len() - 1);
        if i + 1 >= self.values.len() {
            return self.values[self.values.len() - 1];
        }
        let w = u - i as f64;
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }
}

/// x-component of a Lorenz master trajectory, sampled every integrator step.
pub fn lorenz_master_signal(sys: &LorenzSystem, x0: [f64; 3], t_end: f64, cfg: &IntegratorConfig) -> Result<InterpolatedSignal> {
    let traj = crate::systems::integrate(sys, &x0, t_end, cfg)?;
    Ok(InterpolatedSignal { dt: cfg.h, values: traj.states.iter().map(|s| s[0]).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzTrial {
    pub times: Vec<f64>,
    /// Euclidean distance between the two response states.
    pub error: Vec<f64>,
    /// V = (Y₁ − Y₂)² + (Z₁ − Z₂)².
    pub lyapunov_v: Vec<f64>,
}

/// Integrates two copies of the Lorenz response Ẏ = r·x(t) − Y − x(t)·Z,
/// Ż = x(t)·Y − b·Z under the same drive.
pub fn lorenz_response_trial(
    sys: &LorenzSystem,
    drive: &dyn Fn(f64) -> f64,
    first: [f64; 2],
    second: [f64; 2],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<LorenzTrial> {
    let n = cfg.steps_for(t_end)?;
    let mut state = [first[0], first[1], second[0], second[1]];
    let mut rk = Rk4::new(4);
    let mut rhs = |t: f64, s: &[f64], out: &mut [f64]| {
        let x = drive(t);
        for c in 0..2 {
            let (y, z) = (s[2 * c], s[2 * c + 1]);
            out[2 * c] = sys.r * x - y - x * z;
            out[2 * c + 1] = x * y - sys.b * z;
        }
    };
    let record = |s: &[f64; 4], out: &mut LorenzTrial, t: f64| {
        let v = (s[0] - s[2]).powi(2) + (s[1] - s[3]).powi(2);
        out.times.push(t);
        out.lyapunov_v.push(v);
        out.error.push(v.sqrt());
    };
    let mut trial = LorenzTrial { times: Vec::with_capacity(n + 1), error: Vec::with_capacity(n + 1), lyapunov_v: Vec::with_capacity(n + 1) };
    record(&state, &mut trial, 0.0);
    for i in 0..n {
        let t = i as f64 * cfg.h;
        rk.step(&mut rhs, t, &mut state, cfg.h);
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { last_valid: i });
        }
        record(&state, &mut trial, t + cfg.h);
    }
    Ok(trial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::systems::{HenonMap, LinearKind, LinearSystem, PlanarPolarMap};
    use crate::structure::GeneratorKind;

    fn linear(rows: &[[f64; 2]]) -> System {
        System::map(LinearSystem::new(Matrix::from_rows(rows).unwrap(), LinearKind::Map).unwrap())
    }

    #[test]
    fn henon_pairs_collapse_after_one_step() {
        let sys = System::map(HenonMap::default());
        let s = ProductStructure::identity(2, &[1]).unwrap();
        let drive = DriveSequence::Generator { seed: 3, dim: 1, kind: GeneratorKind::IidUniform { lo: -2.0, hi: 2.0 } };
        let d = run_pair(&sys, &s, &drive, &[5.0], &[-7.0], 20).unwrap();
        assert_eq!(d[0], 12.0);
        assert!(d[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_error_dynamics() {
        let sys = linear(&[[2.0, 0.0], [0.3, 0.5]]);
        let s = ProductStructure::identity(2, &[0]).unwrap();
        let drive = DriveSequence::Constant(vec![1.0]);
        let d = run_pair(&sys, &s, &drive, &[1.0], &[0.0], 10).unwrap();
        for (n, dn) in d.iter().enumerate() {
            assert!((dn - 0.5f64.powi(n as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_linear_verdicts() {
        let s = ProductStructure::identity(2, &[0]).unwrap();
        let cfg = TrialConfig::new(200, 4, vec![(-1.0, 1.0)], 9);
        let v = sync_test(&linear(&[[2.0, 0.0], [0.0, 0.5]]), &s, &cfg, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(v.verdict, Verdict::Synchronizing);
        let v = sync_test(&linear(&[[0.5, 0.0], [0.0, 2.0]]), &s, &cfg, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(v.verdict, Verdict::NonSynchronizing);
        assert!(v.evidence.iter().all(|e| e.diverged || e.tail_min > 1e-2));
    }

    #[test]
    fn verdict_invariant() {
        let s = ProductStructure::identity(2, &[1]).unwrap();
        let cfg = TrialConfig::new(100, 3, vec![(-1.0, 1.0)], 1);
        let v = sync_test(&System::map(HenonMap::default()), &s, &cfg, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(v.verdict, Verdict::Synchronizing);
        assert!(v.worst_final_distance < cfg.delta_sync);
    }

    #[test]
    fn diverging_master_is_excluded() {
        let s = ProductStructure::identity(2, &[1]).unwrap();
        let cfg = TrialConfig::new(200, 2, vec![(-1.0, 1.0)], 1);
        let v = sync_test(&System::map(HenonMap::default()), &s, &cfg, &[vec![10.0, 10.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(v.excluded.len(), 1);
        assert_eq!(v.excluded[0].source, 0);
        assert_eq!(v.verdict, Verdict::Synchronizing);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrialConfig::new(10, 1, vec![(0.0, 1.0)], 0);
        cfg.delta_sync = 1.0;
        assert!(cfg.validate(1).is_err());
        let cfg = TrialConfig::new(0, 1, vec![(0.0, 1.0)], 0);
        assert!(cfg.validate(1).is_err());
        assert!(TrialConfig::new(10, 1, vec![(0.0, 1.0)], 0).validate(2).is_err());
    }

    #[test]
    fn polar_pair_does_not_synchronize() {
        let sys = System::map(PlanarPolarMap::default());
        let s = ProductStructure::identity(2, &[0]).unwrap();
        let d = run_pair(&sys, &s, &DriveSequence::Constant(vec![0.0]), &[1.0], &[2.0], 10_000).unwrap();
        assert!(d.iter().all(|&x| (x - 1.0).abs() < 1e-12), "min distance {}", d.iter().cloned().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn lyapunov_floor_for_henon() {
        let s = ProductStructure::identity(2, &[1]).unwrap();
        let l = conditional_lyapunov(&System::map(HenonMap::default()), &s, &[0.0, 0.0], 1000).unwrap();
        assert_eq!(l, LYAPUNOV_FLOOR);
        assert!(conditional_lyapunov(&System::map(HenonMap::default()), &s, &[0.0, 0.0], 999).is_err());
    }

    #[test]
    fn lyapunov_of_linear_block() {
        let s = ProductStructure::identity(2, &[0]).unwrap();
        let l = conditional_lyapunov(&linear(&[[1.5, 0.2], [0.4, 0.7]]), &s, &[0.0, 0.0], 2000).unwrap();
        assert!((l - 0.7f64.ln()).abs() < 1e-3, "{l}");
    }

    #[test]
    fn identical_lorenz_pairs_stay_identical() {
        let sys = LorenzSystem::default();
        let tr = lorenz_response_trial(&sys, &|t: f64| t.sin(), [1.0, 2.0], [1.0, 2.0], 1.0, &IntegratorConfig::default()).unwrap();
        assert!(tr.error.iter().all(|&e| e == 0.0));
        assert_eq!(tr.error.len(), 1001);
    }

    #[test]
    fn interpolated_signal() {
        let s = InterpolatedSignal { dt: 0.5, values: vec![0.0, 1.0, 3.0] };
        assert_eq!(s.eval(0.25), 0.5);
        assert_eq!(s.eval(0.75), 2.0);
        assert_eq!(s.eval(10.0), 3.0);
    }
}
