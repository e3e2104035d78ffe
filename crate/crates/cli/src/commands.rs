//! Subcommand configs and their execution.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use synclab_core::annulus::{condition_r_report, curve_iterates, type_report, AnnulusAdapter, TypeCheckConfig};
use synclab_core::certify::{
    certify, estimate_critical_epsilon, make_perturbation, perturbation_sweep, rotated_structures, shear_structures, slave_section,
    CertificateVerdict, CertifyConfig, Direction, PerturbationSpec, PerturbedMap,
};
use synclab_core::config::SystemConfig;
use synclab_core::linalg::Matrix;
use synclab_core::linear::{decide, density_experiment, search_structure, MatrixFamily};
use synclab_core::structure::{DriveSequence, GeneratorKind, ProductStructure};
use synclab_core::sync::{absolute_sync_series, conditional_lyapunov, sync_series, verdict_from_series, TrialConfig};
use synclab_core::systems::{integrate_partial, LinearKind, PlaneMap, System};

use crate::output::{f, load_config, OutputDir, RunManifest, Table, MANIFEST_NAME};
use crate::svg::{Plot, Series};
use crate::{Cli, Command, Failure};

type CmdResult<T> = std::result::Result<T, Failure>;

/// What a command produced, for the manifest.
struct Outcome {
    summary: Value,
    diverged: Option<String>,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, diverged: None }
    }
}

fn parse_config<T: DeserializeOwned + Serialize>(cli: &Cli, name: &str) -> CmdResult<(T, Value)> {
    let path = cli.global.config.as_ref().ok_or_else(|| Failure::Config(format!("`{name}` needs --config <path>")))?;
    let mut value = load_config(path, name)?;
    if let Some(seed) = cli.global.seed {
        if let Value::Object(m) = &mut value {
            m.insert("seed".into(), json!(seed));
        }
    }
    let cfg: T = serde_json::from_value(value).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    // echo the resolved config (defaults filled in) so that replays are exact
    let echo = serde_json::to_value(&cfg).map_err(|e| Failure::Other(e.into()))?;
    Ok((cfg, echo))
}

pub fn dispatch(cli: &Cli, start: Instant) -> CmdResult<()> {
    let name = cli.command.name();
    if let Command::Plot(args) = &cli.command {
        return plot(args, &cli.global.out);
    }
    let mut out = OutputDir::create(&cli.global.out)?;
    let (outcome, echo) = match &cli.command {
        Command::Orbit => run_with::<OrbitConfig>(cli, name, &mut out, orbit)?,
        Command::Integrate => run_with::<IntegrateConfig>(cli, name, &mut out, integrate)?,
        Command::SyncTest => run_with::<SyncConfig>(cli, name, &mut out, sync_test)?,
        Command::Lyapunov => run_with::<LyapunovConfig>(cli, name, &mut out, lyapunov)?,
        Command::Linsync => run_with::<LinsyncConfig>(cli, name, &mut out, linsync)?,
        Command::Annulus => run_with::<AnnulusConfig>(cli, name, &mut out, annulus)?,
        Command::Certify => run_with::<CertifyRunConfig>(cli, name, &mut out, certify_cmd)?,
        Command::PerturbSweep => run_with::<SweepConfig>(cli, name, &mut out, perturb_sweep)?,
        Command::Plot(_) => unreachable!(),
    };
    let mut manifest = RunManifest::new(name, echo);
    manifest.outputs = out.written.clone();
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.diverged = outcome.diverged.is_some();
    manifest.summary = outcome.summary;
    out.write_json(MANIFEST_NAME, &manifest)?;
    match outcome.diverged {
        Some(msg) => Err(Failure::Diverged(msg)),
        None => Ok(()),
    }
}

fn run_with<T: DeserializeOwned + Serialize>(
    cli: &Cli,
    name: &str,
    out: &mut OutputDir,
    body: fn(&T, &mut OutputDir) -> CmdResult<Outcome>,
) -> CmdResult<(Outcome, Value)> {
    let (cfg, echo) = parse_config::<T>(cli, name)?;
    Ok((body(&cfg, out)?, echo))
}

/// A product structure: `drive` indices, with an optional linear transform,
/// offset, or rotation angle (planar only).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    pub drive: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<f64>,
}

impl StructureSpec {
    fn build(&self, dim: usize) -> CmdResult<ProductStructure> {
        let transform = match (&self.transform, self.rotation) {
            (Some(_), Some(_)) => return Err(Failure::Config("give either transform or rotation, not both".into())),
            (Some(t), None) => t.clone(),
            (None, Some(phi)) => {
                if dim != 2 {
                    return Err(Failure::Config("rotation structures are planar".into()));
                }
                ProductStructure::rotation(phi).transform().clone()
            }
            (None, None) => Matrix::identity(dim),
        };
        let offset = self.offset.clone().unwrap_or_else(|| vec![0.0; dim]);
        Ok(ProductStructure::new(transform, offset, self.drive.clone())?)
    }
}

fn default_plot_pair() -> Option<[usize; 2]> {
    None
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub system: SystemConfig,
    pub x0: Vec<f64>,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// State components to draw as a phase portrait.
    #[serde(default = "default_plot_pair")]
    pub plot: Option<[usize; 2]>,
}

fn state_table(first: &str, states: &[Vec<f64>], dim: usize, label: impl Fn(usize) -> String) -> Table {
    let mut header = vec![first.to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    let mut t = Table { header, rows: Vec::with_capacity(states.len()) };
    for (i, s) in states.iter().enumerate() {
        let mut row = vec![label(i)];
        row.extend(s.iter().map(|&v| f(v)));
        t.push(row);
    }
    t
}

fn phase_plot(out: &mut OutputDir, name: &str, title: &str, states: &[Vec<f64>], pair: [usize; 2]) -> CmdResult<()> {
    let dim = states.first().map_or(0, Vec::len);
    if pair.iter().any(|&i| i >= dim) {
        return Err(Failure::Config(format!("plot components {pair:?} out of range for dimension {dim}")));
    }
    let plot = Plot {
        title: title.into(),
        x_label: format!("x{}", pair[0]),
        y_label: format!("x{}", pair[1]),
        series: vec![Series { name: "trajectory".into(), points: states.iter().map(|s| (s[pair[0]], s[pair[1]])).collect() }],
        equal_aspect: true,
    };
    out.write_bytes(name, plot.render().as_bytes())?;
    Ok(())
}

fn orbit(cfg: &OrbitConfig, out: &mut OutputDir) -> CmdResult<Outcome> {
    let sys = cfg.system.build()?;
    let (traj, diverged) = sys.orbit_partial(&cfg.x0, cfg.n)?;
    out.write_table("orbit.csv", &state_table("n", &traj.states, sys.dim(), |i| i.to_string()))?;
    if let Some(pair) = cfg.plot {
        phase_plot(out, "orbit.svg", "orbit", &traj.states, pair)?;
    }
    let summary = json!({ "rows": traj.len(), "diverged": diverged });
    Ok(Outcome {
        summary,
        diverged: diverged.then(|| format!("orbit left the finite range after {} steps", traj.len() - 1)),
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    pub system: SystemConfig,
    pub x0: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_plot_pair")]
    pub plot: Option<[usize; 2]>,
}

fn integrate(cfg: &IntegrateConfig, out: &mut OutputDir) -> CmdResult<Outcome> {
    let System::Flow(flow) = cfg.system.build()? else {
        return Err(Failure::Config("integrate needs a flow (lorenz or a linear flow)".into()));
    };
    let (traj, diverged) = integrate_partial(flow.field.as_ref(), &cfg.x0, cfg.t_end, &flow.integrator)?;
    let h = flow.integrator.h;
    out.write_table("trajectory.csv", &state_table("t", &traj.states, flow.field.dim(), |i| f(i as f64 * h)))?;
    if let Some(pair) = cfg.plot {
        phase_plot(out, "trajectory.svg", "trajectory", &traj.states, pair)?;
    }
    Ok(Outcome {
        summary: json!({ "rows": traj.len(), "diverged": diverged }),
        diverged: diverged.then(|| format!("integration left the finite range after {} steps", traj.len() - 1)),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Drives are projections of master orbits.
    #[default]
    Orbit,
    /// Drives come from the listed generators.
    Absolute,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveSpec {
    Generator { seed: u64, generator: GeneratorKind },
    Constant { values: Vec<f64> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncConfig {
    pub system: SystemConfig,
    pub structure: StructureSpec,
    pub n_steps: usize,
    pub n_pairs: usize,
    pub init_box: Vec<(f64, f64)>,
    #[serde(default = "default_delta_sync")]
    pub delta_sync: f64,
    #[serde(default = "default_delta_fail")]
    pub delta_fail: f64,
    #[serde(default)]
    pub mode: SyncMode,
    #[serde(default)]
    pub orbit_starts: Vec<Vec<f64>>,
    #[serde(default)]
    pub drives: Vec<DriveSpec>,
    /// Write every k-th step of each distance series.
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta_sync() -> f64 {
    1e-8
}
fn default_delta_fail() -> f64 {
    1e-2
}
fn one() -> usize {
    1
}

fn sync_test(cfg: &SyncConfig, out: &mut OutputDir) -> CmdResult<Outcome> {
    let sys = cfg.system.build()?;
    let s = cfg.structure.build(sys.dim())?;
    let trial = TrialConfig {
        n_steps: cfg.n_steps,
        n_pairs: cfg.n_pairs,
        init_box: cfg.init_box.clone(),
        delta_sync: cfg.delta_sync,
        delta_fail: cfg.delta_fail,
        seed: cfg.seed,
    };
    let (series, excluded) = match cfg.mode {
        SyncMode::Orbit => {
            let starts = if cfg.orbit_starts.is_empty() { vec![vec![0.0; sys.dim()]] } else { cfg.orbit_starts.clone() };
            sync_series(&sys, &s, &trial, &starts)?
        }
        SyncMode::Absolute => {
            if cfg.drives.is_empty() {
                return Err(Failure::Config("absolute mode needs at least one entry in `drives`".into()));
            }
            let gens: Vec<DriveSequence> = cfg
                .drives
                .iter()
                .map(|d| match d {
                    DriveSpec::Generator { seed, generator } => {
                        DriveSequence::Generator { seed: *seed, dim: s.drive_dim(), kind: generator.clone() }
                    }
                    DriveSpec::Constant { values } => DriveSequence::Constant(values.clone()),
                })
                .collect();
            (absolute_sync_series(&sys, &s, &trial, &gens)?, Vec::new())
        }
    };
    let every = cfg.record_every.max(1);
    let mut table = Table::new(&["pair_id", "source", "pair", "n", "distance"]);
    for (id, ps) in series.iter().enumerate() {
        for (n, d) in ps.distances.iter().enumerate() {
            if n % every == 0 || n + 1 == ps.distances.len() {
                table.push(vec![id.to_string(), ps.source.to_string(), ps.pair.to_string(), n.to_string(), f(*d)]);
            }
        }
    }
    out.write_table("sync.csv", &table)?;
    let verdict = verdict_from_series(&trial, &series, excluded);
    out.write_json("sync.json", &verdict)?;
    Ok(Outcome::ok(json!({
        "verdict": verdict.verdict,
        "worst_final_distance": verdict.worst_final_distance,
        "excluded_drives": verdict.excluded.len(),
    })))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub system: SystemConfig,
    pub structure: StructureSpec,
    pub orbit_start: Vec<f64>,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn lyapunov(cfg: &LyapunovConfig, out: &mut OutputDir) -> CmdResult<Outcome> {
    let sys = cfg.system.build()?;
    let s = cfg.structure.build(sys.dim())?;
    let exponent = conditional_lyapunov(&sys, &s, &cfg.orbit_start, cfg.n)?;
    let report = json!({ "exponent": exponent, "steps": cfg.n, "per_unit_time": sys.sample_interval() != 1.0 });
    out.write_json("lyapunov.json", &report)?;
    Ok(Outcome::ok(json!({ "exponent": exponent })))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    pub budget: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub d: usize,
    pub n_samples: usize,
    pub budget: usize,
    #[serde(default)]
    pub family: MatrixFamily,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinsyncConfig {
    pub matrix: Matrix,
    pub kind: LinearKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<StructureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySpec>,
    #[serde(default)]
    pub seed: u64,
}

fn linsync(cfg: &LinsyncConfig, out: &mut OutputDir) -> CmdResult<Outcome> {
    if !cfg.matrix.is_square() {
        return Err(Failure::Config("matrix must be square".into()));
    }
    let d = cfg.matrix.rows();
    let structure = match &cfg.structure {
        Some(s) => s.build(d)?,
        None => ProductStructure::identity(d, &[0])?,
    };
    let report = decide(&cfg.matrix, &structure, cfg.kind)?;
    let search = match &cfg.search {
        Some(sp) => Some(search_structure(&cfg.matrix, cfg.kind, sp.budget, cfg.seed)?),
        None => None,
    };
    let density = match &cfg.density {
        Some(ds) => Some(density_experiment(ds.d, ds.n_samples, ds.budget, cfg.seed, ds.family, cfg.kind)?),
        None => None,
    };
    let doc = json!({ "report": report, "search": search, "density": density });
    out.write_json("linsync.json", &doc)?;
    Ok(Outcome::ok(json!({
        "synchronizable": report.synchronizable,
        "criterion_value": report.criterion_value,
        "borderline": report.borderline,
        "search_found": search.as_ref().map(|s| s.is_some()),
        "density_fraction": density.as_ref().map(|d| d.fraction),
    })))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnulusConfig {
    pub system: SystemConfig,
    pub annuli: Vec<(f64, f64)>,
    /// Radius of the test curve per annulus (default: the middle circle).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_radius: Option<Vec<f64>>,
    /// Cap on iterations for the accumulation test (default scales with 1/μ).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_iter: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    #[serde(default)]
    pub svg: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_tol() -> f64 {
    1e-3
}
fn default_grid() -> usize {
    1024
}

fn annulus(cfg: &AnnulusConfig, out: &mut OutputDir) -> CmdResult<Outcome> {
    let map = cfg.system.plane_map()?;
    if cfg.annuli.is_empty() {
        return Err(Failure::Config("need at least one annulus".into()));
    }
    let mut check = match (&cfg.system, cfg.n_iter) {
        (_, Some(n)) => TypeCheckConfig { n_iter: n, tol: cfg.tol, grid_n: cfg.grid_n },
        (SystemConfig::Polar { mu, .. }, None) => TypeCheckConfig::scaled(*mu, cfg.tol),
        _ => return Err(Failure::Config("n_iter is required for non-polar maps".into())),
    };
    check.grid_n = cfg.grid_n;
    let radii = match &cfg.curve_radius {
        Some(r) if r.len() != cfg.annuli.len() => return Err(Failure::Config("one curve radius per annulus".into())),
        Some(r) => r.clone(),
        None => cfg.annuli.iter().map(|(a, b)| 0.5 * (a + b)).collect(),
    };
    let mut reports = Vec::new();
    for (&(a, b), &c) in cfg.annuli.iter().zip(&radii) {
        let adapter = AnnulusAdapter::new(map.clone(), a, b)?;
        reports.push(type_report(&adapter, c, &check)?);
    }
    let condition_r = if cfg.annuli.len() == 2 {
        Some(condition_r_report(&map, [cfg.annuli[0], cfg.annuli[1]], &check)?.overall)
    } else {
        None
    };
    if cfg.svg {
        let (a, b) = cfg.annuli[0];
        let adapter = AnnulusAdapter::new(map.clone(), a, b)?;
        let stride = (check.n_iter / 2000).max(1);
        let curves = curve_iterates(&adapter, radii[0], 6, stride);
        let mut series: Vec<Series> = curves
            .iter()
            .enumerate()
            .map(|(i, c)| Series {
                name: if i == 0 { "C".into() } else { format!("F^{}(C)", i * stride) },
                points: c.iter().chain(c.first()).map(|p| (p[0], p[1])).collect(),
            })
            .collect();
        for r in [a, b] {
            let circle: Vec<(f64, f64)> = (0..=256).map(|j| {
                let t = 2.0 * PI * j as f64 / 256.0;
                (r * t.cos(), r * t.sin())
            }).collect();
            series.push(Series { name: format!("r = {r}"), points: circle });
        }
        let plot = Plot { title: format!("annulus [{a}, {b}]"), x_label: "x".into(), y_label: "y".into(), series, equal_aspect: true };
        out.write_bytes("annulus.svg", plot.render().as_bytes())?;
    }
    let doc = json!({ "reports": reports, "condition_r": condition_r });
    out.write_json("annulus.json", &doc)?;
    let types: Vec<Value> = reports
        .iter()
        .map(|r| json!({ "annulus": [r.r_in, r.r_out], "type_p": r.type_p, "type_q": r.type_q }))
        .collect();
    Ok(Outcome::ok(json!({ "annuli": types, "condition_r": condition_r })))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureFamily {
    /// Rotations by kπ/n for k = 0..=n (0 gives the identity alone).
    #[serde(default = "twelve")]
    pub rotations: usize,
    #[serde(default)]
    pub shears: usize,
    #[serde(default)]
    pub extra: Vec<StructureSpec>,
}

impl Default for StructureFamily {
    fn default() -> Self {
        StructureFamily { rotations: 12, shears: 0, extra: Vec::new() }
    }
}

fn twelve() -> usize {
    12
}

impl StructureFamily {
    fn build(&self, seed: u64) -> CmdResult<Vec<ProductStructure>> {
        let mut v = rotated_structures(self.rotations);
        v.extend(shear_structures(seed, self.shears));
        for s in &self.extra {
            v.push(s.build(2)?);
        }
        Ok(v)
    }
}

fn default_window() -> (f64, f64) {
    (0.0, 5.0)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyRunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub structures: StructureFamily,
    #[serde(default = "default_window")]
    pub window: (f64, f64),
    #[serde(default)]
    pub certify: CertifyConfig,
    /// Certify F + η instead of F.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    /// Points of ψ(t) − t written for the first structure (0 disables).
    #[serde(default = "section_points")]
    pub section_points: usize,
    #[serde(default)]
    pub seed: u64,
}

fn section_points() -> usize {
    5001
}

fn certify_cmd(cfg: &CertifyRunConfig, out: &mut OutputDir) -> CmdResult<Outcome> {
    let base = cfg.system.plane_map()?;
    let map: Arc<dyn PlaneMap> = match cfg.perturbation {
        Some(spec) => Arc::new(PerturbedMap { base, eta: make_perturbation(spec)? }),
        None => base,
    };
    let structures = cfg.structures.build(cfg.seed)?;
    let certs = certify(map.as_ref(), &structures, cfg.window, &cfg.certify)?;
    let mut table = Table::new(&["structure_id", "t", "kind", "anchored"]);
    for (id, c) in certs.iter().enumerate() {
        for p in &c.fixed_points {
            let kind = serde_json::to_value(p.kind).map_err(|e| Failure::Other(e.into()))?;
            table.push(vec![id.to_string(), f(p.t), kind.as_str().unwrap_or_default().to_string(), p.anchored.to_string()]);
        }
    }
    out.write_table("certify.csv", &table)?;
    if cfg.section_points >= 2 {
        if let Some(fp) = certs[0].fixed_point {
            let psi = slave_section(map.as_ref(), &structures[0], fp.point)?;
            let (a, b) = cfg.window;
            let mut sec = Table::new(&["t", "psi", "psi_minus_t"]);
            let n = cfg.section_points - 1;
            for i in 0..=n {
                let t = a + (b - a) * i as f64 / n as f64;
                let v = psi.eval(t);
                sec.push(vec![f(t), f(v), f(v - t)]);
            }
            out.write_table("section.csv", &sec)?;
        }
    }
    out.write_json("certify.json", &certs)?;
    let verdicts: Vec<CertificateVerdict> = certs.iter().map(|c| c.verdict).collect();
    let all = certs.iter().all(|c| c.certified());
    Ok(Outcome::ok(json!({
        "verdicts": verdicts,
        "all_sampled_structures_certified": all,
        "transversal_counts": certs.iter().map(|c| c.transversal_count).collect::<Vec<_>>(),
    })))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalSpec {
    pub eps_lo: f64,
    pub eps_hi: f64,
    #[serde(default = "twenty")]
    pub iters: usize,
    #[serde(default = "inward")]
    pub direction: Direction,
    /// Index into the structure family.
    #[serde(default)]
    pub structure: usize,
}

fn twenty() -> usize {
    20
}
fn inward() -> Direction {
    Direction::RadialInward
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub system: SystemConfig,
    pub eps_list: Vec<f64>,
    pub n_samples: usize,
    #[serde(default)]
    pub structures: StructureFamily,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default = "default_window")]
    pub window: (f64, f64),
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical: Option<CriticalSpec>,
    #[serde(default)]
    pub seed: u64,
}

fn perturb_sweep(cfg: &SweepConfig, out: &mut OutputDir) -> CmdResult<Outcome> {
    let base = cfg.system.plane_map()?;
    let structures = cfg.structures.build(cfg.seed)?;
    let report = perturbation_sweep(&base, &cfg.eps_list, cfg.n_samples, &structures, cfg.seed, cfg.direction, cfg.window, &cfg.certify)?;
    let mut table = Table::new(&["epsilon", "sample", "structure_id", "n_fixed_points", "verdict"]);
    for r in &report.rows {
        let v = serde_json::to_value(r.verdict).map_err(|e| Failure::Other(e.into()))?;
        table.push(vec![f(r.epsilon), r.sample.to_string(), r.structure_id.to_string(), r.n_fixed_points.to_string(), v.as_str().unwrap_or_default().into()]);
    }
    out.write_table("sweep.csv", &table)?;
    let critical = match &cfg.critical {
        Some(c) => {
            let s = structures.get(c.structure).ok_or_else(|| Failure::Config(format!("no structure with index {}", c.structure)))?;
            Some(estimate_critical_epsilon(&base, s, cfg.seed, c.direction, c.eps_lo, c.eps_hi, c.iters, cfg.window, &cfg.certify)?)
        }
        None => None,
    };
    let doc = json!({ "fractions": report.fractions, "critical_epsilon": critical });
    out.write_json("sweep.json", &doc)?;
    Ok(Outcome::ok(doc))
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Input CSV with a header row
    #[arg(long)]
    pub csv: PathBuf,
    /// Column for the horizontal axis
    #[arg(long)]
    pub x: String,
    /// Column(s) for the vertical axis
    #[arg(long, required = true)]
    pub y: Vec<String>,
    /// Split rows into one series per value of this column
    #[arg(long)]
    pub group: Option<String>,
    /// Output file name inside --out (default: CSV stem + .svg)
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long)]
    pub title: Option<String>,
    /// Plot log10 of the vertical values
    #[arg(long)]
    pub log_y: bool,
}

fn plot(args: &PlotArgs, out_dir: &Path) -> CmdResult<()> {
    let mut rdr = csv::Reader::from_path(&args.csv).map_err(|e| Failure::Config(format!("{}: {e}", args.csv.display())))?;
    let header = rdr.headers().map_err(|e| Failure::Config(e.to_string()))?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Failure::Config(format!("column `{name}` not found in {}", args.csv.display())))
    };
    let xi = col(&args.x)?;
    let yis = args.y.iter().map(|y| col(y)).collect::<CmdResult<Vec<_>>>()?;
    let gi = args.group.as_deref().map(col).transpose()?;
    let mut series: Vec<Series> = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Failure::Config(e.to_string()))?;
        rows += 1;
        let num = |i: usize| {
            rec[i].trim().parse::<f64>().map_err(|_| Failure::Config(format!("non-numeric value `{}` in column {}", &rec[i], &header[i])))
        };
        let x = num(xi)?;
        for (k, &yi) in yis.iter().enumerate() {
            let mut y = num(yi)?;
            if args.log_y {
                y = y.abs().log10();
            }
            let name = match gi {
                Some(g) => format!("{} {}={}", args.y[k], &header[g], &rec[g]),
                None => args.y[k].clone(),
            };
            match series.iter_mut().find(|s| s.name == name) {
                Some(s) => s.points.push((x, y)),
                None => series.push(Series { name, points: vec![(x, y)] }),
            }
        }
    }
    if rows == 0 {
        return Err(Failure::Config(format!("{} has no data rows", args.csv.display())));
    }
    let y_label = if args.log_y { format!("log10 {}", args.y.join(", ")) } else { args.y.join(", ") };
    let stem = args.csv.file_stem().and_then(|s| s.to_str()).unwrap_or("plot").to_string();
    let plot = Plot {
        title: args.title.clone().unwrap_or_else(|| stem.clone()),
        x_label: args.x.clone(),
        y_label,
        series,
        equal_aspect: false,
    };
    let mut out = OutputDir::create(out_dir)?;
    let name = args.output.clone().unwrap_or(format!("{stem}.svg"));
    out.write_bytes(&name, plot.render().as_bytes())?;
    Ok(())
}
