//! Built-in dynamical systems and trajectory generation.
//!
//! Discrete maps implement [`Map`]; planar maps implement the richer
//! [`PlaneMap`] (and get [`Map`] for free). Flows implement [`VectorField`]
//! and are advanced with a fixed-step classical Runge-Kutta scheme.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;

/// A discrete-time map of ℝᵈ.
pub trait Map: Send + Sync {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[f64], out: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        out
    }
}

/// A map of the plane.
pub trait PlaneMap: Send + Sync {
    fn apply2(&self, p: [f64; 2]) -> [f64; 2];

    /// Continuous angular displacement of `p` in turns, when the map knows a
    /// natural lift (e.g. θ ↦ θ + β(r)). Used to anchor lifts.
    fn lift_hint(&self, _p: [f64; 2]) -> Option<f64> {
        None
    }

    /// Preimage of `q`, when the map can compute it.
    fn inverse2(&self, _q: [f64; 2]) -> Option<[f64; 2]> {
        None
    }
}

impl<T: PlaneMap + ?Sized> Map for T {
    fn dim(&self) -> usize {
        2
    }

    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let [a, b] = self.apply2([x[0], x[1]]);
        out[0] = a;
        out[1] = b;
    }
}

impl<T: PlaneMap + ?Sized> PlaneMap for &T {
    fn apply2(&self, p: [f64; 2]) -> [f64; 2] {
        (**self).apply2(p)
    }
    fn lift_hint(&self, p: [f64; 2]) -> Option<f64> {
        (**self).lift_hint(p)
    }
    fn inverse2(&self, q: [f64; 2]) -> Option<[f64; 2]> {
        (**self).inverse2(q)
    }
}

impl<T: PlaneMap + ?Sized> PlaneMap for Arc<T> {
    fn apply2(&self, p: [f64; 2]) -> [f64; 2] {
        (**self).apply2(p)
    }
    fn lift_hint(&self, p: [f64; 2]) -> Option<f64> {
        (**self).lift_hint(p)
    }
    fn inverse2(&self, q: [f64; 2]) -> Option<[f64; 2]> {
        (**self).inverse2(q)
    }
}

/// An autonomous vector field on ℝᵈ.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]);
}

/// Closure-backed map, mostly for tests and ad-hoc experiments.
pub struct FnMap<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Send + Sync> FnMap<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnMap { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Send + Sync> Map for FnMap<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// Closure-backed planar map.
pub struct FnPlaneMap<F>(pub F);

impl<F: Fn([f64; 2]) -> [f64; 2] + Send + Sync> PlaneMap for FnPlaneMap<F> {
    fn apply2(&self, p: [f64; 2]) -> [f64; 2] {
        (self.0)(p)
    }
}

/// Closure-backed vector field.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Send + Sync> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Send + Sync> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// The real-analytic plane map (θ, r) ↦ (θ + β(r), α(r)) with
/// α(r) = r + μ·r·∏ₖ(r² − k²), k = 1..5, and β(r) = c·r².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPolarMap {
    pub mu: f64,
    pub beta_coeff: f64,
}

impl Default for PlanarPolarMap {
    fn default() -> Self {
        PlanarPolarMap { mu: 1e-7, beta_coeff: 2.0 * PI }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialKind {
    Sink,
    Source,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialFixedPoint {
    pub radius: f64,
    pub kind: RadialKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomeomorphismReport {
    pub min_alpha_slope: f64,
    pub argmin_radius: f64,
    pub ok: bool,
}

impl PlanarPolarMap {
    /// Squared radii of the invariant circles, i.e. the roots of the product in α.
    pub const ALPHA_ROOTS: [f64; 5] = [1.0, 4.0, 9.0, 16.0, 25.0];

    pub fn new(mu: f64, beta_coeff: f64) -> Result<Self> {
        if !mu.is_finite() || !beta_coeff.is_finite() {
            return Err(Error::Invalid("mu and beta_coeff must be finite".into()));
        }
        Ok(PlanarPolarMap { mu, beta_coeff })
    }

    /// The degree-11 polynomial r·∏(r² − k²).
    pub fn radial_polynomial(r: f64) -> f64 {
        let r2 = r * r;
        Self::ALPHA_ROOTS.iter().fold(r, |acc, k2| acc * (r2 - k2))
    }

    pub fn alpha(&self, r: f64) -> f64 {
        r + self.mu * Self::radial_polynomial(r)
    }

    pub fn alpha_eval(&self, r: f64) -> Result<f64> {
        if r < 0.0 || r.is_nan() {
            return Err(Error::Domain(format!("radius must be non-negative, got {r}")));
        }
        Ok(self.alpha(r))
    }

    pub fn beta(&self, r: f64) -> f64 {
        self.beta_coeff * r * r
    }

    /// Rotation of the circle of radius r, in turns.
    pub fn turns(&self, r: f64) -> f64 {
        self.beta(r) / (2.0 * PI)
    }

    pub fn polar_apply(&self, p: [f64; 2]) -> [f64; 2] {
        let r = p[0].hypot(p[1]);
        if r == 0.0 {
            return [0.0, 0.0];
        }
        let k = self.alpha(r) / r;
        let (s, c) = self.beta(r).sin_cos();
        [k * (p[0] * c - p[1] * s), k * (p[0] * s + p[1] * c)]
    }

    /// Sink/source classification of the radial fixed points 0..=5 from the sign of
    /// α(r ± δ) − (r ± δ).
    pub fn classify_radial_fixed_points(&self) -> Vec<RadialFixedPoint> {
        const DELTA: f64 = 1e-3;
        (0..=5)
            .map(|k| {
                let r = k as f64;
                let right = self.alpha(r + DELTA) - (r + DELTA);
                let left = if k == 0 { None } else { Some(self.alpha(r - DELTA) - (r - DELTA)) };
                let ambiguous = right.abs() < 1e-15 || left.is_some_and(|l| l.abs() < 1e-15);
                let kind = if ambiguous {
                    RadialKind::Inconclusive
                } else {
                    let right_in = right < 0.0;
                    match left.map(|l| l > 0.0) {
                        None if right_in => RadialKind::Sink,
                        None => RadialKind::Source,
                        Some(true) if right_in => RadialKind::Sink,
                        Some(false) if !right_in => RadialKind::Source,
                        Some(_) => RadialKind::Inconclusive,
                    }
                };
                RadialFixedPoint { radius: r, kind }
            })
            .collect()
    }

    /// Minimum finite-difference slope of α on a uniform grid over [0, r_max].
    pub fn validate_homeomorphism(&self, r_max: f64, grid_n: usize) -> Result<HomeomorphismReport> {
        if grid_n < 1000 {
            return Err(Error::Precondition(format!("grid_n must be at least 1000, got {grid_n}")));
        }
        if !(r_max > 0.0) {
            return Err(Error::Domain("r_max must be positive".into()));
        }
        let h = r_max / grid_n as f64;
        let mut prev = self.alpha(0.0);
        let mut min = f64::INFINITY;
        let mut argmin = 0.0;
        for i in 1..=grid_n {
            let r = i as f64 * h;
            let a = self.alpha(r);
            let slope = (a - prev) / h;
            if slope < min {
                min = slope;
                argmin = r - 0.5 * h;
            }
            prev = a;
        }
        Ok(HomeomorphismReport { min_alpha_slope: min, argmin_radius: argmin, ok: min > 0.0 })
    }

    /// dα/dr.
    pub fn alpha_slope(&self, r: f64) -> f64 {
        let r2 = r * r;
        let mut prod = 1.0;
        let mut dsum = 0.0;
        for k2 in Self::ALPHA_ROOTS {
            let f = r2 - k2;
            dsum = dsum * f + prod * 2.0 * r;
            prod *= f;
        }
        1.0 + self.mu * (prod + r * dsum)
    }

    /// Solves α(r) = target for r ≥ 0, assuming α is increasing: Newton steps
    /// kept inside a shrinking bracket.
    pub fn alpha_inverse(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        let mut hi = target.max(1.0);
        while self.alpha(hi) < target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        let mut r = target.min(hi);
        for _ in 0..200 {
            let g = self.alpha(r) - target;
            if g == 0.0 {
                return r;
            }
            if g < 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            let d = self.alpha_slope(r);
            let mut next = r - g / d;
            if !(next > lo && next < hi) || !d.is_finite() || d <= 0.0 {
                next = 0.5 * (lo + hi);
            }
            if next == r || hi - lo <= f64::EPSILON * hi {
                break;
            }
            r = next;
        }
        r
    }
}

impl PlaneMap for PlanarPolarMap {
    fn apply2(&self, p: [f64; 2]) -> [f64; 2] {
        self.polar_apply(p)
    }

    fn lift_hint(&self, p: [f64; 2]) -> Option<f64> {
        Some(self.turns(p[0].hypot(p[1])))
    }

    fn inverse2(&self, q: [f64; 2]) -> Option<[f64; 2]> {
        let rq = q[0].hypot(q[1]);
        if rq == 0.0 {
            return Some([0.0, 0.0]);
        }
        let r = self.alpha_inverse(rq);
        let k = r / rq;
        let (s, c) = (-self.beta(r)).sin_cos();
        Some([k * (q[0] * c - q[1] * s), k * (q[0] * s + q[1] * c)])
    }
}

/// Hénon map (u, v) ↦ (v, 1 − a·v² + b·u).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HenonMap {
    pub a: f64,
    pub b: f64,
}

impl Default for HenonMap {
    fn default() -> Self {
        HenonMap { a: 1.4, b: 0.3 }
    }
}

impl HenonMap {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if b == 0.0 || !b.is_finite() || !a.is_finite() {
            return Err(Error::Invalid("Hénon map needs finite a and b ≠ 0".into()));
        }
        Ok(HenonMap { a, b })
    }
}

impl PlaneMap for HenonMap {
    fn apply2(&self, [u, v]: [f64; 2]) -> [f64; 2] {
        [v, 1.0 - self.a * v * v + self.b * u]
    }

    fn inverse2(&self, [u1, v1]: [f64; 2]) -> Option<[f64; 2]> {
        Some([(v1 - 1.0 + self.a * u1 * u1) / self.b, u1])
    }
}

/// Lorenz equations ẋ = σ(y − x), ẏ = r·x − y − x·z, ż = x·y − b·z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzSystem {
    pub sigma: f64,
    pub r: f64,
    pub b: f64,
}

impl Default for LorenzSystem {
    fn default() -> Self {
        LorenzSystem { sigma: 10.0, r: 28.0, b: 8.0 / 3.0 }
    }
}

impl LorenzSystem {
    pub fn new(sigma: f64, r: f64, b: f64) -> Result<Self> {
        if !(sigma > 0.0 && b > 0.0) || !r.is_finite() {
            return Err(Error::Invalid("Lorenz needs sigma > 0, b > 0".into()));
        }
        Ok(LorenzSystem { sigma, r, b })
    }

    pub fn field(&self, [x, y, z]: [f64; 3]) -> [f64; 3] {
        [self.sigma * (y - x), self.r * x - y - x * z, x * y - self.b * z]
    }
}

impl VectorField for LorenzSystem {
    fn dim(&self) -> usize {
        3
    }
    fn eval_into(&self, s: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.field([s[0], s[1], s[2]]));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Map,
    Flow,
}

/// x ↦ A·x (map) or ẋ = A·x (flow).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub matrix: Matrix,
    pub kind: LinearKind,
}

impl LinearSystem {
    pub fn new(matrix: Matrix, kind: LinearKind) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Invalid("linear system matrix must be square".into()));
        }
        if kind == LinearKind::Map && matrix.det().abs() < 1e-12 {
            return Err(Error::SingularTransform { det: matrix.det() });
        }
        Ok(LinearSystem { matrix, kind })
    }
}

impl Map for LinearSystem {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        self.matrix.mul_vec_into(x, out)
    }
}

impl VectorField for LinearSystem {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }
    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.matrix.mul_vec_into(x, out)
    }
}

/// Ordered states of an orbit or a sampled flow trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// 1 for maps, the sampling interval for flows.
    pub time_step: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectories are nonempty")
    }
}

/// Fixed-step fourth-order Runge-Kutta settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub h: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { h: 1e-3 }
    }
}

impl IntegratorConfig {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Invalid(format!("step h must be positive, got {h}")));
        }
        Ok(IntegratorConfig { h })
    }

    /// Number of steps covering `t_end`; `h` must divide it to within one step.
    pub fn steps_for(&self, t_end: f64) -> Result<usize> {
        if !(t_end > 0.0) {
            return Err(Error::Precondition(format!("integration time must be positive, got {t_end}")));
        }
        let n = (t_end / self.h).round();
        if (n * self.h - t_end).abs() > 1e-9 * t_end.max(self.h) || n < 1.0 {
            return Err(Error::Precondition(format!("h = {} does not divide T = {}", self.h, t_end)));
        }
        Ok(n as usize)
    }
}

/// Scratch buffers for classical RK4 on a nonautonomous field f(t, y).
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }

    #[allow(clippy::needless_range_loop)]
    pub fn step<F: FnMut(f64, &[f64], &mut [f64])>(&mut self, f: &mut F, t: f64, y: &mut [f64], h: f64) {
        let n = y.len();
        f(t, y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        f(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        f(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates `field` from `x0` over [0, T], sampling every step. Stops at the first
/// non-finite state; the flag reports whether that happened.
pub fn integrate_partial<V: VectorField + ?Sized>(
    field: &V,
    x0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<(Trajectory, bool)> {
    check_dim(field.dim(), x0.len())?;
    let n = cfg.steps_for(t_end)?;
    let mut rk = Rk4::new(x0.len());
    let mut y = x0.to_vec();
    let mut states = Vec::with_capacity(n + 1);
    states.push(y.clone());
    let mut f = |_t: f64, s: &[f64], out: &mut [f64]| field.eval_into(s, out);
    for i in 0..n {
        rk.step(&mut f, i as f64 * cfg.h, &mut y, cfg.h);
        if y.iter().any(|v| !v.is_finite()) {
            return Ok((Trajectory { states, time_step: cfg.h }, true));
        }
        states.push(y.clone());
    }
    Ok((Trajectory { states, time_step: cfg.h }, false))
}

pub fn integrate<V: VectorField + ?Sized>(field: &V, x0: &[f64], t_end: f64, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let (traj, diverged) = integrate_partial(field, x0, t_end, cfg)?;
    if diverged {
        return Err(Error::Diverged { last_valid: traj.len() - 1 });
    }
    Ok(traj)
}

/// n iterates of `map` from `x0` (n + 1 states), stopping early on a non-finite state.
pub fn orbit_partial<M: Map + ?Sized>(map: &M, x0: &[f64], n: usize) -> Result<(Trajectory, bool)> {
    check_dim(map.dim(), x0.len())?;
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.to_vec());
    let mut next = vec![0.0; x0.len()];
    for _ in 0..n {
        map.apply_into(states.last().unwrap(), &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Ok((Trajectory { states, time_step: 1.0 }, true));
        }
        states.push(next.clone());
    }
    Ok((Trajectory { states, time_step: 1.0 }, false))
}

pub fn orbit<M: Map + ?Sized>(map: &M, x0: &[f64], n: usize) -> Result<Trajectory> {
    let (traj, diverged) = orbit_partial(map, x0, n)?;
    if diverged {
        return Err(Error::Diverged { last_valid: traj.len() - 1 });
    }
    Ok(traj)
}

/// A flow sampled at a fixed interval of `sample_steps` integrator steps.
#[derive(Clone)]
pub struct FlowSystem {
    pub field: Arc<dyn VectorField>,
    pub integrator: IntegratorConfig,
    pub sample_steps: usize,
}

impl FlowSystem {
    pub fn sample_interval(&self) -> f64 {
        self.integrator.h * self.sample_steps as f64
    }

    /// Advances a state by one sample interval.
    pub fn advance(&self, x: &mut [f64], rk: &mut Rk4) {
        let mut f = |_t: f64, s: &[f64], out: &mut [f64]| self.field.eval_into(s, out);
        for _ in 0..self.sample_steps {
            rk.step(&mut f, 0.0, x, self.integrator.h);
        }
    }
}

/// Either a discrete map or a sampled flow; what the synchronization engine drives.
#[derive(Clone)]
pub enum System {
    Map(Arc<dyn Map>),
    Flow(FlowSystem),
}

impl System {
    pub fn map<M: Map + 'static>(m: M) -> Self {
        System::Map(Arc::new(m))
    }

    pub fn flow<V: VectorField + 'static>(field: V, integrator: IntegratorConfig, sample_steps: usize) -> Self {
        System::Flow(FlowSystem { field: Arc::new(field), integrator, sample_steps: sample_steps.max(1) })
    }

    pub fn dim(&self) -> usize {
        match self {
            System::Map(m) => m.dim(),
            System::Flow(f) => f.field.dim(),
        }
    }

    /// Time between successive drive samples.
    pub fn sample_interval(&self) -> f64 {
        match self {
            System::Map(_) => 1.0,
            System::Flow(f) => f.sample_interval(),
        }
    }

    /// Master orbit sampled once per step, stopping early on divergence.
    pub fn orbit_partial(&self, x0: &[f64], n: usize) -> Result<(Trajectory, bool)> {
        match self {
            System::Map(m) => orbit_partial(m.as_ref(), x0, n),
            System::Flow(f) => {
                check_dim(f.field.dim(), x0.len())?;
                let mut rk = Rk4::new(x0.len());
                let mut x = x0.to_vec();
                let mut states = vec![x.clone()];
                for _ in 0..n {
                    f.advance(&mut x, &mut rk);
                    if x.iter().any(|v| !v.is_finite()) {
                        return Ok((Trajectory { states, time_step: f.sample_interval() }, true));
                    }
                    states.push(x.clone());
                }
                Ok((Trajectory { states, time_step: f.sample_interval() }, false))
            }
        }
    }
}
