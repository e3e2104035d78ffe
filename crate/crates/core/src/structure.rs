//! Affine product structures and the driven (slave) system they induce.
//!
//! A structure is an invertible affine change of coordinates q = T·p + c
//! together with a split of the coordinates of q into drive indices (imposed)
//! and response indices (evolving). The slave map for a drive value x is
//! y ↦ Π_resp F(from_coords(x, y)).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Matrix;
use crate::systems::{FlowSystem, Map, PlaneMap, Rk4, Trajectory};

/// JSON form of a structure: `{"transform": [[..]], "offset": [..], "drive": [0]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureDescriptor {
    pub transform: Matrix,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    pub drive: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StructureDescriptor", into = "StructureDescriptor")]
pub struct ProductStructure {
    transform: Matrix,
    inverse: Matrix,
    offset: Vec<f64>,
    drive: Vec<usize>,
    response: Vec<usize>,
}

impl TryFrom<StructureDescriptor> for ProductStructure {
    type Error = Error;
    fn try_from(d: StructureDescriptor) -> Result<Self> {
        let n = d.transform.rows();
        ProductStructure::new(d.transform, d.offset.unwrap_or_else(|| vec![0.0; n]), d.drive)
    }
}

impl From<ProductStructure> for StructureDescriptor {
    fn from(s: ProductStructure) -> Self {
        StructureDescriptor { transform: s.transform, offset: Some(s.offset), drive: s.drive }
    }
}

impl ProductStructure {
    pub fn new(transform: Matrix, offset: Vec<f64>, mut drive: Vec<usize>) -> Result<Self> {
        if !transform.is_square() {
            return Err(Error::Invalid("structure transform must be square".into()));
        }
        let d = transform.rows();
        check_dim(d, offset.len())?;
        drive.sort_unstable();
        drive.dedup();
        if drive.is_empty() || drive.len() >= d || drive.iter().any(|&i| i >= d) {
            return Err(Error::Invalid(format!("drive indices {drive:?} must be a proper nonempty subset of 0..{d}")));
        }
        let det = transform.det();
        if det.abs() <= 1e-12 {
            return Err(Error::SingularTransform { det });
        }
        let inverse = transform.inverse()?;
        let response = (0..d).filter(|i| !drive.contains(i)).collect();
        Ok(ProductStructure { transform, inverse, offset, drive, response })
    }

    pub fn identity(d: usize, drive: &[usize]) -> Result<Self> {
        Self::new(Matrix::identity(d), vec![0.0; d], drive.to_vec())
    }

    /// Planar structure whose coordinates are those of the point rotated by −φ,
    /// i.e. the axes are the original ones rotated by φ. Drive coordinate 0.
    pub fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        let t = Matrix::from_rows(&[[c, s], [-s, c]]).expect("finite");
        Self::new(t, vec![0.0, 0.0], vec![0]).expect("rotations are invertible")
    }

    pub fn dim(&self) -> usize {
        self.transform.rows()
    }

    pub fn drive_dim(&self) -> usize {
        self.drive.len()
    }

    pub fn response_dim(&self) -> usize {
        self.response.len()
    }

    pub fn drive_indices(&self) -> &[usize] {
        &self.drive
    }

    pub fn response_indices(&self) -> &[usize] {
        &self.response
    }

    pub fn transform(&self) -> &Matrix {
        &self.transform
    }

    pub fn inverse_transform(&self) -> &Matrix {
        &self.inverse
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// q = T·p + c.
    pub fn coords(&self, p: &[f64]) -> Vec<f64> {
        let mut q = self.transform.mul_vec(p);
        q.iter_mut().zip(&self.offset).for_each(|(a, b)| *a += b);
        q
    }

    /// p = T⁻¹·(q − c).
    pub fn ambient(&self, q: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = q.iter().zip(&self.offset).map(|(a, b)| a - b).collect();
        self.inverse.mul_vec(&shifted)
    }

    pub fn to_coords(&self, p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.dim(), p.len())?;
        let q = self.coords(p);
        Ok((self.drive.iter().map(|&i| q[i]).collect(), self.response.iter().map(|&i| q[i]).collect()))
    }

    pub fn assemble(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.dim()];
        for (&i, v) in self.drive.iter().zip(x) {
            q[i] = *v;
        }
        for (&i, v) in self.response.iter().zip(y) {
            q[i] = *v;
        }
        q
    }

    pub fn from_coords(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.drive_dim(), x.len())?;
        check_dim(self.response_dim(), y.len())?;
        Ok(self.ambient(&self.assemble(x, y)))
    }

    pub fn drive_of(&self, p: &[f64]) -> Vec<f64> {
        let q = self.coords(p);
        self.drive.iter().map(|&i| q[i]).collect()
    }

    pub fn response_of(&self, p: &[f64]) -> Vec<f64> {
        let q = self.coords(p);
        self.response.iter().map(|&i| q[i]).collect()
    }
}

/// One step of the slave map: y ↦ Π_resp F(from_coords(x, y)).
pub fn slave_step<M: Map + ?Sized>(system: &M, s: &ProductStructure, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_dim(system.dim(), s.dim())?;
    let p = s.from_coords(x, y)?;
    Ok(s.response_of(&system.apply(&p)))
}

/// Scratch space for repeated slave steps without allocation.
pub(crate) struct SlaveBuffers {
    q: Vec<f64>,
    p: Vec<f64>,
    img: Vec<f64>,
}

impl SlaveBuffers {
    pub(crate) fn new(d: usize) -> Self {
        SlaveBuffers { q: vec![0.0; d], p: vec![0.0; d], img: vec![0.0; d] }
    }
}

/// In-place [`slave_step`]; same arithmetic, so results agree bit for bit.
pub(crate) fn slave_step_into<M: Map + ?Sized>(system: &M, s: &ProductStructure, x: &[f64], y: &mut [f64], buf: &mut SlaveBuffers) {
    for (&i, v) in s.drive.iter().zip(x) {
        buf.q[i] = *v;
    }
    for (&i, v) in s.response.iter().zip(y.iter()) {
        buf.q[i] = *v;
    }
    buf.q.iter_mut().zip(&s.offset).for_each(|(a, b)| *a -= b);
    s.inverse.mul_vec_into(&buf.q, &mut buf.p);
    system.apply_into(&buf.p, &mut buf.img);
    s.transform.mul_vec_into(&buf.img, &mut buf.q);
    buf.q.iter_mut().zip(&s.offset).for_each(|(a, b)| *a += b);
    for (&i, v) in s.response.iter().zip(y.iter_mut()) {
        *v = buf.q[i];
    }
}

/// Slave step of a flow over one sample interval: the response coordinates are
/// integrated with the drive linearly interpolated from `x0` to `x1`.
pub fn slave_step_flow(flow: &FlowSystem, s: &ProductStructure, x0: &[f64], x1: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_dim(flow.field.dim(), s.dim())?;
    check_dim(s.drive_dim(), x0.len())?;
    check_dim(s.drive_dim(), x1.len())?;
    check_dim(s.response_dim(), y.len())?;
    let mut rk = Rk4::new(y.len());
    let mut out = y.to_vec();
    slave_flow_into(flow, s, x0, x1, &mut out, &mut rk);
    Ok(out)
}

pub(crate) fn slave_flow_into(flow: &FlowSystem, s: &ProductStructure, x0: &[f64], x1: &[f64], y: &mut [f64], rk: &mut Rk4) {
    let span = flow.sample_interval();
    let d = s.dim();
    let mut fx = vec![0.0; d];
    let mut x = vec![0.0; x0.len()];
    let mut rhs = |t: f64, yy: &[f64], out: &mut [f64]| {
        let w = t / span;
        for i in 0..x.len() {
            x[i] = x0[i] + w * (x1[i] - x0[i]);
        }
        let p = s.ambient(&s.assemble(&x, yy));
        flow.field.eval_into(&p, &mut fx);
        // velocity in structure coordinates is T·f(p); the offset is constant
        let v = s.transform.mul_vec(&fx);
        for (o, &i) in out.iter_mut().zip(&s.response) {
            *o = v[i];
        }
    };
    for k in 0..flow.sample_steps {
        rk.step(&mut rhs, k as f64 * flow.integrator.h, y, flow.integrator.h);
    }
}

/// The system seen in the coordinates of a structure: q ↦ s(F(s⁻¹(q))).
pub struct Conjugated<M> {
    pub map: M,
    pub structure: ProductStructure,
}

impl<M: Map> Map for Conjugated<M> {
    fn dim(&self) -> usize {
        self.map.dim()
    }
    fn apply_into(&self, q: &[f64], out: &mut [f64]) {
        let p = self.structure.ambient(q);
        out.copy_from_slice(&self.structure.coords(&self.map.apply(&p)));
    }
}

/// Planar version of [`Conjugated`].
pub struct ConjugatedPlane<M> {
    pub map: M,
    pub structure: ProductStructure,
}

impl<M: PlaneMap> PlaneMap for ConjugatedPlane<M> {
    fn apply2(&self, q: [f64; 2]) -> [f64; 2] {
        let p = self.structure.ambient(&q);
        let img = self.map.apply2([p[0], p[1]]);
        let r = self.structure.coords(&img);
        [r[0], r[1]]
    }
}

/// Drive signal generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Independent uniform samples in [lo, hi] per component.
    IidUniform { lo: f64, hi: f64 },
    /// amp·sin(freq·t + phase) with t the sample time.
    Sinusoid {
        amp: f64,
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
}

/// Where the imposed drive values x(n) come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DriveSequence {
    OrbitProjection { trajectory: Trajectory, structure: ProductStructure },
    Constant(Vec<f64>),
    Samples(Vec<Vec<f64>>),
    Generator { seed: u64, dim: usize, kind: GeneratorKind },
}

impl DriveSequence {
    pub fn dim(&self) -> usize {
        match self {
            DriveSequence::OrbitProjection { structure, .. } => structure.drive_dim(),
            DriveSequence::Constant(v) => v.len(),
            DriveSequence::Samples(s) => s.first().map_or(0, Vec::len),
            DriveSequence::Generator { dim, .. } => *dim,
        }
    }

    /// The first `n` drive values, with sample times n·dt for time-based generators.
    pub fn values_at(&self, n: usize, dt: f64) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::Precondition("need at least one drive value".into()));
        }
        match self {
            DriveSequence::OrbitProjection { trajectory, structure } => {
                if trajectory.len() < n {
                    return Err(Error::NotFound(format!("orbit has {} states, {n} requested", trajectory.len())));
                }
                Ok(trajectory.states[..n].iter().map(|p| structure.drive_of(p)).collect())
            }
            DriveSequence::Constant(v) => Ok(vec![v.clone(); n]),
            DriveSequence::Samples(s) => {
                if s.len() < n {
                    return Err(Error::NotFound(format!("drive samples exhausted: {} available, {n} requested", s.len())));
                }
                let m = s[0].len();
                if s.iter().any(|v| v.len() != m) {
                    return Err(Error::Invalid("drive samples have unequal dimensions".into()));
                }
                Ok(s[..n].to_vec())
            }
            DriveSequence::Generator { seed, dim, kind } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(match kind {
                    GeneratorKind::IidUniform { lo, hi } => {
                        (0..n).map(|_| (0..*dim).map(|_| rng.gen_range(*lo..=*hi)).collect()).collect()
                    }
                    GeneratorKind::Sinusoid { amp, freq, phase } => (0..n)
                        .map(|i| {
                            let t = i as f64 * dt;
                            (0..*dim).map(|c| amp * (freq * t + phase + c as f64).sin()).collect()
                        })
                        .collect(),
                })
            }
        }
    }
}

/// Drive values at unit sample spacing.
pub fn drive_values(seq: &DriveSequence, n: usize) -> Result<Vec<Vec<f64>>> {
    seq.values_at(n, 1.0)
}
