//! Serializable descriptions of the built-in systems.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::systems::{HenonMap, IntegratorConfig, LinearKind, LinearSystem, LorenzSystem, PlanarPolarMap, PlaneMap, System};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Polar {
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(default = "default_beta")]
        beta_coeff: f64,
    },
    Henon {
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "default_b")]
        b: f64,
    },
    Lorenz {
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_r")]
        r: f64,
        #[serde(default = "default_lorenz_b")]
        b: f64,
        /// Integrator step.
        #[serde(default = "default_h")]
        h: f64,
        /// Integrator steps per sample of the discrete-time view.
        #[serde(default = "default_sample_steps")]
        sample_steps: usize,
    },
    Linear {
        matrix: Matrix,
        kind: LinearKind,
        #[serde(default = "default_h")]
        h: f64,
        #[serde(default = "default_sample_steps")]
        sample_steps: usize,
    },
}

fn default_mu() -> f64 {
    1e-7
}
fn default_beta() -> f64 {
    TAU
}
fn default_a() -> f64 {
    1.4
}
fn default_b() -> f64 {
    0.3
}
fn default_sigma() -> f64 {
    10.0
}
fn default_r() -> f64 {
    28.0
}
fn default_lorenz_b() -> f64 {
    8.0 / 3.0
}
fn default_h() -> f64 {
    1e-3
}
fn default_sample_steps() -> usize {
    10
}

impl SystemConfig {
    pub fn dim(&self) -> usize {
        match self {
            SystemConfig::Polar { .. } | SystemConfig::Henon { .. } => 2,
            SystemConfig::Lorenz { .. } => 3,
            SystemConfig::Linear { matrix, .. } => matrix.rows(),
        }
    }

    pub fn is_flow(&self) -> bool {
        matches!(self, SystemConfig::Lorenz { .. } | SystemConfig::Linear { kind: LinearKind::Flow, .. })
    }

    pub fn integrator(&self) -> Result<IntegratorConfig> {
        match self {
            SystemConfig::Lorenz { h, .. } | SystemConfig::Linear { h, .. } => IntegratorConfig::new(*h),
            _ => Ok(IntegratorConfig::default()),
        }
    }

    pub fn build(&self) -> Result<System> {
        Ok(match self {
            SystemConfig::Polar { mu, beta_coeff } => System::map(PlanarPolarMap::new(*mu, *beta_coeff)?),
            SystemConfig::Henon { a, b } => System::map(HenonMap::new(*a, *b)?),
            SystemConfig::Lorenz { sigma, r, b, h, sample_steps } => {
                if *sample_steps == 0 {
                    return Err(Error::Invalid("sample_steps must be positive".into()));
                }
                System::flow(LorenzSystem::new(*sigma, *r, *b)?, IntegratorConfig::new(*h)?, *sample_steps)
            }
            SystemConfig::Linear { matrix, kind, h, sample_steps } => {
                let sys = LinearSystem::new(matrix.clone(), *kind)?;
                match kind {
                    LinearKind::Map => System::map(sys),
                    LinearKind::Flow => {
                        if *sample_steps == 0 {
                            return Err(Error::Invalid("sample_steps must be positive".into()));
                        }
                        System::flow(sys, IntegratorConfig::new(*h)?, *sample_steps)
                    }
                }
            }
        })
    }

    /// The system as a planar map, for annulus and certificate computations.
    pub fn plane_map(&self) -> Result<Arc<dyn PlaneMap>> {
        match self {
            SystemConfig::Polar { mu, beta_coeff } => Ok(Arc::new(PlanarPolarMap::new(*mu, *beta_coeff)?)),
            SystemConfig::Henon { a, b } => Ok(Arc::new(HenonMap::new(*a, *b)?)),
            _ => Err(Error::Invalid("a planar map (polar or henon) is required".into())),
        }
    }

    pub fn polar(&self) -> Result<PlanarPolarMap> {
        match self {
            SystemConfig::Polar { mu, beta_coeff } => PlanarPolarMap::new(*mu, *beta_coeff),
            _ => Err(Error::Invalid("the polar map is required".into())),
        }
    }
}
