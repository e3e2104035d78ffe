//! Master-slave synchronization of dynamical systems.
//!
//! The crate provides built-in systems (an explicit real-analytic plane map with
//! invariant circles, Hénon, Lorenz, linear maps and flows), affine product
//! structures and the driven systems they induce, finite-horizon synchronization
//! trials, a linear decision procedure, annulus-map conditions with lifts, and
//! fixed-point certificates of non-synchronization with a C⁰-perturbation harness.

// `!(a < b)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annulus;
pub mod certify;
pub mod config;
pub mod error;
pub mod linalg;
pub mod linear;
pub mod structure;
pub mod sync;
pub mod systems;

pub use error::{Error, Result};

/// Independent seed for cell (a, b) of a seeded experiment, so results do not
/// depend on scheduling order.
pub fn cell_seed(seed: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ a) ^ b.rotate_left(17))
}
