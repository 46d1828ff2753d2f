//! Simulation and verification of stochastic evolution equations whose
//! boundary input passes through a delay.
//!
//! The delay system is lifted to a delay-free system on the product space
//! `H x L2([-r,0], U)` whose second component is the input history. The lift
//! is simulated with an exponential integrator and checked against a direct
//! method-of-steps simulation of the original system.
//!
//! Module map:
//!
//! * [`semigroup`] - generators, resolvents, matrix exponentials, weighted norms.
//! * [`boundary`] - boundary triples, Dirichlet maps, input/output maps, probes.
//! * [`delay`] - the left-shift semigroup on the history grid and delay functionals.
//! * [`lift`] - the product-space lift and its block semigroup.
//! * [`sde`] - Brownian paths, the stochastic mild solution and Monte Carlo.
//! * [`systems`] - heat, Schrödinger-analogue and scalar toy factories.
//! * [`verify`] - the cross-checks (oracle equivalence, estimates, slopes).
//! * [`config`] - the JSON run configuration and the command runner behind the CLI.

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod config;
pub mod delay;
mod error;
pub mod exec;
pub mod lift;
pub mod report;
pub mod sde;
pub mod semigroup;
pub mod signal;
pub mod systems;
pub mod verify;

pub use error::{Error, Result};

/// Scalar type used for all state vectors. Real systems carry zero imaginary parts.
pub type C64 = nalgebra::Complex<f64>;
/// Column vector of [`C64`].
pub type CVector = nalgebra::DVector<C64>;
/// Dense matrix of [`C64`].
pub type CMatrix = nalgebra::DMatrix<C64>;

#[inline]
pub(crate) fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Number of steps of size `dt` in `t`, or `None` when `t` is off the grid.
pub(crate) fn grid_steps(t: f64, dt: f64) -> Option<usize> {
    if !(t >= 0.0) || !(dt > 0.0) {
        return None;
    }
    let k = (t / dt).round();
    if (k * dt - t).abs() <= 1e-9 * dt.max(t) {
        Some(k as usize)
    } else {
        None
    }
}
