//! Solvers for Wahba's attitude-determination problem.
//!
//! Given weighted pairs of body-frame and reference-frame unit vectors, find
//! the unit quaternion whose attitude matrix best rotates the references onto
//! the body observations. The crate provides:
//!
//! * [`quat`]: scalar-last quaternion algebra, exponential and logarithm
//!   maps, Rodrigues parameters and the attitude matrix;
//! * [`davenport`]: the Davenport `K` matrix, Wahba loss, gain and TASTE;
//! * [`solvers`]: the q-Method oracle, QUEST, the first-order spectral
//!   perturbation estimate and the recursive Neumann-updated solver;
//! * [`simkit`]: seeded Monte Carlo campaigns of the first-order error;
//! * [`cli`]: the `wahba-kit` command-line front end.
//!
//! ```
//! use wahba_kit::davenport::{build_system, Measurement, MeasurementSet};
//! use wahba_kit::linalg::Vec3;
//! use wahba_kit::solvers::{first_order, q_method};
//!
//! let x = Vec3::new(1.0, 0.0, 0.0);
//! let y = Vec3::new(0.0, 1.0, 0.0);
//! let meas = MeasurementSet::new(vec![
//!     Measurement::new(x, x, 1.0),
//!     Measurement::new(y, y, 1.0),
//! ])?;
//! let sys = build_system(&meas);
//! let oracle = q_method(&sys)?;
//! let fast = first_order(&sys)?;
//! assert_eq!(oracle.lambda, 2.0);
//! assert_eq!(fast.lambda, 2.0);
//! assert_eq!(fast.taste, 0.0);
//! # Ok::<(), wahba_kit::Error>(())
//! ```

// `!(x < y)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod davenport;
mod error;
pub mod linalg;
pub mod quat;
pub mod simkit;
pub mod solvers;

pub use error::{Error, Result};

// The guide under book/ is compiled here so that every Rust snippet in it
// runs as a doctest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/quaternions.md")]
    mod quaternions {}
    #[doc = include_str!("../../../book/src/davenport.md")]
    mod davenport {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/recursive.md")]
    mod recursive {}
    #[doc = include_str!("../../../book/src/monte_carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
