//! Numerical laboratory for zero-sum differential games driven by Caputo
//! fractional dynamics.
//!
//! The crate is organised bottom-up:
//!
//! - [`fraccalc`]: gamma/beta/Mittag-Leffler functions and product-integration
//!   rules for weakly singular kernels.
//! - [`paths`]: the path space, stored exactly through piecewise-constant
//!   Caputo derivatives, with extensions and the frozen continuation.
//! - [`dynamics`]: built-in game data, the Hamiltonian and assumption checks.
//! - [`game`]: trajectory simulation and brute-force upper/lower values on
//!   control scenario trees.
//! - [`testfunc`]: the penalty functional `nu_eps`, its ci-gradient, the
//!   explicit constants and the lemma harness.
//! - [`viscosity`]: viscosity-property checks, condition (L) fitting and the
//!   doubling-of-variables diagnostic.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod fraccalc;
pub mod game;
pub mod library;
pub mod paths;
pub mod report;
pub mod testfunc;
pub mod vecops;
pub mod viscosity;

pub use error::{Error, Result};
pub use paths::{PathFunctional, PathSpace, SampledPath};
pub use report::{CheckReport, Grade};
