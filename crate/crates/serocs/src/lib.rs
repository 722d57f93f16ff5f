//! SERoCS: safe and efficient robot collaboration toolkit.
//!
//! Hardware-free library and simulator for human-robot collaboration:
//!
//! - [`registration`]: coherent-point-drift non-rigid registration,
//!   similarity-based target selection, and grasp-pose transfer.
//! - [`prediction`]: trajectory-image plan recognition and neural human
//!   motion prediction with online adaptation and propagated uncertainty.
//! - [`planner`]: long-term trajectory optimization by sequential
//!   convexification over signed-distance constraints.
//! - [`safety`]: safety-index short-term control with safe-control
//!   halfspaces under three human-knowledge assumptions.
//! - [`sim`]: deterministic two-rate closed-loop simulator combining the
//!   efficiency and safety controllers against scripted humans.
//! - [`geometry`] and [`qp`] provide the shared geometric and convex
//!   optimization primitives.
//!
//! File formats and the `serocs` command-line interface live in [`io`].

pub mod error;
pub mod geometry;
pub mod io;
pub mod planner;
pub mod prediction;
pub mod qp;
pub mod registration;
pub mod safety;
pub mod sim;

pub use error::{Error, Result};
