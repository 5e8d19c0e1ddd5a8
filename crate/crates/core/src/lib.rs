//! Pure differentially private variable selection for sparse regression and
//! classification.
//!
//! Two selection mechanisms are provided, both built on the exponential
//! mechanism over size-`s` supports:
//!
//! * **top-R**: exact scores for the `R` best supports and a single residual
//!   bucket scored at the `R`-th best value, sampled without touching the
//!   exponentially large outcome set ([`dp::build_p0`], [`dp::sample_top_r`]).
//! * **mistakes**: one score per Hamming-mistake class around the best
//!   support ([`dp::mistakes_distribution`], [`dp::sample_mistakes`]).
//!
//! The best supports are found with an outer-approximation cutting-plane
//! method ([`oa`]) whose master problems are solved exactly by a small
//! branch-and-bound ([`milp`]). [`bench`] drives synthetic support-recovery
//! experiments.
//!
//! Supports are 0-based internally and 1-based in every file format and in
//! CLI output.

pub mod bench;
pub mod data;
pub mod dp;
pub mod enumeration;
mod error;
pub mod milp;
pub mod oa;
pub mod solvers;
pub mod support;

pub use data::{DataBounds, Dataset, SynthConfig, TrueModel};
pub use error::{Error, Result};
pub use solvers::{LossKind, Objective, SolverOptions};
pub use support::Support;
