//! Long-run average-cost impulse control of finite Markov chains under
//! generalised (non-exponential) discounting.
//!
//! The crate solves the undiscounted Bellman equation by span-contraction
//! relative value iteration, the time-indexed discounted equation by a
//! buffered backward recursion, and checks — exactly and by simulation —
//! that both criteria share their optimal value and optimal stationary
//! strategy, so the discounted problem admits a time-consistent solution
//! despite a non-exponential discount function.
//!
//! Modules:
//! - [`discount`]: discount functions β and the discrete sequence φ_h.
//! - [`process`]: kernels, generators (uniformization), Doeblin coefficients.
//! - [`costs`]: running and shift costs with triangle-inequality validation.
//! - [`bellman`]: both Bellman solvers, strategy extraction, drift checks.
//! - [`stationary`]: exact evaluation of arbitrary stationary strategies
//!   (Poisson equation, both functionals) and the brute-force oracle.
//! - [`montecarlo`]: reproducible trajectory simulation of both functionals.
//! - [`scenario`]: JSON scenario ingestion with assumption-tagged
//!   diagnostics.
//! - [`experiments`]: experiment orchestration and report emission.

pub mod bellman;
pub mod costs;
pub mod discount;
pub mod error;
pub mod experiments;
pub mod model;
pub mod montecarlo;
pub mod numeric;
pub mod process;
pub mod scenario;
pub mod stationary;
pub mod strategy;

pub use bellman::{BellmanSolution, DiscountedBellmanSolution, SolverOptions};
pub use costs::CostModel;
pub use discount::{DiscountSpec, PhiSequence};
pub use error::{Error, Result};
pub use model::ControlProblem;
pub use montecarlo::{FunctionalEstimate, SimConfig};
pub use process::{Generator, Kernel, StateSpace};
pub use strategy::StationaryStrategy;
