//! Recovery of piecewise-linear replication timing profiles from the
//! nonlinear pulse-chase signal they produce.
//!
//! The observation is `z ≈ Ψ(τ)` with ψ applied coordinatewise. Since ψ is
//! not injective, each sample can be explained by either of two branches. The
//! [`solver`] enumerates a reduced set of branch assignments, solves a
//! weighted generalized lasso for each, and keeps the best fit. [`pdps`]
//! provides a primal-dual baseline on the nonconvex problem.

pub mod forward;
pub mod genlasso;
pub mod io;
pub mod parallel;
pub mod pdps;
pub mod preprocess;
pub mod profile;
pub mod pulse_model;
pub mod solver;
mod band;
mod spline;

pub use forward::{CrossingPolicy, NoiseKind, ProfileSpec, Read};
pub use parallel::Execution;
pub use profile::{Breakpoints, TimingProfile};
pub use pulse_model::{Branch, PulseModel};
pub use solver::{Scoring, SolveError, SolveParams, SolveReport};
