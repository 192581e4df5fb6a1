//! Weighted sum computation bits maximization for backscatter-assisted,
//! wirelessly powered mobile edge computing.
//!
//! A power beacon charges `K` energy users (EUs). Each EU first backscatters
//! part of its data while harvesting the rest of the carrier, then transmits
//! actively in its own slot, and computes locally for the whole block. The
//! crate models the network ([`scenario`], [`phys`]), the convex problem and its
//! benchmark restrictions ([`problem`]), and two independent solvers
//! ([`solver::solve_dual`] and [`solver::solve_reference`]).
//!
//! Everything is generic over [`Real`]; the aliases below fix `f64`.

pub mod num;
pub mod phys;
pub mod problem;
pub mod scenario;
pub mod solver;

pub use num::Real;
pub use problem::{SchemeTag, Tolerances};
pub use solver::{SolveOptions, SolveStatus};

pub type Scenario = scenario::Scenario<f64>;
pub type EuProfile = scenario::EuProfile<f64>;
pub type EhParams = scenario::EhParams<f64>;
pub type ChannelGeometry = scenario::ChannelGeometry<f64>;
pub type Allocation = problem::Allocation<f64>;
pub type EuAllocation = problem::EuAllocation<f64>;
pub type Problem = problem::Problem<f64>;
pub type DualState = solver::DualState<f64>;
pub type SolveReport = solver::SolveReport<f64>;
