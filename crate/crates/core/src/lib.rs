//! Travel times, limit shapes and effective Hamiltonians for the G-equation
//! `u_t + V(x / eps) . Du = |Du|` with a random divergence-free drift `V`.
//!
//! The building blocks, bottom up:
//!
//! - [`fields`]: stationary stream functions and their velocities.
//! - [`control`]: the controlled dynamics and the local maximal speed.
//! - [`traveltime`]: lattice shortest paths for the travel time.
//! - [`homogenize`]: limit-shape estimates, Wulff sets and the effective Hamiltonian.
//! - [`gequation`]: the time-dependent front equation and its homogenized limit.
//! - [`conditions`]: empirical checks of the sufficient conditions for homogenization.

pub mod conditions;
pub mod control;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod gequation;
pub mod homogenize;
pub mod stats;
pub mod traveltime;

pub use control::{descend_path, integrate, max_speed, ControlSignal, DriftSign, PathReport, Trajectory};
pub use error::{Error, Result};
pub use fields::{derive_seed, field_stats, sample_field, FieldRealization, FieldSpec, FieldStats, FourierMode, VelocityField};
pub use geometry::Vec2;
pub use stats::{Estimate, LinearFit};
pub use traveltime::{gamma_hat, solve_travel_time, tau, verify_triangle, Grid2, StopRule, TravelTimeField};
pub use homogenize::{build_wulff, estimate_qbar, EffectiveHamiltonian, GridPolicy, WulffSet};
pub use gequation::{homogenization_error, solve_effective, solve_geq, ueps_rep, InitialData, ScalarField2};
pub use conditions::{modify_stream, rho, ConditionReport, ModifiedStream};
