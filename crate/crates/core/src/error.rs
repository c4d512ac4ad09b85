use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid field spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("direction must be a unit vector (|e| = {0})")]
    NonUnitDirection(f64),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("point ({}, {}) lies outside the grid", .0.x, .0.y)]
    OutsideGrid(Vec2),

    #[error("empty source set")]
    EmptySources,

    #[error("target ({}, {}) is unreachable", .0.x, .0.y)]
    Unreachable(Vec2),

    #[error("time step violates the CFL bound (cfl = {0}, must lie in (0, 1])")]
    CflViolation(f64),

    #[error("non-homogenizing field: travel time from ({}, {}) to ({}, {}) is infinite", .from.x, .from.y, .to.x, .to.y)]
    NonHomogenizing { from: Vec2, to: Vec2 },

    #[error("hypothesis violated at ({}, {}): {reason}", .at.x, .at.y)]
    Hypothesis { at: Vec2, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
