//! Numerical toolkit for average-cost continuous-time Markov decision
//! processes (CTMDPs) on truncated denumerable state spaces.
//!
//! The library solves the discounted-cost problem by value iteration on a
//! uniformized fixed point, extracts the average-cost triple `(g*, h*, f*)`
//! by the vanishing-discount method, and mechanically verifies the
//! supporting structure: standard policies (finite first-passage time and
//! cost to a reference state), Foster-Lyapunov drift certificates, the
//! average-cost optimality inequality/equality, and renewal identities.
//! An event-driven simulator cross-validates the analytic solvers.
//!
//! State spaces are finite truncations of `Z_+^d` boxes built with an
//! arrival-blocking rule: transitions leaving the box are deleted and the
//! generator diagonal recomputed, so every row stays conservative.

pub mod average;
pub mod chain;
pub mod discounted;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod models;
pub mod simulate;

pub use average::{AcoeReport, AverageSolution, Schedule};
pub use chain::{ChainSummary, FirstPassageReport};
pub use discounted::DiscountedSolution;
pub use lyapunov::LyapunovCertificate;
pub use model::{
    ActionId, CtmdpModel, GeneratorRow, StateIndex, StateVec, StationaryPolicy, TruncationMeta,
    Violation,
};
pub use models::{LyapunovSpec, UpgradeQueueParams};
pub use simulate::SimulationEstimate;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("policy chooses infeasible action {action} at state {state}")]
    InfeasiblePolicy { state: usize, action: usize },
    #[error("policy vector has length {got}, model has {expected} states")]
    PolicyLength { got: usize, expected: usize },
    #[error("linear system is singular at column {0}")]
    Singular(usize),
    #[error("linear solve residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("iteration limit {max_iter} reached, best residual {residual:.3e}")]
    MaxIterExceeded { max_iter: usize, residual: f64 },
    #[error("chain has {0} closed communicating classes, expected exactly one")]
    MultipleClosedClasses(usize),
    #[error("target set unreachable from state {0}")]
    Unreachable(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("vanishing-discount schedule did not stabilize in {steps} steps")]
    NotStabilized { steps: usize },
    #[error("model shape mismatch: {0}")]
    ModelShape(String),
}

pub type Result<T> = std::result::Result<T, Error>;
