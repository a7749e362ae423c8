//! Finite-horizon optimal control by regularized differential dynamic
//! programming: residual cost terms, dynamics derivatives, backward and
//! forward passes, and warm starting for receding-horizon use.

mod cost;
mod dynamics;
mod solver;

pub use cost::{
    cost_value, stage_cost, ConeResidual, ControlResidual, CostExpansion, CostKind, CostTerm, Penalty, Reference, Residual,
    ResidualEval, StateResidual,
};
pub use dynamics::{finite_difference, Derivatives, Dynamics, LinearDynamics, StepOutput, FD_STEP};
pub use solver::{
    backward_pass, forward_pass, initial_controls, linearize, rollout, shift_states, shift_warm_start, solve, write_solver_log,
    BackwardPass, Gains, IterationLog, Linearization, OcpProblem, OcpSolution, SolveStatus, SolverOptions, Trajectory,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("dynamics failed at node {node}: {why}")]
    Dynamics { node: usize, why: String },
    #[error("rollout diverged at node {node}")]
    Diverged { node: usize },
    #[error("Q_uu is not positive definite at node {node} with regularization {mu:e}")]
    NotPositiveDefinite { node: usize, mu: f64 },
}
