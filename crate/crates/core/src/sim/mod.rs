//! Deterministic simulation of the sagittal rig and the swerve base,
//! scenario configuration, trajectory logs and metrics.

mod bench;
mod config;
mod gait;
mod log;
mod rig;
mod terrain;
mod world;

pub use bench::{bench, BenchReport, BenchStep};
pub use config::{
    default_contacts, BaselineConfig, ControllerKind, EeTarget, HorizonConfig, Kick, ModeRequest, ModelKind, MotionReference, Posture,
    ScenarioConfig, ServoGains, SolverConfig, SwerveConfig, Weights,
};
pub use gait::{run_gait, support_margin, wheel_forces, GaitProblem, GaitSchedule, Segment};
pub use log::{mean_std, LogRow, MetricsReport, TrajectoryLog};
pub use rig::{arm_ik, gravity_torques, lock_servo, static_torques, run_rig, EeGoal, IkResult, RigProblem, RigSetup};
pub use terrain::Terrain;
pub use world::{StepReport, World, MAX_DT, RELEASE_FORCE};

use thiserror::Error;

use crate::contact::ContactError;
use crate::control::ControlError;
use crate::rbd::RbdError;
use crate::swerve::SwerveError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("integration step {0} is outside (0, {max}]", max = MAX_DT)]
    InvalidStep(f64),
    #[error("non-finite {what} at t = {t}")]
    NonFinite { t: f64, what: String },
    #[error("contact projection failed")]
    Projection,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("solver degraded on {steps} consecutive solves at t = {t}")]
    Degraded { t: f64, steps: usize },
    #[error(transparent)]
    Rbd(#[from] RbdError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Swerve(#[from] SwerveError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Runs a scenario and returns its trajectory log and metrics.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(TrajectoryLog, MetricsReport), SimError> {
    cfg.validate()?;
    match cfg.model {
        ModelKind::SagittalRig => run_rig(cfg),
        ModelKind::Swerve => run_gait(cfg),
    }
}

#[cfg(test)]
mod tests;
