//! Receding-horizon whole-body control: the locomotion-mode state machine,
//! joint servos for locked joints, the whole-body dynamics hook used by the
//! optimizer, task residuals, the linear feedback controller and the
//! warm-started re-solve loop.

mod costs;
mod dynamics;
mod receding;

pub use costs::{ComSupportResidual, FrameComponent, FrameTaskResidual};
pub use dynamics::WholeBodyDynamics;
pub use receding::{twist_command, PairedSolve, ProblemBuilder, RecedingHorizon, RhOutput};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::ContactError;
use crate::ocp::{OcpError, OcpSolution};
use crate::rbd::{JointRole, RbdError, RobotModel};
use crate::swerve::SwerveError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("policy time {0} is negative or not finite")]
    InvalidTime(f64),
    #[error("no feedback policy is available yet")]
    NoPolicy,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Solver(#[from] OcpError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Rbd(#[from] RbdError),
    #[error(transparent)]
    Swerve(#[from] SwerveError),
}

fn check(what: &'static str, expected: usize, got: usize) -> Result<(), ControlError> {
    if expected == got {
        Ok(())
    } else {
        Err(ControlError::Dimension { what, expected, got })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocomotionMode {
    /// Wheels drive, legs hold their posture.
    #[default]
    Wheeled,
    /// Wheels and steering are locked, legs move the body.
    Legged,
}

impl LocomotionMode {
    pub fn locked_roles(self) -> &'static [JointRole] {
        match self {
            LocomotionMode::Wheeled => &[JointRole::Leg],
            LocomotionMode::Legged => &[JointRole::Wheel, JointRole::Steering],
        }
    }

    /// One flag per actuator, `true` where the actuator is locked.
    pub fn lock_mask(self, model: &RobotModel) -> Vec<bool> {
        let mut mask = vec![false; model.nu()];
        for &role in self.locked_roles() {
            for a in model.actuators_with_role(role) {
                mask[a] = true;
            }
        }
        mask
    }

    /// Actuator indices left to the optimizer.
    pub fn free_actuators(self, model: &RobotModel) -> Vec<usize> {
        self.lock_mask(model).iter().enumerate().filter(|(_, &l)| !l).map(|(a, _)| a).collect()
    }

    pub fn locked_actuators(self, model: &RobotModel) -> Vec<usize> {
        self.lock_mask(model).iter().enumerate().filter(|(_, &l)| l).map(|(a, _)| a).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            LocomotionMode::Wheeled => "wheeled",
            LocomotionMode::Legged => "legged",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeEvent {
    NoOp,
    Switched { from: LocomotionMode, to: LocomotionMode },
    /// A switch was requested while not every contact was active.
    Deferred { requested: LocomotionMode },
}

/// Selects the locomotion mode; switches only while every contact is active.
#[derive(Clone, Debug, Default)]
pub struct ModeMachine {
    mode: LocomotionMode,
    trace: Vec<ModeEvent>,
}

impl ModeMachine {
    pub fn new(mode: LocomotionMode) -> Self {
        Self { mode, trace: Vec::new() }
    }

    pub fn mode(&self) -> LocomotionMode {
        self.mode
    }

    pub fn trace(&self) -> &[ModeEvent] {
        &self.trace
    }

    pub fn last_event(&self) -> Option<ModeEvent> {
        self.trace.last().copied()
    }

    /// Handles a mode request. `full_stance` tells whether all contacts are
    /// currently active; otherwise the request is deferred and has to be
    /// repeated.
    pub fn mode_step(&mut self, requested: LocomotionMode, full_stance: bool) -> LocomotionMode {
        let ev = if requested == self.mode {
            ModeEvent::NoOp
        } else if full_stance {
            let from = self.mode;
            self.mode = requested;
            ModeEvent::Switched { from, to: requested }
        } else {
            ModeEvent::Deferred { requested }
        };
        self.trace.push(ev);
        self.mode
    }
}

/// PD servo on a set of coordinates, integrated implicitly: the torque is
/// evaluated at the end-of-step state, which adds `dt (k_d + dt k_p)` to the
/// joint's diagonal inertia and keeps stiff gains stable at large steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JointServo {
    pub joints: Vec<ServoJoint>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServoJoint {
    /// Velocity index of the coordinate.
    pub coord: usize,
    pub target: f64,
    pub kp: f64,
    pub kd: f64,
    /// Constant torque added to the PD law.
    pub bias: f64,
}

impl JointServo {
    /// Servo holding the coordinates of `actuators` at their values in `q`.
    pub fn hold(model: &RobotModel, actuators: &[usize], q: &DVector<f64>, kp: f64, kd: f64) -> Self {
        let joints = actuators
            .iter()
            .map(|&a| {
                let coord = model.actuated()[a];
                ServoJoint { coord, target: q[coord], kp, kd, bias: 0.0 }
            })
            .collect();
        Self { joints }
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Adds the servo to `M q̈ = tau + ...` for a step of length `dt`.
    pub fn apply(&self, mass: &mut DMatrix<f64>, tau: &mut DVector<f64>, q: &DVector<f64>, v: &DVector<f64>, dt: f64) {
        for j in &self.joints {
            let c = j.coord;
            mass[(c, c)] += dt * (j.kd + dt * j.kp);
            tau[c] += j.bias + j.kp * (j.target - q[c] - dt * v[c]) - j.kd * v[c];
        }
    }

    /// Torques actually exerted once `qdd` is known.
    pub fn torques(&self, q: &DVector<f64>, v: &DVector<f64>, qdd: &DVector<f64>, dt: f64) -> Vec<f64> {
        self.joints
            .iter()
            .map(|j| {
                let c = j.coord;
                let v1 = v[c] + dt * qdd[c];
                j.bias + j.kp * (j.target - q[c] - dt * v1) - j.kd * v1
            })
            .collect()
    }
}

/// How the LFC evaluates the policy between nodes. The gain is always held.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeHold {
    /// Feedforward and desired state of node `⌊t/dt⌋`.
    #[default]
    ZeroOrder,
    /// Feedforward and desired state interpolated linearly toward the next node.
    Linear,
}

/// Per-node feedforward controls, feedback gains and desired states of a
/// solved horizon. `s_des` may carry one more entry than the controls (the
/// terminal state), which [`NodeHold::Linear`] uses on the last node.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPolicy {
    pub dt: f64,
    pub tau_ff: Vec<DVector<f64>>,
    pub gains: Vec<DMatrix<f64>>,
    pub s_des: Vec<DVector<f64>>,
    pub hold: NodeHold,
}

impl FeedbackPolicy {
    pub fn new(dt: f64, tau_ff: Vec<DVector<f64>>, gains: Vec<DMatrix<f64>>, s_des: Vec<DVector<f64>>) -> Result<Self, ControlError> {
        let n = tau_ff.len();
        check("gains", n, gains.len())?;
        if s_des.len() != n + 1 {
            check("desired states", n, s_des.len())?;
        }
        if n == 0 {
            return Err(ControlError::Dimension { what: "policy nodes", expected: 1, got: 0 });
        }
        let (nu, ns) = (tau_ff[0].len(), s_des[0].len());
        for s in &s_des {
            check("desired state", ns, s.len())?;
        }
        for k in 0..n {
            check("feedforward", nu, tau_ff[k].len())?;
            check("gain rows", nu, gains[k].nrows())?;
            check("gain columns", ns, gains[k].ncols())?;
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ControlError::InvalidTime(dt));
        }
        Ok(Self { dt, tau_ff, gains, s_des, hold: NodeHold::ZeroOrder })
    }

    pub fn from_solution(sol: &OcpSolution, dt: f64) -> Result<Self, ControlError> {
        Self::new(dt, sol.us.clone(), sol.kk.clone(), sol.xs.clone())
    }

    pub fn with_hold(mut self, hold: NodeHold) -> Self {
        self.hold = hold;
        self
    }

    pub fn nodes(&self) -> usize {
        self.tau_ff.len()
    }

    pub fn nu(&self) -> usize {
        self.tau_ff[0].len()
    }

    pub fn duration(&self) -> f64 {
        self.nodes() as f64 * self.dt
    }

    pub fn is_finite(&self) -> bool {
        self.tau_ff.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.gains.iter().all(|m| m.iter().all(|x| x.is_finite()))
            && self.s_des.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LfcOutput {
    pub tau: DVector<f64>,
    pub node: usize,
    /// `t` was past the horizon and the last node was held.
    pub held: bool,
}

/// `τ = τ_ff,k + K_k (s - s_des,k)` with `k = ⌊t / dt⌋`. Under
/// [`NodeHold::Linear`] the feedforward and desired state are blended toward
/// node `k + 1` by the fraction of the node elapsed.
pub fn lfc_torque(policy: &FeedbackPolicy, s: &DVector<f64>, t: f64) -> Result<LfcOutput, ControlError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(ControlError::InvalidTime(t));
    }
    check("state", policy.s_des[0].len(), s.len())?;
    if s.iter().any(|x| !x.is_finite()) {
        return Err(ControlError::NonFinite("measured state"));
    }
    let raw = (t / policy.dt).floor() as usize;
    let last = policy.nodes() - 1;
    let node = raw.min(last);
    let held = raw > last;
    let mut tau = policy.tau_ff[node].clone();
    let mut s_des = policy.s_des[node].clone();
    if policy.hold == NodeHold::Linear && !held {
        let frac = t / policy.dt - node as f64;
        if let Some(next) = policy.s_des.get(node + 1) {
            s_des += (next - &policy.s_des[node]) * frac;
        }
        if let Some(next) = policy.tau_ff.get(node + 1) {
            tau += (next - &policy.tau_ff[node]) * frac;
        }
    }
    tau.gemv(1.0, &policy.gains[node], &(s - s_des), 1.0);
    if tau.iter().any(|x| !x.is_finite()) {
        return Err(ControlError::NonFinite("feedback torque"));
    }
    Ok(LfcOutput { tau, node, held })
}
