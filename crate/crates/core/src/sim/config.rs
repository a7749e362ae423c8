use serde::{Deserialize, Serialize};

use super::{SimError, Terrain};
use crate::contact::{ContactKind, ContactSpec};
use crate::control::{LocomotionMode, NodeHold};
use crate::ocp::SolverOptions;
use crate::rbd::rig::{names, RigParams, NOMINAL_LEGS};
use crate::swerve::WheelLayout;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SagittalRig,
    Swerve,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    WholeBody,
    IkBaseline,
}

/// Declarative description of one simulated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelKind,
    /// Simulated time, s.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Simulator and LFC period, s.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub controller: ControllerKind,
    #[serde(default)]
    pub horizon: HorizonConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub terrain: Terrain,
    #[serde(default)]
    pub rig: RigParams,
    #[serde(default = "default_contacts")]
    pub contacts: Vec<ContactSpec>,
    /// Friction coefficients are scaled by this factor in the controller's
    /// cone penalty, leaving a safety band to the simulated cone.
    #[serde(default = "default_friction_margin")]
    pub friction_margin: f64,
    /// Width of the band inside the cone where the penalty still adds
    /// curvature to the controller's model, N.
    #[serde(default = "default_cone_band")]
    pub cone_band: f64,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub ee: EeTarget,
    #[serde(default)]
    pub posture: Posture,
    #[serde(default)]
    pub servo: ServoGains,
    /// Requested modes; each entry applies from its time on.
    #[serde(default)]
    pub modes: Vec<ModeRequest>,
    #[serde(default)]
    pub motion: MotionReference,
    #[serde(default)]
    pub kicks: Vec<Kick>,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub swerve: SwerveConfig,
    /// Metrics ignore samples before this time, s.
    #[serde(default)]
    pub metrics_from: f64,
    /// Amplitude of the seeded uniform noise added to the initial joint
    /// velocities, rad/s.
    #[serde(default)]
    pub initial_noise: f64,
}

fn default_cone_band() -> f64 {
    2.0
}

fn default_friction_margin() -> f64 {
    0.9
}

fn default_dt() -> f64 {
    0.002
}

pub fn default_contacts() -> Vec<ContactSpec> {
    let rho = RigParams::default().wheel_radius;
    [names::FRONT_WHEEL, names::REAR_WHEEL]
        .iter()
        .map(|f| ContactSpec::new(*f, ContactKind::WheelLine, 0.8).with_torque_bounds([[-5.0, 5.0], [-1.0, 1.0], [-5.0, 5.0]]).rolling(rho))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    /// Number of nodes.
    #[serde(rename = "N")]
    pub n: usize,
    /// Node period, s.
    pub dt: f64,
    /// LFC ticks between re-solves.
    pub solve_every: usize,
    pub hold: NodeHold,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self { n: 20, dt: 0.02, solve_every: 10, hold: NodeHold::ZeroOrder }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub cost_tol: f64,
    pub grad_tol: f64,
    pub warm_start: bool,
    pub parallel: bool,
    /// Consecutive degraded re-solves tolerated before the run fails.
    pub degraded_budget: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self { max_iter: 20, cost_tol: d.cost_tol, grad_tol: d.grad_tol, warm_start: true, parallel: true, degraded_budget: 50 }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            max_iter: self.max_iter,
            cost_tol: self.cost_tol,
            grad_tol: self.grad_tol,
            parallel: self.parallel,
            ..SolverOptions::default()
        }
    }
}

/// Cost weights of the whole-body problem and of the swerve problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub ee_height: f64,
    pub ee_pitch: f64,
    pub ee_forward: f64,
    pub base_velocity: f64,
    pub base_pose: f64,
    /// Base x against the reference distance in wheeled mode.
    pub base_position: f64,
    pub com: f64,
    pub contact_force: f64,
    pub leg_posture: f64,
    pub arm_posture: f64,
    pub joint_velocity: f64,
    pub control: f64,
    pub terminal_scale: f64,
    pub swerve_position: f64,
    pub swerve_heading: f64,
    pub swerve_twist: f64,
    pub swerve_accel: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            ee_height: 2000.0,
            ee_pitch: 200.0,
            ee_forward: 200.0,
            base_velocity: 20.0,
            base_pose: 500.0,
            base_position: 20.0,
            com: 10.0,
            contact_force: 100.0,
            leg_posture: 5.0,
            arm_posture: 0.1,
            joint_velocity: 0.05,
            control: 1e-3,
            terminal_scale: 5.0,
            swerve_position: 50.0,
            swerve_heading: 50.0,
            swerve_twist: 1.0,
            swerve_accel: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EeTarget {
    /// World height of the end effector, m.
    pub height: f64,
    /// Planar orientation of the end-effector frame, rad.
    pub pitch: f64,
    /// Distance ahead of the base origin, m.
    pub forward: f64,
}

impl Default for EeTarget {
    fn default() -> Self {
        Self { height: 0.92, pitch: -1.5708, forward: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Posture {
    /// `[front_hip, front_knee, rear_hip, rear_knee]`, rad.
    pub legs: [f64; 4],
    /// Initial guess for the arm joints; refined so the end effector starts on target.
    pub arm: [f64; 3],
    /// Initial base x, m.
    pub start_x: f64,
}

impl Default for Posture {
    fn default() -> Self {
        Self { legs: NOMINAL_LEGS, arm: [-0.6, 1.2, -2.0], start_x: 0.0 }
    }
}

/// Gains of the joint servos that hold locked joints (and the arm servo of the IK baseline).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoGains {
    pub leg_kp: f64,
    pub leg_kd: f64,
    pub wheel_kp: f64,
    pub wheel_kd: f64,
}

impl Default for ServoGains {
    fn default() -> Self {
        Self { leg_kp: 2000.0, leg_kd: 40.0, wheel_kp: 50.0, wheel_kd: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeRequest {
    pub t: f64,
    pub mode: LocomotionMode,
}

/// Longitudinal speed reference of the sagittal rig.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionReference {
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Time to reach the cruise speed, s.
    pub ramp: f64,
}

impl Default for MotionReference {
    fn default() -> Self {
        Self { speed: 0.0, ramp: 1.0 }
    }
}

impl MotionReference {
    pub fn speed_at(&self, t: f64) -> f64 {
        if self.ramp <= 0.0 {
            self.speed
        } else {
            self.speed * (t / self.ramp).clamp(0.0, 1.0)
        }
    }

    /// Distance covered by time `t`.
    pub fn distance_at(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        if self.ramp <= 0.0 || t >= self.ramp {
            self.speed * (t - 0.5 * self.ramp.max(0.0))
        } else {
            0.5 * self.speed * t * t / self.ramp
        }
    }
}

/// Instantaneous change of the base velocity with matching wheel spin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kick {
    pub t: f64,
    /// Added longitudinal base velocity, m/s.
    pub velocity: f64,
}

/// Conventional controller used as the comparison baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub arm_kp: f64,
    pub arm_kd: f64,
    /// Damping of the least-squares IK, m.
    pub damping: f64,
    pub ik_iterations: usize,
    /// Wheel torque per m/s of base speed error.
    pub wheel_gain: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { arm_kp: 60.0, arm_kd: 4.0, damping: 0.02, ik_iterations: 10, wheel_gain: 20.0 }
    }
}

/// Top-down swerve base and its move sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwerveConfig {
    pub layout: WheelLayout,
    pub mass: f64,
    pub com_height: f64,
    /// Straight run length, m.
    pub straight: f64,
    /// In-place rotation before returning, rad.
    pub rotation: f64,
    /// Sideways crab distance, m.
    pub crab: f64,
    /// Duration of each move, s.
    pub move_time: f64,
    /// Rest between moves, s.
    pub pause: f64,
    /// Completion tolerance on position (m) and heading (rad).
    pub tolerance: f64,
}

impl Default for SwerveConfig {
    fn default() -> Self {
        Self {
            layout: WheelLayout::rectangle(0.3, 0.2, 0.06),
            mass: 25.0,
            com_height: 0.45,
            straight: 1.0,
            rotation: 1.8,
            crab: 1.0,
            move_time: 3.0,
            pause: 0.5,
            tolerance: 0.05,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text`, applies `key=value` overrides on dotted paths, then
    /// validates. Values are read as TOML literals, falling back to strings.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, SimError> {
        if overrides.is_empty() {
            return Self::from_toml_str(text);
        }
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| SimError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.dt > 0.0 && self.dt <= super::MAX_DT) {
            return bad(format!("dt must be in (0, {}], got {}", super::MAX_DT, self.dt));
        }
        if self.horizon.n == 0 || self.horizon.solve_every == 0 || !(self.horizon.dt > 0.0) {
            return bad("horizon.N, horizon.solve_every and horizon.dt must be positive".into());
        }
        if self.solver.max_iter == 0 {
            return bad("solver.max_iter must be positive".into());
        }
        if !(self.friction_margin > 0.0 && self.friction_margin <= 1.0) {
            return bad(format!("friction_margin must be in (0, 1], got {}", self.friction_margin));
        }
        if !(self.cone_band >= 0.0 && self.cone_band.is_finite()) {
            return bad(format!("cone_band must be finite and non-negative, got {}", self.cone_band));
        }
        self.terrain.validate()?;
        let w = &self.weights;
        let all = [
            w.ee_height, w.ee_pitch, w.ee_forward, w.base_velocity, w.base_pose, w.base_position, w.com, w.contact_force, w.leg_posture,
            w.arm_posture, w.joint_velocity, w.control, w.terminal_scale, w.swerve_position, w.swerve_heading, w.swerve_twist,
            w.swerve_accel,
        ];
        if all.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("weights must be finite and non-negative".into());
        }
        if self.modes.iter().any(|m| !(m.t >= 0.0)) || self.kicks.iter().any(|k| !(k.t >= 0.0 && k.velocity.is_finite())) {
            return bad("mode requests and kicks need non-negative times".into());
        }
        match self.model {
            ModelKind::SagittalRig => {
                let model = self.rig.build();
                for c in &self.contacts {
                    c.validate()?;
                    model.frame_id(&c.frame).map_err(|_| SimError::Config(format!("contact frame `{}` does not exist", c.frame)))?;
                }
                if self.contacts.is_empty() {
                    return bad("the sagittal rig needs at least one contact".into());
                }
            }
            ModelKind::Swerve => {
                self.swerve.layout.validate()?;
                let s = &self.swerve;
                if !(s.mass > 0.0 && s.com_height > 0.0 && s.move_time > 0.0 && s.pause >= 0.0 && s.tolerance > 0.0) {
                    return bad("swerve mass, com_height, move_time and tolerance must be positive".into());
                }
                let needed = s.pause + 4.0 * (s.move_time + s.pause);
                if self.duration < needed {
                    return bad(format!("duration must cover the gait sequence ({needed} s), got {}", self.duration));
                }
            }
        }
        Ok(())
    }
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), SimError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| SimError::Config(format!("override `{spec}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(SimError::Config(format!("override `{spec}` has an empty key")));
    }
    let value = parse_value(raw.trim());
    let mut table = doc;
    for k in &keys[..keys.len() - 1] {
        let entry = table.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| SimError::Config(format!("override `{spec}`: `{k}` is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
