use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ControllerKind, ScenarioConfig};
use super::log::{mean_std, MetricsReport, TrajectoryLog};
use super::{SimError, World};
use crate::contact::{build_cone, contact_jacobian, cone_penalty, cone_residual, in_support, zmp, ContactSpec, Ground, WrenchCone};
use crate::control::{
    lfc_torque, ComSupportResidual, ControlError, FrameComponent, FrameTaskResidual, JointServo, LocomotionMode, ModeMachine,
    PairedSolve, ProblemBuilder, RecedingHorizon, ServoJoint, WholeBodyDynamics,
};
use crate::ocp::{ConeResidual, ControlResidual, CostKind, CostTerm, OcpProblem, Reference, StateResidual};
use crate::rbd::rig::names;
use crate::rbd::{bias_forces, frame_jacobian, frame_pose, FrameId, GeneralizedState, JointRole, RobotModel};

/// Fixed pieces of a sagittal-rig run.
pub struct RigSetup {
    pub model: Arc<RobotModel>,
    pub ground: Arc<dyn Ground>,
    pub contacts: Vec<ContactSpec>,
    /// Cones the simulated wrenches are checked against.
    pub cones: Vec<WrenchCone>,
    /// Cones of the controller's penalty (friction scaled by the margin).
    pub ocp_cones: Vec<WrenchCone>,
    pub ee: FrameId,
    pub arm: [usize; 3],
    pub legs: [usize; 4],
    pub wheels: Vec<usize>,
    pub wheel_radius: f64,
    pub initial: GeneralizedState,
    /// Flags raised while preparing the initial state.
    pub flags: Vec<String>,
}

fn coord(model: &RobotModel, joint: &str) -> Result<usize, SimError> {
    model.joint_index(joint).ok_or_else(|| SimError::Config(format!("joint `{joint}` does not exist")))
}

impl RigSetup {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        let model = Arc::new(cfg.rig.build());
        let ground: Arc<dyn Ground> = Arc::new(cfg.terrain);
        let contacts: Vec<ContactSpec> = cfg.contacts.iter().cloned().map(|mut c| {
            c.active = true;
            c
        }).collect();
        let cones = contacts.iter().map(build_cone).collect::<Result<Vec<_>, _>>()?;
        let ocp_cones = contacts
            .iter()
            .map(|c| {
                let mut c = c.clone();
                c.mu *= cfg.friction_margin;
                build_cone(&c)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let ee = model.frame_id(names::EE)?;
        let arm = [coord(&model, names::SHOULDER)?, coord(&model, names::ELBOW)?, coord(&model, names::WRIST)?];
        let legs = [
            coord(&model, names::FRONT_HIP)?,
            coord(&model, names::FRONT_KNEE)?,
            coord(&model, names::REAR_HIP)?,
            coord(&model, names::REAR_KNEE)?,
        ];
        let wheels = model.actuators_with_role(JointRole::Wheel).iter().map(|&a| model.actuated()[a]).collect();
        let x0 = cfg.posture.start_x;
        let mut q = cfg.rig.standing_q(&model, x0, ground.height(x0), cfg.posture.legs, cfg.posture.arm);
        let mut flags = Vec::new();
        let target = EeGoal { forward: cfg.ee.forward, height: cfg.ee.height, pitch: cfg.ee.pitch };
        let ik = arm_ik(&model, ee, &arm, &q, &target, 1e-4, 100);
        if ik.unreachable {
            flags.push(format!("initial end-effector target unreachable (error {:.3e})", ik.error));
        }
        for (c, v) in arm.iter().zip(ik.arm) {
            q[*c] = v;
        }
        let mut v = DVector::zeros(model.nv());
        if cfg.initial_noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for c in legs.iter().chain(arm.iter()) {
                v[*c] = rng.random_range(-cfg.initial_noise..=cfg.initial_noise);
            }
        }
        let mut world = World::new(model.clone(), contacts.clone(), ground.clone(), GeneralizedState::new(q, v))?;
        // Make the initial velocity consistent with the contacts.
        world.project_state()?;
        let initial = world.state.clone();
        Ok(Self { model, ground, contacts, cones, ocp_cones, ee, arm, legs, wheels, wheel_radius: cfg.rig.wheel_radius, initial, flags })
    }

    pub fn ee_pose(&self, q: &DVector<f64>) -> Result<(f64, f64, f64), SimError> {
        let p = frame_pose(&self.model, q, self.ee)?;
        Ok((p.position.x, p.position.y, p.angle))
    }
}

/// End-effector goal relative to the measured base.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EeGoal {
    pub forward: f64,
    pub height: f64,
    pub pitch: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkResult {
    pub arm: [f64; 3],
    /// Smallest singular value of the arm Jacobian fell below 1e-3.
    pub singular: bool,
    /// Task error stayed above 1e-3 after the last iteration.
    pub unreachable: bool,
    pub error: f64,
}

/// Damped least-squares IK of the arm joints for the end-effector goal,
/// with base and legs held at their values in `q`.
pub fn arm_ik(model: &RobotModel, ee: FrameId, arm: &[usize; 3], q: &DVector<f64>, goal: &EeGoal, damping: f64, iterations: usize) -> IkResult {
    let mut q = q.clone();
    let mut singular = false;
    let task = |q: &DVector<f64>| -> Vector3<f64> {
        let p = frame_pose(model, q, ee).expect("valid configuration");
        Vector3::new(p.position.x - q[0] - goal.forward, p.position.y - goal.height, p.angle - goal.pitch)
    };
    let mut e = task(&q);
    for _ in 0..iterations {
        if e.norm() < 1e-10 {
            break;
        }
        let j = frame_jacobian(model, &q, ee).expect("valid configuration");
        let ja = Matrix3::from_fn(|r, c| j[(r, arm[c])]);
        let sv = ja.singular_values();
        if sv.min() < 1e-3 {
            singular = true;
        }
        let gram = ja * ja.transpose() + Matrix3::identity() * damping * damping;
        let step = ja.transpose() * gram.try_inverse().unwrap_or_else(Matrix3::zeros) * (-e);
        for c in 0..3 {
            q[arm[c]] += step[c];
        }
        e = task(&q);
    }
    let error = e.norm();
    IkResult { arm: [q[arm[0]], q[arm[1]], q[arm[2]]], singular, unreachable: error > 1e-3, error }
}

/// Servo holding the locked joints of `mode` at `targets` (velocity index to angle).
pub fn lock_servo(cfg: &ScenarioConfig, model: &RobotModel, mode: LocomotionMode, targets: &BTreeMap<usize, f64>) -> JointServo {
    let roles = model.coordinate_roles();
    let joints = mode
        .locked_actuators(model)
        .iter()
        .map(|&a| {
            let c = model.actuated()[a];
            let (kp, kd) = match roles[c] {
                JointRole::Wheel | JointRole::Steering => (cfg.servo.wheel_kp, cfg.servo.wheel_kd),
                _ => (cfg.servo.leg_kp, cfg.servo.leg_kd),
            };
            ServoJoint { coord: c, target: targets[&c], kp, kd, bias: 0.0 }
        })
        .collect();
    JointServo { joints }
}

/// Whole-body problem of the sagittal rig for the current mode.
pub struct RigProblem<'a> {
    pub cfg: &'a ScenarioConfig,
    pub setup: &'a RigSetup,
    /// Angles the locked joints are held at.
    pub lock_targets: BTreeMap<usize, f64>,
    /// Base pose `[x, z, pitch]` tracked in legged mode.
    pub base_ref: [f64; 3],
    pub arm_ref: [f64; 3],
}

impl ProblemBuilder for RigProblem<'_> {
    fn build(&self, x0: &DVector<f64>, t: f64, mode: LocomotionMode) -> Result<OcpProblem, ControlError> {
        let cfg = self.cfg;
        let s = self.setup;
        let m = &s.model;
        let (nq, nv) = (m.nq(), m.nv());
        let nx = nq + nv;
        let h = &cfg.horizon;
        let w = &cfg.weights;
        let dynamics = Arc::new(WholeBodyDynamics {
            model: m.clone(),
            contacts: s.contacts.clone(),
            ground: s.ground.clone(),
            dt: h.dt,
            free: mode.free_actuators(m),
            servo: lock_servo(cfg, m, mode, &self.lock_targets),
        });
        let nu = dynamics.free.len();
        let frame = |c: FrameComponent, r: f64, rel: bool| {
            FrameTaskResidual::new(m.clone(), names::EE, vec![c], Reference::Constant(DVector::from_element(1, r)), rel)
        };
        let mut state_terms = vec![
            CostTerm::quadratic(CostKind::ArmPose, w.ee_height, frame(FrameComponent::Z, cfg.ee.height, false)?),
            CostTerm::quadratic(CostKind::ArmPose, w.ee_pitch, frame(FrameComponent::Pitch, cfg.ee.pitch, false)?),
            CostTerm::quadratic(CostKind::ArmPose, w.ee_forward, frame(FrameComponent::X, cfg.ee.forward, true)?),
            CostTerm::quadratic(CostKind::ComTracking, w.com, ComSupportResidual::new(m.clone(), &support_frames(&s.contacts), 0.0)?),
            CostTerm::quadratic(
                CostKind::LegTracking,
                w.leg_posture,
                StateResidual::new(nx, nu, s.legs.to_vec(), Reference::Constant(DVector::from_column_slice(&cfg.posture.legs))),
            ),
            CostTerm::quadratic(
                CostKind::Regularization,
                w.arm_posture,
                StateResidual::new(nx, nu, s.arm.to_vec(), Reference::Constant(DVector::from_column_slice(&self.arm_ref))),
            ),
        ];
        let joint_v: Vec<usize> = s.legs.iter().chain(s.arm.iter()).map(|c| nq + c).collect();
        state_terms.push(CostTerm::quadratic(
            CostKind::Regularization,
            w.joint_velocity,
            StateResidual::new(nx, nu, joint_v.clone(), Reference::Constant(DVector::zeros(joint_v.len()))),
        ));
        match mode {
            LocomotionMode::Wheeled => {
                let at = |k: usize| t + k as f64 * h.dt;
                let speeds = (0..=h.n).map(|k| DVector::from_element(1, cfg.motion.speed_at(at(k)))).collect();
                let xs = (0..=h.n).map(|k| DVector::from_element(1, self.base_ref[0] + cfg.motion.distance_at(at(k)))).collect();
                state_terms.push(CostTerm::quadratic(
                    CostKind::BasePose,
                    w.base_velocity,
                    StateResidual::new(nx, nu, vec![nq], Reference::Trajectory(speeds)),
                ));
                state_terms.push(CostTerm::quadratic(
                    CostKind::BasePose,
                    w.base_position,
                    StateResidual::new(nx, nu, vec![0], Reference::Trajectory(xs)),
                ));
            }
            LocomotionMode::Legged => {
                state_terms.push(CostTerm::quadratic(
                    CostKind::BasePose,
                    w.base_pose,
                    StateResidual::new(nx, nu, vec![0, 1, 2], Reference::Constant(DVector::from_column_slice(&self.base_ref))),
                ));
                state_terms.push(CostTerm::quadratic(
                    CostKind::BasePose,
                    w.base_velocity,
                    StateResidual::new(nx, nu, vec![nq, nq + 1, nq + 2], Reference::Constant(DVector::zeros(3))),
                ));
            }
        }
        let mut stage = state_terms.clone();
        stage.push(CostTerm::quadratic(CostKind::Regularization, w.control, ControlResidual { reference: Reference::Constant(DVector::zeros(nu)) }));
        let cones = s.ocp_cones.iter().enumerate().map(|(i, c)| (6 * i, c.clone())).collect();
        stage.push(CostTerm::hinge(CostKind::ContactForce, w.contact_force, ConeResidual { cones }).with_band(cfg.cone_band));
        let terminal = state_terms
            .into_iter()
            .map(|mut term| {
                term.weight *= w.terminal_scale;
                term
            })
            .collect();
        Ok(OcpProblem { horizon: h.n, dt: h.dt, dynamics, stage, terminal, x0: x0.clone() })
    }

    /// Static contact-consistent torques of the free joints at the initial state.
    fn initial_guess(&self, problem: &OcpProblem, mode: LocomotionMode) -> Option<Vec<DVector<f64>>> {
        let s = self.setup;
        let q = problem.x0.rows(0, s.model.nq()).into_owned();
        let u = static_torques(&s.model, &s.contacts, s.ground.as_ref(), &q).ok()?;
        let free = mode.free_actuators(&s.model);
        let u = DVector::from_iterator(free.len(), free.iter().map(|&a| u[a]));
        Some(vec![u; problem.horizon])
    }
}

/// Smallest actuator torques (with contact forces) that hold `q` at rest:
/// minimum-norm solution of `Sᵀ u + J_cᵀ λ = g(q)`.
pub fn static_torques(model: &RobotModel, contacts: &[ContactSpec], ground: &dyn Ground, q: &DVector<f64>) -> Result<DVector<f64>, SimError> {
    let (nv, nu) = (model.nv(), model.nu());
    let g = bias_forces(model, &GeneralizedState::new(q.clone(), DVector::zeros(nv)), model.gravity())?;
    let jc = contact_jacobian(model, q, contacts, ground)?;
    let mut a = DMatrix::zeros(nv, nu + jc.nrows());
    a.columns_mut(0, nu).copy_from(&model.selection().transpose());
    a.columns_mut(nu, jc.nrows()).copy_from(&jc.transpose());
    let y = a.svd(true, true).solve(&g, 1e-10).map_err(|e| SimError::Config(e.to_string()))?;
    Ok(y.rows(0, nu).into_owned())
}

/// Static torques of `actuators` holding the configuration in `x`, ignoring
/// contacts (exact for joints outboard of every contact, such as the arm).
pub fn gravity_torques(model: &RobotModel, x: &DVector<f64>, actuators: &[usize]) -> Result<DVector<f64>, SimError> {
    let q = x.rows(0, model.nq()).into_owned();
    let g = bias_forces(model, &GeneralizedState::new(q, DVector::zeros(model.nv())), model.gravity())?;
    Ok(DVector::from_iterator(actuators.len(), actuators.iter().map(|&a| g[model.actuated()[a]])))
}

fn support_frames(contacts: &[ContactSpec]) -> Vec<&str> {
    contacts.iter().map(|c| c.frame.as_str()).collect()
}

fn requested_mode(cfg: &ScenarioConfig, t: f64, current: LocomotionMode) -> LocomotionMode {
    cfg.modes.iter().filter(|m| m.t <= t + 1e-12).last().map_or(current, |m| m.mode)
}

/// Telemetry columns appended after `mode`.
const EXTRA: [&str; 7] = ["speed_ref", "solver_iterations", "degraded", "penetration", "cone_penalty", "zmp_in_support", "ik_flag"];

/// Runs a sagittal-rig scenario with the configured controller.
pub fn run_rig(cfg: &ScenarioConfig) -> Result<(TrajectoryLog, MetricsReport), SimError> {
    run_rig_paired(cfg, false).map(|(log, report, _)| (log, report))
}

pub(crate) fn run_rig_paired(cfg: &ScenarioConfig, paired: bool) -> Result<(TrajectoryLog, MetricsReport, Vec<PairedSolve>), SimError> {
    let setup = RigSetup::new(cfg)?;
    let m = setup.model.clone();
    let (nq, nv, nu) = (m.nq(), m.nv(), m.nu());
    let mut world = World::new(m.clone(), setup.contacts.clone(), setup.ground.clone(), setup.initial.clone())?;

    let mut columns = vec!["t".to_string()];
    let coords = m.coordinate_names();
    columns.extend(coords.iter().map(|c| format!("q_{c}")));
    columns.extend(coords.iter().map(|c| format!("v_{c}")));
    columns.extend(m.actuated().iter().map(|&c| format!("u_{}", coords[c])));
    for c in &setup.contacts {
        for k in ["fx", "fy", "fz", "tx", "ty", "tz"] {
            columns.push(format!("{}_{k}", c.frame));
        }
    }
    columns.extend(["ee_x", "ee_z", "ee_pitch", "zmp_x"].map(String::from));
    let mut log = TrajectoryLog::new(columns, EXTRA.map(String::from).to_vec());
    log.header = cfg.to_toml_string().lines().map(String::from).collect();

    let mut report = MetricsReport {
        scenario: cfg.name.clone(),
        controller: match cfg.controller {
            ControllerKind::WholeBody => "whole_body".into(),
            ControllerKind::IkBaseline => "ik_baseline".into(),
        },
        metrics: BTreeMap::new(),
        flags: setup.flags.clone(),
    };

    let mut machine = ModeMachine::new(requested_mode(cfg, 0.0, LocomotionMode::Wheeled));
    let mut lock_targets: BTreeMap<usize, f64> = (0..nv).map(|c| (c, setup.initial.q[c])).collect();
    let base0 = [setup.initial.q[0], setup.initial.q[1], setup.initial.q[2]];
    let arm_ref = setup.arm.map(|c| setup.initial.q[c]);
    let mut rh = RecedingHorizon::new(cfg.solver.options());
    rh.warm_start = cfg.solver.warm_start;
    rh.hold = cfg.horizon.hold;
    rh.paired_cold = paired;
    let mut since_solve = usize::MAX;
    let goal = EeGoal { forward: cfg.ee.forward, height: cfg.ee.height, pitch: cfg.ee.pitch };

    let ticks = (cfg.duration / cfg.dt).round() as usize;
    let mut last_iterations = 0.0;
    let mut last_degraded = 0.0;
    let (mut ik_singular, mut ik_unreachable) = (0usize, 0usize);
    let mut applied_kicks = vec![false; cfg.kicks.len()];
    let mut switches = 0;
    let mut iterations_total = 0usize;
    for tick in 0..ticks {
        let t = tick as f64 * cfg.dt;
        for (i, kick) in cfg.kicks.iter().enumerate() {
            if !applied_kicks[i] && t + 0.5 * cfg.dt >= kick.t {
                applied_kicks[i] = true;
                world.state.v[0] += kick.velocity;
                for &w in &setup.wheels {
                    world.state.v[w] -= kick.velocity / setup.wheel_radius;
                }
            }
        }
        let before = machine.mode();
        let mode = machine.mode_step(requested_mode(cfg, t, before), world.all_engaged());
        if mode != before {
            switches += 1;
            since_solve = usize::MAX;
            for c in 0..nv {
                lock_targets.insert(c, world.state.q[c]);
            }
            rh.reset_warm_start();
        }
        let mut servo = lock_servo(cfg, &m, mode, &lock_targets);
        let mut u = DVector::zeros(nu);
        let mut ik_flag = 0.0;
        let x = world.state.to_vector();
        match cfg.controller {
            ControllerKind::WholeBody => {
                if since_solve >= cfg.horizon.solve_every {
                    since_solve = 0;
                    let builder = RigProblem { cfg, setup: &setup, lock_targets: lock_targets.clone(), base_ref: base0, arm_ref };
                    let out = rh.rh_step(&builder, &x, t, mode)?;
                    last_iterations = out.iterations as f64;
                    iterations_total += out.iterations;
                    last_degraded = if out.degraded { 1.0 } else { 0.0 };
                    if rh.consecutive_degraded > cfg.solver.degraded_budget {
                        return Err(SimError::Degraded { t, steps: rh.consecutive_degraded });
                    }
                }
                since_solve += 1;
                let (policy, start) = rh.policy().ok_or(ControlError::NoPolicy)?;
                let tau = lfc_torque(policy, &x, t - start)?.tau;
                for (i, &a) in mode.free_actuators(&m).iter().enumerate() {
                    u[a] = tau[i];
                }
            }
            ControllerKind::IkBaseline => {
                let b = &cfg.baseline;
                if mode == LocomotionMode::Wheeled {
                    let err = cfg.motion.speed_at(t) - world.state.v[0];
                    for a in m.actuators_with_role(JointRole::Wheel) {
                        u[a] = -b.wheel_gain * err / setup.wheels.len() as f64;
                    }
                }
                let ik = arm_ik(&m, setup.ee, &setup.arm, &world.state.q, &goal, b.damping, b.ik_iterations);
                if ik.singular {
                    ik_singular += 1;
                    ik_flag = 1.0;
                }
                if ik.unreachable {
                    ik_unreachable += 1;
                    ik_flag = 2.0;
                }
                let arm_actuators: Vec<usize> = setup.arm.iter().map(|c| m.actuated().iter().position(|a| a == c).expect("arm is actuated")).collect();
                let g = gravity_torques(&m, &world.state.q, &arm_actuators)?;
                for (k, &c) in setup.arm.iter().enumerate() {
                    servo.joints.push(ServoJoint { coord: c, target: ik.arm[k], kp: b.arm_kp, kd: b.arm_kd, bias: g[k] });
                }
            }
        }
        let step = world.step(&u, &servo, cfg.dt)?;
        let mut applied = u.clone();
        for (j, tau) in servo.joints.iter().zip(&step.servo_torques) {
            if let Some(a) = m.actuated().iter().position(|&c| c == j.coord) {
                applied[a] += tau;
            }
        }

        let s = &world.state;
        let (ex, ez, ep) = setup.ee_pose(&s.q)?;
        let mut world_wrenches = Vec::new();
        let mut penalty: f64 = 0.0;
        for (i, c) in world.contacts.iter().enumerate() {
            if c.active {
                world_wrenches.push((step.points[i].position3(), step.points[i].to_world(&step.wrenches[i])));
                penalty = penalty.max(cone_penalty(&cone_residual(&setup.cones[i], &step.wrenches[i])).0);
            }
        }
        let z = zmp(&world_wrenches, &Vector3::z(), 1e-6).map(|p| p.x).unwrap_or(f64::NAN);
        let support: Vec<Vector2<f64>> = step.points.iter().map(|p| Vector2::new(p.position.x, 0.0)).collect();
        let inside = if z.is_finite() && world.all_engaged() && in_support(&Vector2::new(z, 0.0), &support, 1e-9) { 1.0 } else { 0.0 };

        let mut row = Vec::with_capacity(log.columns.len());
        row.push(world.t);
        row.extend(s.q.iter());
        row.extend(s.v.iter());
        row.extend(applied.iter());
        for w in &step.wrenches {
            row.extend(w.iter());
        }
        row.extend([ex, ez, ep, z]);
        let extra = vec![cfg.motion.speed_at(t), last_iterations, last_degraded, step.penetration, penalty, inside, ik_flag];
        log.push(row, mode, extra);
    }
    debug_assert_eq!(log.columns.len(), 1 + nq + nv + nu + 6 * setup.contacts.len() + 4);

    // Metrics.
    let rows: Vec<_> = log.rows.iter().filter(|r| r.values[0] >= cfg.metrics_from - 1e-12).collect();
    let col = |name: &str| -> Vec<f64> {
        let i = log.columns.iter().position(|c| c == name).expect("column");
        rows.iter().map(|r| r.values[i]).collect()
    };
    let extra = |name: &str| -> Vec<f64> {
        let i = log.extra_columns.iter().position(|c| c == name).expect("column");
        rows.iter().map(|r| r.extra[i]).collect()
    };
    let max_abs = |xs: &[f64], target: f64| xs.iter().map(|x| (x - target).abs()).fold(0.0, f64::max);
    let ez = col("ee_z");
    let (zm, zs) = mean_std(&ez);
    report.set("ee_height_mean", zm);
    report.set("ee_height_std", zs);
    report.set("ee_height_max_error", max_abs(&ez, cfg.ee.height));
    let ep = col("ee_pitch");
    let (pm, ps) = mean_std(&ep);
    report.set("ee_pitch_mean", pm);
    report.set("ee_pitch_std", ps);
    report.set("ee_pitch_max_error", max_abs(&ep, cfg.ee.pitch));
    let bx = col(&format!("q_{}", coords[0]));
    let bvx = col(&format!("v_{}", coords[0]));
    let final_x = *log.rows.last().map(|r| &r.values[1]).unwrap_or(&f64::NAN);
    report.set("base_x_final", final_x);
    let x_err: Vec<f64> = rows.iter().zip(&bx).map(|(r, x)| x - base0[0] - cfg.motion.distance_at(r.values[0])).collect();
    report.set("base_return_error", x_err.last().map_or(f64::NAN, |e| e.abs()));
    report.set("base_max_deviation", max_abs(&x_err, 0.0));
    let speed_err: Vec<f64> = rows.iter().zip(&bvx).map(|(r, v)| v - cfg.motion.speed_at(r.values[0])).collect();
    report.set("base_speed_rms_error", (speed_err.iter().map(|e| e * e).sum::<f64>() / speed_err.len().max(1) as f64).sqrt());
    report.set("max_penetration", extra("penetration").iter().fold(0.0, |a: f64, b| a.max(*b)));
    report.set("max_cone_penalty", extra("cone_penalty").iter().fold(0.0, |a: f64, b| a.max(*b)));
    let inside = extra("zmp_in_support");
    report.set("zmp_in_support_fraction", inside.iter().sum::<f64>() / inside.len().max(1) as f64);
    report.set("mode_switches", switches as f64);
    if cfg.controller == ControllerKind::WholeBody {
        report.set("solves", rh.solves as f64);
        report.set("degraded_solves", rh.degraded_steps as f64);
        report.set("mean_iterations", iterations_total as f64 / rh.solves.max(1) as f64);
    } else {
        report.set("ik_singular_steps", ik_singular as f64);
        report.set("ik_unreachable_steps", ik_unreachable as f64);
        if ik_unreachable > 0 {
            report.flags.push(format!("IK target unreachable on {ik_unreachable} steps"));
        }
        if ik_singular > 0 {
            report.flags.push(format!("IK near singular on {ik_singular} steps"));
        }
    }
    Ok((log, report, rh.pairs))
}
