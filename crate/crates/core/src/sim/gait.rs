use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use super::config::{ScenarioConfig, SwerveConfig};
use super::log::{MetricsReport, TrajectoryLog};
use super::SimError;
use crate::contact::{convex_hull, in_support, zmp, ContactWrench};
use crate::control::{lfc_torque, ControlError, LocomotionMode, ModeMachine, PairedSolve, ProblemBuilder, RecedingHorizon};
use crate::ocp::{ControlResidual, CostKind, CostTerm, OcpProblem, Reference, StateResidual};
use crate::swerve::{angle_diff, reconstruct_from_commands, SwerveDynamics, SwerveMapper, SwerveState, WheelLayout};

/// One move of the gait sequence: a minimum-jerk blend between two poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub name: &'static str,
    pub start: f64,
    pub duration: f64,
    pub from: Vector3<f64>,
    pub to: Vector3<f64>,
}

impl Segment {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }
}

/// Straight run, in-place rotation, rotation back and crab walk, each
/// followed by a pause.
#[derive(Clone, Debug, PartialEq)]
pub struct GaitSchedule {
    pub segments: Vec<Segment>,
    pub pause: f64,
}

impl GaitSchedule {
    pub fn new(s: &SwerveConfig) -> Self {
        let moves: [(&'static str, Vector3<f64>); 4] = [
            ("straight", Vector3::new(s.straight, 0.0, 0.0)),
            ("rotate", Vector3::new(s.straight, 0.0, s.rotation)),
            ("return", Vector3::new(s.straight, 0.0, 0.0)),
            ("crab", Vector3::new(s.straight, s.crab, 0.0)),
        ];
        let mut t = s.pause;
        let mut from = Vector3::zeros();
        let mut segments = Vec::new();
        for (name, to) in moves {
            segments.push(Segment { name, start: t, duration: s.move_time, from, to });
            t += s.move_time + s.pause;
            from = to;
        }
        Self { segments, pause: s.pause }
    }

    /// Time at which the last pause ends.
    pub fn duration(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end() + self.pause)
    }

    /// Reference pose `[x, y, θ]` and its world-frame rate at `t`.
    pub fn reference(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let mut pose = self.segments.first().map_or(Vector3::zeros(), |s| s.from);
        for s in &self.segments {
            if t < s.start {
                break;
            }
            let tau = ((t - s.start) / s.duration).clamp(0.0, 1.0);
            let blend = tau.powi(3) * (10.0 - 15.0 * tau + 6.0 * tau * tau);
            pose = s.from + (s.to - s.from) * blend;
            if tau < 1.0 {
                let rate = 30.0 * tau * tau * (1.0 - tau).powi(2) / s.duration;
                return (pose, (s.to - s.from) * rate);
            }
        }
        (pose, Vector3::zeros())
    }
}

/// Body twist corresponding to a world-frame pose rate at heading `theta`.
fn body_twist(theta: f64, rate: &Vector3<f64>) -> Vector3<f64> {
    let (s, c) = theta.sin_cos();
    Vector3::new(c * rate.x + s * rate.y, -s * rate.x + c * rate.y, rate.z)
}

/// Quasi-static wheel forces of a rigid base with its mass at height `h`
/// above the wheel plane: the minimum-norm set of body-frame wheel forces
/// producing the body acceleration `a` (x, y), yaw acceleration `alpha`
/// and supporting the weight.
pub fn wheel_forces(layout: &WheelLayout, mass: f64, h: f64, gravity: f64, a: &Vector2<f64>, alpha: f64) -> [Vector3<f64>; 4] {
    let iz = mass * layout.radius_of_gyration_sq() / 4.0;
    // Unknowns [fx_i, fy_i, fz_i] per wheel; rows: force x, y, z, moment x, y, z about the mass centre.
    let mut m = DMatrix::zeros(6, 12);
    let c = layout.centroid();
    for i in 0..4 {
        let r = Vector3::new(layout.positions[i][0] - c.x, layout.positions[i][1] - c.y, -h);
        for k in 0..3 {
            m[(k, 3 * i + k)] = 1.0;
            let mut e = Vector3::zeros();
            e[k] = 1.0;
            let moment = r.cross(&e);
            for row in 0..3 {
                m[(3 + row, 3 * i + k)] = moment[row];
            }
        }
    }
    let rhs = DVector::from_vec(vec![mass * a.x, mass * a.y, mass * gravity, 0.0, 0.0, iz * alpha]);
    let f = m.svd(true, true).solve(&rhs, 1e-12).expect("svd with both factors");
    std::array::from_fn(|i| Vector3::new(f[3 * i], f[3 * i + 1], f[3 * i + 2]))
}

/// Signed distance from `p` to the boundary of the convex polygon `hull`
/// (counter-clockwise), positive inside.
pub fn support_margin(p: &Vector2<f64>, hull: &[Vector2<f64>]) -> f64 {
    let k = hull.len();
    if k < 3 {
        return f64::NEG_INFINITY;
    }
    (0..k)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % k]);
            let e = b - a;
            (e.x * (p.y - a.y) - e.y * (p.x - a.x)) / e.norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Top-down tracking problem of the swerve base.
pub struct GaitProblem<'a> {
    pub cfg: &'a ScenarioConfig,
    pub schedule: &'a GaitSchedule,
}

impl ProblemBuilder for GaitProblem<'_> {
    fn build(&self, x0: &DVector<f64>, t: f64, _mode: LocomotionMode) -> Result<OcpProblem, ControlError> {
        let h = &self.cfg.horizon;
        let w = &self.cfg.weights;
        let (nx, nu) = (6, 3);
        let refs: Vec<_> = (0..=h.n).map(|k| self.schedule.reference(t + k as f64 * h.dt)).collect();
        let pos = refs.iter().map(|(p, _)| DVector::from_vec(vec![p.x, p.y])).collect();
        let heading = refs.iter().map(|(p, _)| DVector::from_element(1, p.z)).collect();
        let twist = refs.iter().map(|(p, r)| DVector::from_column_slice(body_twist(p.z, r).as_slice())).collect();
        let state = vec![
            CostTerm::quadratic(CostKind::BasePose, w.swerve_position, StateResidual::new(nx, nu, vec![0, 1], Reference::Trajectory(pos))),
            CostTerm::quadratic(CostKind::SteeringPosture, w.swerve_heading, StateResidual::new(nx, nu, vec![2], Reference::Trajectory(heading))),
            CostTerm::quadratic(CostKind::BasePose, w.swerve_twist, StateResidual::new(nx, nu, vec![3, 4, 5], Reference::Trajectory(twist))),
        ];
        let mut stage = state.clone();
        stage.push(CostTerm::quadratic(CostKind::Regularization, w.swerve_accel, ControlResidual { reference: Reference::Constant(DVector::zeros(nu)) }));
        let terminal = state
            .into_iter()
            .map(|mut term| {
                term.weight *= w.terminal_scale;
                term
            })
            .collect();
        Ok(OcpProblem { horizon: h.n, dt: h.dt, dynamics: Arc::new(SwerveDynamics { dt: h.dt }), stage, terminal, x0: x0.clone() })
    }
}

const WHEELS: [&str; 4] = ["front_left", "front_right", "rear_left", "rear_right"];

/// Runs the wheeled gait sequence on the top-down swerve base.
pub fn run_gait(cfg: &ScenarioConfig) -> Result<(TrajectoryLog, MetricsReport), SimError> {
    run_gait_paired(cfg, false).map(|(log, report, _)| (log, report))
}

pub(crate) fn run_gait_paired(cfg: &ScenarioConfig, paired: bool) -> Result<(TrajectoryLog, MetricsReport, Vec<PairedSolve>), SimError> {
    let sw = &cfg.swerve;
    let layout = sw.layout.clone();
    let schedule = GaitSchedule::new(sw);
    let gravity = 9.81;

    let mut columns: Vec<String> = ["t", "q_x", "q_y", "q_theta", "v_x", "v_y", "v_omega", "u_ax", "u_ay", "u_alpha"].map(String::from).to_vec();
    for w in WHEELS {
        for k in ["fx", "fy", "fz", "tx", "ty", "tz"] {
            columns.push(format!("{w}_{k}"));
        }
    }
    columns.extend(["ee_x", "ee_z", "ee_pitch", "zmp_x"].map(String::from));
    let mut extra: Vec<String> = ["zmp_y", "zmp_margin", "ref_x", "ref_y", "ref_theta", "solver_iterations", "degraded", "twist_residual"]
        .map(String::from)
        .to_vec();
    for w in WHEELS {
        extra.push(format!("{w}_steer"));
        extra.push(format!("{w}_spin"));
    }
    let mut log = TrajectoryLog::new(columns, extra);
    log.header = cfg.to_toml_string().lines().map(String::from).collect();

    let mut rh = RecedingHorizon::new(cfg.solver.options());
    rh.warm_start = cfg.solver.warm_start;
    rh.hold = cfg.horizon.hold;
    rh.paired_cold = paired;
    let mut machine = ModeMachine::new(LocomotionMode::Wheeled);
    let mut mapper = SwerveMapper::new(layout.clone())?;
    let mut st = SwerveState::default();
    // Unwrapped heading for the optimizer; `st.theta` stays wrapped.
    let mut heading = 0.0;
    let builder = GaitProblem { cfg, schedule: &schedule };
    let hull = convex_hull(&(0..4).map(|i| layout.position(i)).collect::<Vec<_>>());

    let ticks = (cfg.duration / cfg.dt).round() as usize;
    let (mut last_iterations, mut last_degraded) = (0.0, 0.0);
    let mut iterations_total = 0usize;
    let (mut violations, mut stance_steps) = (0usize, 0usize);
    let mut min_margin = f64::INFINITY;
    let mut max_twist_residual: f64 = 0.0;
    for tick in 0..ticks {
        let t = tick as f64 * cfg.dt;
        let mode = machine.mode_step(LocomotionMode::Wheeled, true);
        let x = DVector::from_vec(vec![st.x, st.y, heading, st.vx, st.vy, st.omega]);
        if tick % cfg.horizon.solve_every == 0 {
            let out = rh.rh_step(&builder, &x, t, mode)?;
            last_iterations = out.iterations as f64;
            iterations_total += out.iterations;
            last_degraded = if out.degraded { 1.0 } else { 0.0 };
            if rh.consecutive_degraded > cfg.solver.degraded_budget {
                return Err(SimError::Degraded { t, steps: rh.consecutive_degraded });
            }
        }
        let (policy, start) = rh.policy().ok_or(ControlError::NoPolicy)?;
        let accel = lfc_torque(policy, &x, t - start)?.tau;
        let command = st.twist() + Vector3::new(accel[0], accel[1], accel[2]) * cfg.dt;
        let cmds = mapper.command(&command)?;
        let (xi, residual) = reconstruct_from_commands(&cmds, &layout)?;
        max_twist_residual = max_twist_residual.max(residual);

        // Body-frame acceleration of the mass centre over this tick.
        let a = Vector2::new(accel[0] - st.omega * st.vy, accel[1] + st.omega * st.vx);
        let forces = wheel_forces(&layout, sw.mass, sw.com_height, gravity, &a, accel[2]);
        let prev_theta = st.theta;
        st = st.advance(&xi, cfg.dt);
        heading += angle_diff(st.theta, prev_theta);
        if ![st.x, st.y, st.theta, st.vx, st.vy, st.omega].iter().all(|v| v.is_finite()) {
            return Err(SimError::NonFinite { t: t + cfg.dt, what: "swerve state".into() });
        }

        // Wrenches in the body frame at the wheel contacts, ZMP in the body frame.
        let wrenches: Vec<(Vector3<f64>, ContactWrench)> = (0..4)
            .map(|i| {
                let p = layout.position(i);
                let f = forces[i];
                (Vector3::new(p.x, p.y, 0.0), ContactWrench::new(f.x, f.y, f.z, 0.0, 0.0, 0.0))
            })
            .collect();
        let stance = forces.iter().all(|f| f.z > 0.0);
        let (zmp_body, margin) = match zmp(&wrenches, &Vector3::z(), 1e-9) {
            Ok(p) => {
                let p2 = Vector2::new(p.x, p.y);
                (p2, support_margin(&p2, &hull))
            }
            Err(_) => (Vector2::new(f64::NAN, f64::NAN), f64::NEG_INFINITY),
        };
        if stance {
            stance_steps += 1;
            if !in_support(&zmp_body, &hull, 1e-12) {
                violations += 1;
            }
        } else {
            violations += 1;
        }
        min_margin = min_margin.min(margin);
        let rot = Matrix3::new_rotation(st.theta);
        let zmp_world = rot.transform_point(&nalgebra::Point2::new(zmp_body.x, zmp_body.y)) + Vector2::new(st.x, st.y);

        let (r, _) = schedule.reference(t + cfg.dt);
        let mut row = vec![t + cfg.dt, st.x, st.y, heading, st.vx, st.vy, st.omega, accel[0], accel[1], accel[2]];
        for (_, w) in &wrenches {
            row.extend(w.iter());
        }
        row.extend([f64::NAN, f64::NAN, f64::NAN, zmp_world.x]);
        let mut ex = vec![zmp_world.y, margin, r.x, r.y, r.z, last_iterations, last_degraded, residual];
        for c in &cmds {
            ex.push(c.steer);
            ex.push(c.spin);
        }
        log.push(row, mode, ex);
    }

    let mut report = MetricsReport { scenario: cfg.name.clone(), controller: "whole_body".into(), metrics: BTreeMap::new(), flags: Vec::new() };
    // Pose error at the end of the pause following each move.
    let mut complete = true;
    for s in &schedule.segments {
        let t_check = s.end() + schedule.pause;
        let Some(row) = log.rows.iter().find(|r| r.values[0] >= t_check - 0.5 * cfg.dt) else {
            complete = false;
            report.flags.push(format!("{} not reached before the end of the run", s.name));
            continue;
        };
        let err = [row.values[1] - s.to.x, row.values[2] - s.to.y, row.values[3] - s.to.z].iter().fold(0.0f64, |m, e| m.max(e.abs()));
        report.set(&format!("{}_error", s.name), err);
        if err > sw.tolerance {
            complete = false;
            report.flags.push(format!("{} finished {err:.3} away from its goal", s.name));
        }
    }
    report.set("sequence_complete", if complete { 1.0 } else { 0.0 });
    report.set("zmp_violations", violations as f64);
    report.set("stance_steps", stance_steps as f64);
    report.set("min_zmp_margin", min_margin);
    report.set("max_twist_residual", max_twist_residual);
    report.set("solves", rh.solves as f64);
    report.set("degraded_solves", rh.degraded_steps as f64);
    report.set("mean_iterations", iterations_total as f64 / rh.solves.max(1) as f64);
    let heading_col = log.column("q_theta").expect("column");
    report.set("max_heading", heading_col.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    Ok((log, report, rh.pairs))
}
