use std::sync::Arc;

use nalgebra::{DVector, Vector2};

use super::*;
use crate::contact::{ContactKind, ContactSpec, FlatGround, Ground};
use crate::control::JointServo;
use crate::rbd::rig::{self, RigParams};
use crate::rbd::{kinetic_energy, potential_energy, GeneralizedState};

fn free_world(model: crate::rbd::RobotModel, contacts: Vec<ContactSpec>, q: DVector<f64>) -> World {
    let model = Arc::new(model);
    let v = DVector::zeros(model.nv());
    World::new(model, contacts, Arc::new(FlatGround::default()), GeneralizedState::new(q, v)).unwrap()
}

fn no_servo() -> JointServo {
    JointServo { joints: Vec::new() }
}

#[test]
fn free_fall_matches_ballistic_drop() {
    let mut w = free_world(rig::point_mass(2.0, 9.81), Vec::new(), DVector::from_vec(vec![0.0, 10.0, 0.0]));
    let u = DVector::zeros(0);
    for _ in 0..1000 {
        w.step(&u, &no_servo(), 1e-3).unwrap();
    }
    let drop = 10.0 - w.state.q[1];
    assert!((drop - 4.905).abs() / 4.905 < 5e-3, "drop {drop}");
    assert!((w.t - 1.0).abs() < 1e-9);
}

#[test]
fn resting_point_mass_carries_its_weight() {
    let mass = 3.0;
    let contact = ContactSpec::new("contact", ContactKind::Point, 0.8);
    let mut w = free_world(rig::point_mass(mass, 9.81), vec![contact], DVector::from_vec(vec![0.2, 0.0, 0.0]));
    let u = DVector::zeros(0);
    for _ in 0..200 {
        let r = w.step(&u, &no_servo(), 1e-3).unwrap();
        assert!((r.wrenches[0][2] - mass * 9.81).abs() < 1e-9 * mass * 9.81);
        assert!(r.wrenches[0][0].abs() < 1e-9);
    }
    assert!((w.state.q[0] - 0.2).abs() < 1e-12 && w.state.q[1].abs() < 1e-12);
}

#[test]
fn step_rejects_bad_dt() {
    let mut w = free_world(rig::point_mass(1.0, 9.81), Vec::new(), DVector::zeros(3));
    let u = DVector::zeros(0);
    assert_eq!(w.step(&u, &no_servo(), 0.0).unwrap_err(), SimError::InvalidStep(0.0));
    assert!(w.step(&u, &no_servo(), 2.0 * MAX_DT).is_err());
}

/// Energy error of an undamped pendulum released at 1 rad.
fn pendulum_energy(dt: f64, duration: f64) -> Vec<f64> {
    let model = rig::pendulum(1.0, 1.0, 9.81);
    let mut w = free_world(model, Vec::new(), DVector::from_vec(vec![1.0]));
    let energy = |w: &World| kinetic_energy(&w.model, &w.state).unwrap() + potential_energy(&w.model, &w.state.q).unwrap();
    let e0 = energy(&w);
    let u = DVector::zeros(w.model.nu());
    let steps = (duration / dt).round() as usize;
    let stride = (0.01 / dt).round() as usize;
    let mut out = Vec::new();
    for k in 1..=steps {
        w.step(&u, &no_servo(), dt).unwrap();
        if k % stride == 0 {
            out.push(energy(&w) - e0);
        }
    }
    out
}

#[test]
fn pendulum_energy_drift_is_bounded_and_tracks_refined_step() {
    let coarse = pendulum_energy(1e-3, 10.0);
    let fine = pendulum_energy(1e-4, 10.0);
    let e_ref = 9.81 * (1.0 - 1.0f64.cos());
    let max_c = coarse.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let max_f = fine.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    // Symplectic Euler: bounded oscillation of first order in dt, no secular growth.
    assert!(max_c < 1e-2 * e_ref, "coarse drift {max_c}");
    assert!(max_f < 0.2 * max_c, "fine {max_f} coarse {max_c}");
    let half = coarse.len() / 2;
    let early = coarse[..half].iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let late = coarse[half..].iter().fold(0.0f64, |m, e| m.max(e.abs()));
    assert!(late < 1.5 * early, "drift grows: {early} -> {late}");
    // Same sign as the refined run wherever the error is resolvable.
    let mut agree = 0;
    let mut resolvable = 0;
    for (c, f) in coarse.iter().zip(&fine) {
        if c.abs() > 0.1 * max_c {
            resolvable += 1;
            if c.signum() == f.signum() {
                agree += 1;
            }
        }
    }
    assert!(agree as f64 >= 0.95 * resolvable as f64, "{agree}/{resolvable}");
}

#[test]
fn wave_terrain_is_continuous_with_consistent_normals() {
    let t = Terrain::wave();
    let Terrain::Wave { start, length, .. } = t else { unreachable!() };
    for x in [start, start + length] {
        for e in [1e-9, -1e-9] {
            assert!((t.height(x + e) - t.height(x)).abs() < 1e-8);
            assert!((t.slope(x + e) - t.slope(x)).abs() < 1e-7);
        }
    }
    let h = 1e-6;
    let mut x = start - 1.0;
    let mut peak: f64 = 0.0;
    while x < start + length + 1.0 {
        let fd_slope = (t.height(x + h) - t.height(x - h)) / (2.0 * h);
        let fd_curv = (t.slope(x + h) - t.slope(x - h)) / (2.0 * h);
        assert!((fd_slope - t.slope(x)).abs() < 1e-6, "slope at {x}");
        if (x - start).abs() > 1e-3 && (x - start - length).abs() > 1e-3 {
            assert!((fd_curv - t.curvature(x)).abs() < 1e-5, "curvature at {x}");
        }
        let (tan, n) = t.frame(x);
        assert!((n.norm() - 1.0).abs() < 1e-12 && tan.dot(&n).abs() < 1e-12);
        assert!(n.y > 0.0);
        assert!((tan.y / tan.x - t.slope(x)).abs() < 1e-12);
        peak = peak.max(t.height(x));
        x += 0.013;
    }
    assert!((peak - 0.2).abs() < 1e-3);
    assert_eq!(Terrain::default().height(3.0), 0.0);
}

#[test]
fn wave_length_must_hold_whole_periods() {
    let t = Terrain::Wave { start: 0.0, length: 3.0, peak: 0.2, wavelength: 2.3 };
    assert!(t.validate().is_err());
}

const TERRAIN: &str = r#"
name = "t"
model = "sagittal_rig"
duration = 0.3
seed = 7
[terrain]
kind = "wave"
[ee]
height = 0.92
pitch = -1.5708
forward = 0.25
"#;

#[test]
fn config_round_trips_through_log_header() {
    let mut cfg = ScenarioConfig::from_toml_str(TERRAIN).unwrap();
    cfg.controller = ControllerKind::IkBaseline;
    let (log, _) = run_scenario(&cfg).unwrap();
    let csv = log.to_csv_string();
    let header = TrajectoryLog::read_header(csv.as_bytes()).unwrap();
    let back = ScenarioConfig::from_toml_str(&header.join("\n")).unwrap();
    assert_eq!(back, cfg);
    let columns = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(columns.starts_with("t,q_"));
    assert!(columns.contains(",mode,"));
}

#[test]
fn overrides_and_validation() {
    let cfg = ScenarioConfig::from_toml_with_overrides(TERRAIN, &["seed=9".into(), "ee.height=0.9".into()]).unwrap();
    assert_eq!((cfg.seed, cfg.ee.height), (9, 0.9));
    for bad in ["duration=-1", "friction_margin=1.5", "dt=0.5", "horizon.N=0"] {
        let err = ScenarioConfig::from_toml_with_overrides(TERRAIN, &[bad.into()]).unwrap_err();
        assert!(matches!(err, SimError::Config(_)), "{bad}: {err:?}");
    }
    assert!(ScenarioConfig::from_toml_str("name = \"x\"\nbogus = 1\n").is_err());
}

#[test]
fn runs_are_deterministic() {
    let mut cfg = ScenarioConfig::from_toml_str(TERRAIN).unwrap();
    cfg.initial_noise = 0.05;
    let (a, _) = run_scenario(&cfg).unwrap();
    let (b, _) = run_scenario(&cfg).unwrap();
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    cfg.seed += 1;
    let (c, _) = run_scenario(&cfg).unwrap();
    assert_ne!(a.to_csv_string(), c.to_csv_string());
}

#[test]
fn double_stance_zmp_stays_in_support() {
    let cfg = ScenarioConfig::from_toml_str(TERRAIN).unwrap();
    let (log, report) = run_scenario(&cfg).unwrap();
    assert_eq!(report.get("zmp_in_support_fraction"), Some(1.0));
    assert!(log.column("zmp_in_support").unwrap().iter().all(|&v| v == 1.0));
    assert!(report.get("max_cone_penalty").unwrap() <= 1e-6);
}

#[test]
fn unreachable_ik_goal_is_flagged() {
    let model = rig::sagittal_rig();
    let p = RigParams::default();
    let q = p.standing_q(&model, 0.0, 0.0, crate::rbd::rig::NOMINAL_LEGS, [0.0, 0.0, 0.0]);
    let ee = model.frame_id(crate::rbd::rig::names::EE).unwrap();
    let arm = [9, 10, 11];
    let far = arm_ik(&model, ee, &arm, &q, &EeGoal { forward: 0.2, height: 5.0, pitch: 0.0 }, 1e-4, 100);
    assert!(far.unreachable && far.error > 1e-3);
    let near = arm_ik(&model, ee, &arm, &q, &EeGoal { forward: 0.25, height: 0.92, pitch: -1.5708 }, 1e-4, 100);
    assert!(!near.unreachable && near.error < 1e-6);
}

#[test]
fn flat_ground_ik_and_whole_body_are_comparable() {
    let mut cfg = ScenarioConfig::from_toml_str(TERRAIN).unwrap();
    cfg.terrain = Terrain::default();
    cfg.duration = 1.5;
    let (_, wbc) = run_scenario(&cfg).unwrap();
    cfg.controller = ControllerKind::IkBaseline;
    let (_, ik) = run_scenario(&cfg).unwrap();
    // Errors below a millimetre are treated as equal.
    let floor = 1e-3;
    let (a, b) = (wbc.get("ee_height_max_error").unwrap().max(floor), ik.get("ee_height_max_error").unwrap().max(floor));
    assert!(a <= 2.0 * b && b <= 2.0 * a, "whole body {a}, ik {b}");
}

#[test]
fn gait_schedule_reference_is_smooth() {
    let s = GaitSchedule::new(&SwerveConfig::default());
    assert_eq!(s.segments.len(), 4);
    let (p0, r0) = s.reference(0.0);
    assert_eq!((p0, r0), (nalgebra::Vector3::zeros(), nalgebra::Vector3::zeros()));
    for seg in &s.segments {
        let (p, r) = s.reference(seg.end() + 1e-9);
        assert!((p - seg.to).norm() < 1e-9 && r.norm() < 1e-6);
        let h = 1e-6;
        let tm = seg.start + 0.37 * seg.duration;
        let fd = (s.reference(tm + h).0 - s.reference(tm - h).0) / (2.0 * h);
        assert!((fd - s.reference(tm).1).norm() < 1e-6);
    }
    assert!((s.duration() - (0.5 + 4.0 * 3.5)).abs() < 1e-12);
}

#[test]
fn static_wheel_forces_balance_weight() {
    let layout = SwerveConfig::default().layout;
    let f = wheel_forces(&layout, 25.0, 0.45, 9.81, &Vector2::zeros(), 0.0);
    for fi in &f {
        assert!((fi.z - 25.0 * 9.81 / 4.0).abs() < 1e-9);
        assert!(fi.x.abs() < 1e-9 && fi.y.abs() < 1e-9);
    }
    // Forward acceleration shifts load to the rear.
    let f = wheel_forces(&layout, 25.0, 0.45, 9.81, &Vector2::new(1.0, 0.0), 0.0);
    assert!(f[2].z > f[0].z);
    let total: nalgebra::Vector3<f64> = f.iter().sum();
    assert!((total.x - 25.0).abs() < 1e-9 && (total.z - 25.0 * 9.81).abs() < 1e-9);
}

#[test]
fn support_margin_signs() {
    let hull = [Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(1.0, 1.0), Vector2::new(0.0, 1.0)];
    assert!((support_margin(&Vector2::new(0.5, 0.5), &hull) - 0.5).abs() < 1e-12);
    assert!((support_margin(&Vector2::new(1.2, 0.5), &hull) + 0.2).abs() < 1e-12);
}

#[test]
fn swerve_duration_must_cover_the_sequence() {
    let text = "name = \"g\"\nmodel = \"swerve\"\nduration = 5.0\n";
    let err = ScenarioConfig::from_toml_str(text).unwrap_err();
    assert!(err.to_string().contains("duration"));
}
