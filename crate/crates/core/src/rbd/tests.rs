use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::rig::{self, names};
use super::*;

/// Closed-form double-pendulum dynamics from the Lagrangian
/// L = T - V with point masses at the link tips (q1 absolute, q2 relative).
fn double_pendulum_oracle(m1: f64, m2: f64, l1: f64, l2: f64, g: f64, q: &[f64; 2], qd: &[f64; 2]) -> (DMatrix<f64>, DVector<f64>) {
    let (s1, _) = q[0].sin_cos();
    let (s2, c2) = q[1].sin_cos();
    let s12 = (q[0] + q[1]).sin();
    let m11 = m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2);
    let m12 = m2 * (l2 * l2 + l1 * l2 * c2);
    let m22 = m2 * l2 * l2;
    let h1 = -m2 * l1 * l2 * s2 * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]) + (m1 + m2) * g * l1 * s1 + m2 * g * l2 * s12;
    let h2 = m2 * l1 * l2 * s2 * qd[0] * qd[0] + m2 * g * l2 * s12;
    (DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22]), DVector::from_vec(vec![h1, h2]))
}

fn random_rig_state(rng: &mut impl Rng, model: &RobotModel) -> GeneralizedState {
    let mut s = GeneralizedState::zeros(model);
    for (i, (lo, hi)) in model.coordinate_limits().into_iter().enumerate() {
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (-3.0, 3.0) };
        s.q[i] = rng.random_range(lo..hi);
        s.v[i] = rng.random_range(-2.0..2.0);
    }
    s
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / (b.norm() + 1e-8)
}

fn fd_frame_jacobian(model: &RobotModel, q: &DVector<f64>, frame: FrameId) -> DMatrix<f64> {
    let rows = model.frame(frame).unwrap().task.rows();
    let eps = 1e-6;
    let mut j = DMatrix::zeros(rows, model.nv());
    let pose_vec = |q: &DVector<f64>| {
        let p = frame_pose(model, q, frame).unwrap();
        [p.position.x, p.position.y, p.angle]
    };
    for k in 0..model.nv() {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[k] += eps;
        qm[k] -= eps;
        let (a, b) = (pose_vec(&qp), pose_vec(&qm));
        for r in 0..rows {
            j[(r, k)] = (a[r] - b[r]) / (2.0 * eps);
        }
    }
    j
}

#[test]
fn slider_mass_matrix_is_its_mass() {
    let m = rig::slider(2.0);
    let mm = mass_matrix(&m, &DVector::from_vec(vec![0.3])).unwrap();
    assert_eq!(mm, DMatrix::from_element(1, 1, 2.0));
}

#[test]
fn pendulum_mass_matrix_is_ml2_everywhere() {
    let m = rig::pendulum(1.0, 1.0, 9.81);
    for q in [-2.0, 0.0, 0.7, 3.0] {
        let mm = mass_matrix(&m, &DVector::from_vec(vec![q])).unwrap();
        assert!((mm[(0, 0)] - 1.0).abs() < 1e-14);
    }
}

#[test]
fn double_pendulum_mass_matrix_matches_lagrangian() {
    let (m1, m2, l1, l2) = (1.3, 0.7, 0.9, 0.6);
    let model = rig::double_pendulum(m1, m2, l1, l2, 9.81);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let (oracle, _) = double_pendulum_oracle(m1, m2, l1, l2, 9.81, &q, &[0.0, 0.0]);
        let mm = mass_matrix(&model, &DVector::from_row_slice(&q)).unwrap();
        assert!((mm - oracle).abs().max() < 1e-10);
    }
}

#[test]
fn bias_forces_vanish_without_motion_or_gravity() {
    let model = rig::sagittal_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = random_rig_state(&mut rng, &model);
    s.v.fill(0.0);
    let h = bias_forces(&model, &s, Vector2::zeros()).unwrap();
    assert_eq!(h.amax(), 0.0);
}

#[test]
fn pendulum_gravity_torque() {
    let model = rig::pendulum(1.0, 1.0, 9.81);
    let g = model.gravity();
    let hang = GeneralizedState::new(DVector::from_vec(vec![0.0]), DVector::from_vec(vec![0.0]));
    assert!(bias_forces(&model, &hang, g).unwrap()[0].abs() < 1e-15);
    let side = GeneralizedState::new(DVector::from_vec(vec![FRAC_PI_2]), DVector::from_vec(vec![0.0]));
    // m g l sin(q)
    assert!((bias_forces(&model, &side, g).unwrap()[0] - 9.81).abs() < 1e-12);
}

#[test]
fn pendulum_tip_jacobian_matches_fd() {
    let model = rig::pendulum(1.0, 1.0, 9.81);
    let tip = model.frame_id("tip").unwrap();
    let q = DVector::from_vec(vec![0.0]);
    let j = frame_jacobian(&model, &q, tip).unwrap();
    assert!((j.clone() - fd_frame_jacobian(&model, &q, tip)).abs().max() < 1e-6);
    assert!((j[(0, 0)] - 1.0).abs() < 1e-15 && j[(1, 0)].abs() < 1e-15);
}

#[test]
fn floating_body_frame_jacobian_is_identity() {
    let model = rig::point_mass(1.0, 9.81);
    let f = model.frame_id("body").unwrap();
    let q = DVector::from_vec(vec![0.4, -1.0, 0.3]);
    let j = frame_jacobian(&model, &q, f).unwrap();
    assert_eq!(j, DMatrix::identity(3, 3));
}

#[test]
fn rig_frame_jacobians_match_fd() {
    let model = rig::sagittal_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let s = random_rig_state(&mut rng, &model);
        for name in [names::FRONT_WHEEL, names::REAR_WHEEL, names::EE, names::BASE] {
            let f = model.frame_id(name).unwrap();
            let j = frame_jacobian(&model, &s.q, f).unwrap();
            let fd = fd_frame_jacobian(&model, &s.q, f);
            assert!((j.clone() - &fd).abs().max() < 1e-6, "{name}");
            assert!(rel_err(&j, &fd) < 1e-4);
        }
    }
}

#[test]
fn jdot_v_zero_velocity() {
    let model = rig::sagittal_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = random_rig_state(&mut rng, &model);
    s.v.fill(0.0);
    let f = model.frame_id(names::EE).unwrap();
    assert_eq!(jdot_v(&model, &s, f).unwrap().amax(), 0.0);
}

#[test]
fn pendulum_centripetal_drift() {
    let model = rig::pendulum(1.0, 1.0, 9.81);
    let tip = model.frame_id("tip").unwrap();
    for q in [0.0, 0.8, -2.1] {
        let s = GeneralizedState::new(DVector::from_vec(vec![q]), DVector::from_vec(vec![1.0]));
        let a = jdot_v(&model, &s, tip).unwrap();
        // l ω² directed from the tip to the pivot.
        let toward_pivot = Vector2::new(-q.sin(), q.cos());
        assert!((a[0] - toward_pivot.x).abs() < 1e-8 && (a[1] - toward_pivot.y).abs() < 1e-8);
    }
}

#[test]
fn jdot_v_matches_second_order_fd() {
    let model = rig::sagittal_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eps = 1e-4;
    for _ in 0..100 {
        let s = random_rig_state(&mut rng, &model);
        for name in [names::FRONT_WHEEL, names::EE] {
            let f = model.frame_id(name).unwrap();
            let pos = |q: &DVector<f64>| frame_pose(&model, q, f).unwrap().position;
            let fd = (pos(&(&s.q + &s.v * eps)) - pos(&s.q) * 2.0 + pos(&(&s.q - &s.v * eps))) / (eps * eps);
            let a = jdot_v(&model, &s, f).unwrap();
            let err = (Vector2::new(a[0], a[1]) - fd).norm() / (fd.norm() + 1e-8);
            assert!(err < 1e-4, "{name}: rel err {err}");
        }
    }
}

#[test]
fn equilibrium_input_gives_zero_acceleration() {
    let model = rig::double_pendulum(1.0, 1.0, 1.0, 1.0, 9.81);
    let s = GeneralizedState::new(DVector::from_vec(vec![0.4, -0.2]), DVector::from_vec(vec![0.3, 0.1]));
    let h = bias_forces(&model, &s, model.gravity()).unwrap();
    let qdd = fd_unconstrained(&model, &s, &h).unwrap();
    assert!(qdd.amax() < 1e-12);
}

#[test]
fn free_fall() {
    let model = rig::point_mass(1.0, 9.81);
    let s = GeneralizedState::zeros(&model);
    let qdd = fd_unconstrained(&model, &s, &DVector::zeros(0)).unwrap();
    assert!((qdd[1] + 9.81).abs() < 1e-14 && qdd[0] == 0.0 && qdd[2] == 0.0);
}

#[test]
fn double_pendulum_forward_dynamics_matches_lagrangian() {
    let (m1, m2, l1, l2, g) = (0.8, 1.1, 0.5, 0.7, 9.81);
    let model = rig::double_pendulum(m1, m2, l1, l2, g);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let qd = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let u = DVector::from_vec(vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]);
        let (m, h) = double_pendulum_oracle(m1, m2, l1, l2, g, &q, &qd);
        let oracle = m.lu().solve(&(&u - h)).unwrap();
        let s = GeneralizedState::new(DVector::from_row_slice(&q), DVector::from_row_slice(&qd));
        let qdd = fd_unconstrained(&model, &s, &u).unwrap();
        assert!((qdd - oracle).amax() < 1e-8);
    }
}

#[test]
fn mass_matrix_symmetric_positive_definite_on_rig() {
    let model = rig::sagittal_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let s = random_rig_state(&mut rng, &model);
        let m = mass_matrix(&model, &s.q).unwrap();
        assert_eq!(m, m.transpose());
        let min_eig = m.symmetric_eigenvalues().min();
        assert!(min_eig > 0.0, "min eigenvalue {min_eig}");
    }
}

fn rk4(model: &RobotModel, s: &GeneralizedState, u: &DVector<f64>, dt: f64) -> GeneralizedState {
    let f = |s: &GeneralizedState| (s.v.clone(), fd_unconstrained(model, s, u).unwrap());
    let add = |s: &GeneralizedState, k: &(DVector<f64>, DVector<f64>), h: f64| {
        GeneralizedState::new(&s.q + &k.0 * h, &s.v + &k.1 * h)
    };
    let k1 = f(s);
    let k2 = f(&add(s, &k1, dt / 2.0));
    let k3 = f(&add(s, &k2, dt / 2.0));
    let k4 = f(&add(s, &k3, dt));
    GeneralizedState::new(
        &s.q + (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) * (dt / 6.0),
        &s.v + (&k1.1 + &k2.1 * 2.0 + &k3.1 * 2.0 + &k4.1) * (dt / 6.0),
    )
}

#[test]
fn torque_free_gravity_free_rollout_conserves_kinetic_energy() {
    let mut params = rig::RigParams::default();
    params.gravity = 0.0;
    let model = params.build();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut s = random_rig_state(&mut rng, &model);
    s.v *= 0.5;
    let u = DVector::zeros(model.nu());
    let e0 = kinetic_energy(&model, &s).unwrap();
    for _ in 0..500 {
        s = rk4(&model, &s, &u, 1e-4);
    }
    let e1 = kinetic_energy(&model, &s).unwrap();
    assert!((e1 - e0).abs() / e0 < 1e-6, "drift {}", (e1 - e0).abs() / e0);
}

#[test]
fn errors_are_reported() {
    let model = rig::pendulum(1.0, 1.0, 9.81);
    assert!(matches!(mass_matrix(&model, &DVector::zeros(2)), Err(RbdError::DimensionMismatch { .. })));
    assert!(matches!(model.frame_id("nope"), Err(RbdError::UnknownFrame(_))));
    assert!(matches!(frame_jacobian(&model, &DVector::zeros(1), 7), Err(RbdError::UnknownFrame(_))));
    let s = GeneralizedState::zeros(&model);
    assert!(matches!(fd_unconstrained(&model, &s, &DVector::zeros(3)), Err(RbdError::DimensionMismatch { .. })));

    let degenerate = rig::pendulum(0.0, 1.0, 9.81);
    let s = GeneralizedState::zeros(&degenerate);
    assert_eq!(fd_unconstrained(&degenerate, &s, &DVector::zeros(1)), Err(RbdError::SingularMassMatrix));
}

#[test]
fn invalid_descriptions_are_rejected() {
    let mut desc = rig::RigParams::default().description();
    desc.bodies[1].parent = None;
    assert!(matches!(RobotModel::from_description(desc), Err(RbdError::InvalidModel(_))));

    let mut desc = rig::RigParams::default().description();
    desc.bodies.swap(1, 2);
    assert!(RobotModel::from_description(desc).is_err());

    let mut desc = rig::RigParams::default().description();
    desc.actuated = Some(vec!["base".into()]);
    assert!(RobotModel::from_description(desc).is_err());
}

#[test]
fn limit_clamping_is_reported() {
    let model = rig::sagittal_rig();
    let mut s = GeneralizedState::zeros(&model);
    let knee = model.joint_index(names::FRONT_KNEE).unwrap();
    s.q[knee] = 3.0;
    let v = s.clamp_to_limits(&model);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].index, knee);
    assert_eq!(s.q[knee], 2.6);
    assert!(s.limit_violations(&model).is_empty());
}

#[test]
fn rig_dimensions() {
    let model = rig::sagittal_rig();
    assert_eq!(model.nv(), 12);
    assert_eq!(model.nu(), 9);
    let s = model.selection();
    assert_eq!(s.rank(1e-12), 9);
    // Selection never touches the floating base.
    assert_eq!(s.columns(0, 3).amax(), 0.0);
}

#[test]
fn com_jacobian_matches_fd() {
    let model = rig::sagittal_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s = random_rig_state(&mut rng, &model);
    let j = com_jacobian(&model, &s.q).unwrap();
    let eps = 1e-6;
    for k in 0..model.nv() {
        let mut qp = s.q.clone();
        let mut qm = s.q.clone();
        qp[k] += eps;
        qm[k] -= eps;
        let d = (center_of_mass(&model, &qp).unwrap() - center_of_mass(&model, &qm).unwrap()) / (2.0 * eps);
        assert!((d.x - j[(0, k)]).abs() < 1e-7 && (d.y - j[(1, k)]).abs() < 1e-7);
    }
}
