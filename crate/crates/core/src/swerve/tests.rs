use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn square() -> WheelLayout {
    WheelLayout::rectangle(0.3, 0.2, 0.1)
}

#[test]
fn normalization_convention() {
    assert_eq!(normalize_angle(PI), PI);
    assert_eq!(normalize_angle(-PI), PI);
    assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
    assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
    assert!((angle_diff(3.0, -3.0) - (6.0 - 2.0 * PI)).abs() < 1e-12);
}

#[test]
fn wheel_velocity_examples() {
    let l = square();
    let xi = Vector3::new(1.0, 0.0, 0.0);
    for i in 0..4 {
        assert_eq!(wheel_velocity(&xi, &l.position(i)), Vector2::new(1.0, 0.0));
    }
    let v = wheel_velocity(&Vector3::new(0.0, 0.0, 1.0), &Vector2::new(0.3, 0.2));
    assert_eq!(v, Vector2::new(-0.2, 0.3));
    assert_eq!(wheel_velocity(&Vector3::zeros(), &Vector2::new(0.3, 0.2)), Vector2::zeros());
}

#[test]
fn steering_examples() {
    let r = Vector2::new(0.3, 0.2);
    assert_eq!(desired_steering(&Vector3::new(1.0, 0.0, 0.0), &r), Some(0.0));
    assert_eq!(desired_steering(&Vector3::new(0.0, 1.0, 0.0), &r), Some(FRAC_PI_2));
    let d = desired_steering(&Vector3::new(0.0, 0.0, 1.0), &r).unwrap();
    assert!((d - 0.3f64.atan2(-0.2)).abs() < 1e-15);
    assert!((d - 2.1588).abs() < 1e-4);
    assert_eq!(desired_steering(&Vector3::zeros(), &r), None);
}

#[test]
fn spin_examples() {
    assert_eq!(wheel_spin(&Vector2::zeros(), 0.1).unwrap(), 0.0);
    assert!((wheel_spin(&Vector2::new(0.6, 0.8), 0.1).unwrap() - 10.0).abs() < 1e-12);
    assert!(wheel_spin(&Vector2::new(1.0, 0.0), 0.0).is_err());
    let (_, v, flipped) = flip_optimize(3.0, 0.0, 10.0);
    assert!(flipped);
    assert_eq!(v, -10.0);
}

#[test]
fn flip_examples() {
    assert_eq!(flip_optimize(0.3, 0.0, 2.0), (0.3, 2.0, false));
    let (d, v, f) = flip_optimize(3.0, 0.0, 2.0);
    assert!((d - (3.0 - PI)).abs() < 1e-15 && (d + 0.1416).abs() < 1e-4);
    assert_eq!((v, f), (-2.0, true));
    assert_eq!(flip_optimize(FRAC_PI_2, 0.0, 1.0), (FRAC_PI_2, 1.0, false));
    // Wrapped: 3.0 vs -3.0 differ by only 0.28 rad.
    assert_eq!(flip_optimize(3.0, -3.0, 1.0).2, false);
}

#[test]
fn mapping_examples() {
    let l = square();
    let rot = map_body_to_wheels(&Vector3::new(0.0, 0.0, 1.0), &l, &[0.0; 4]).unwrap();
    for (i, c) in rot.iter().enumerate() {
        let r = l.position(i);
        let dir = Vector2::new(c.steer.cos(), c.steer.sin());
        assert!(dir.dot(&r).abs() < 1e-12, "steering must be tangent to the circle");
        assert!((c.spin.abs() - r.norm() / l.radius).abs() < 1e-12);
    }
    let straight = map_body_to_wheels(&Vector3::new(0.5, 0.0, 0.0), &l, &[0.0; 4]).unwrap();
    assert!(straight.iter().all(|c| c.steer == 0.0 && (c.spin - 5.0).abs() < 1e-12));
    let crab = map_body_to_wheels(&Vector3::new(0.0, 1.0, 0.0), &l, &[0.0; 4]).unwrap();
    assert!(crab.iter().all(|c| c.steer == FRAC_PI_2 && !c.flipped));
    let hold = map_body_to_wheels(&Vector3::zeros(), &l, &[0.1, 0.2, -0.3, 4.0]).unwrap();
    let expect = [0.1, 0.2, -0.3, normalize_angle(4.0)];
    for (c, e) in hold.iter().zip(expect) {
        assert_eq!((c.steer, c.spin), (e, 0.0));
    }
}

#[test]
fn mapper_remembers_angles() {
    let mut m = SwerveMapper::new(square()).unwrap();
    m.command(&Vector3::new(0.0, 1.0, 0.0)).unwrap();
    assert!(m.steer.iter().all(|&s| s == FRAC_PI_2));
    let cmds = m.command(&Vector3::zeros()).unwrap();
    assert!(cmds.iter().all(|c| c.steer == FRAC_PI_2 && c.spin == 0.0));
    // Reversing the crab direction flips the wheels rather than turning them.
    let cmds = m.command(&Vector3::new(0.0, -1.0, 0.0)).unwrap();
    assert!(cmds.iter().all(|c| c.flipped && c.steer == FRAC_PI_2 && c.spin < 0.0));
}

#[test]
fn invalid_layouts() {
    let mut l = square();
    l.positions[1] = l.positions[0];
    assert!(matches!(l.validate(), Err(SwerveError::InvalidLayout(_))));
    let mut l = square();
    l.radius = -1.0;
    assert!(matches!(map_body_to_wheels(&Vector3::zeros(), &l, &[0.0; 4]), Err(SwerveError::InvalidRadius(_))));
}

fn random_delta(rng: &mut ChaCha8Rng) -> [f64; 4] {
    [0; 4].map(|_| rng.random_range(-PI..PI))
}

#[test]
fn gram_identity_on_centered_layouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layout = WheelLayout { positions: [[0.4, 0.1], [0.2, -0.3], [-0.35, 0.25], [-0.1, -0.2]], radius: 0.08 }.centered();
    assert!(layout.centroid().norm() < 1e-15);
    let r2 = layout.radius_of_gyration_sq();
    let expect = Matrix3::from_diagonal(&Vector3::new(4.0, 4.0, r2));
    for _ in 0..1000 {
        let s = build_constraint_stack(&random_delta(&mut rng), &layout);
        assert!((gram(&s) - expect).amax() <= 1e-12);
    }
}

#[test]
fn off_centre_gram_has_coupling_block() {
    let l = WheelLayout::rectangle(0.3, 0.2, 0.1);
    let mut shifted = l.clone();
    for p in shifted.positions.iter_mut() {
        p[0] += 0.1;
    }
    let s = build_constraint_stack(&[0.1, 0.2, 0.3, 0.4], &shifted);
    let g = gram(&s);
    // B0 = J Σp = (0, 0.4).
    assert!((g[(0, 2)] - 0.0).abs() < 1e-12 && (g[(1, 2)] - 0.4).abs() < 1e-12);
}

#[test]
fn rank_three_for_generic_steering() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let l = square();
    for _ in 0..200 {
        let d = random_delta(&mut rng);
        let s = build_constraint_stack(&d, &l);
        assert_eq!(numerical_rank(&singular_values(&s), RANK_TOL), 3);
        let a = connection(&d, &l).unwrap();
        let sv = singular_values(&a);
        assert_eq!(numerical_rank(&sv, RANK_TOL), 3);
        // rank(A) = rank(SᵀB)
        let stb = s.transpose() * input_map(l.radius);
        assert_eq!(numerical_rank(&singular_values(&stb), RANK_TOL), 3);
    }
}

#[test]
fn degenerate_layout_has_rank_two() {
    let l = WheelLayout { positions: [[0.0, 0.0]; 4], radius: 0.1 };
    let s = build_constraint_stack(&[0.1, 0.7, -1.2, 2.0], &l);
    assert_eq!(numerical_rank(&singular_values(&s), RANK_TOL), 2);
}

#[test]
fn zero_spin_gives_zero_twist_and_perturbation_gives_residual() {
    let l = square();
    let (xi, res) = reconstruct_twist(&[0.3, -0.2, 1.0, 2.0], &[0.0; 4], &l).unwrap();
    assert_eq!(xi, Vector3::zeros());
    assert_eq!(res, 0.0);
    let xi0 = Vector3::new(0.4, -0.1, 0.7);
    let mut cmds = map_body_to_wheels(&xi0, &l, &[0.0; 4]).unwrap();
    cmds[2].spin += 0.5;
    let (_, res) = reconstruct_from_commands(&cmds, &l).unwrap();
    assert!(res > 1e-3);
}

#[test]
fn roundtrip_on_random_twists() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let layouts = [
        square(),
        WheelLayout { positions: [[0.5, 0.3], [0.4, -0.25], [-0.3, 0.2], [-0.45, -0.3]], radius: 0.07 },
    ];
    for l in &layouts {
        for _ in 0..500 {
            let xi0 = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-3.0..3.0));
            let cmds = map_body_to_wheels(&xi0, l, &random_delta(&mut rng)).unwrap();
            let (xi, res) = reconstruct_from_commands(&cmds, l).unwrap();
            assert!((xi - xi0).amax() <= 1e-9);
            assert!(res <= 1e-9);
            // Connection form: xi = -A u with u = (δ̇ = 0, φ̇).
            let a = connection(&cmds.map(|c| c.steer), l).unwrap();
            let mut u = nalgebra::SVector::<f64, 8>::zeros();
            for i in 0..4 {
                u[4 + i] = cmds[i].spin;
            }
            assert!((-(a * u) - xi0).amax() <= 1e-9);
        }
    }
}

#[test]
fn exact_pose_integration() {
    let s = SwerveState::default();
    // Quarter circle of radius 1 at unit speed.
    let end = s.advance(&Vector3::new(1.0, 0.0, 1.0), FRAC_PI_2);
    assert!((end.x - 1.0).abs() < 1e-12 && (end.y - 1.0).abs() < 1e-12);
    assert!((end.theta - FRAC_PI_2).abs() < 1e-12);
    let straight = s.advance(&Vector3::new(0.0, 2.0, 0.0), 0.5);
    assert!((straight.y - 1.0).abs() < 1e-15 && straight.x.abs() < 1e-15);
    assert!(SwerveState::from_slice(&[0.0; 5]).is_err());
    let v = SwerveState::from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap().to_vector();
    assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
}

#[test]
fn swerve_dynamics_derivatives_match_finite_differences() {
    use crate::ocp::{finite_difference, Dynamics};
    use nalgebra::DVector;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = SwerveDynamics { dt: 0.05 };
    for _ in 0..100 {
        let x = DVector::from_fn(6, |_, _| rng.random_range(-3.0..3.0));
        let u = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let a = d.derivatives(0, &x, &u).unwrap();
        let n = finite_difference(&d, 0, &x, &u, 1e-6).unwrap();
        let rel = |p: &nalgebra::DMatrix<f64>, q: &nalgebra::DMatrix<f64>| (p - q).amax() / q.amax().max(1.0);
        assert!(rel(&a.fx, &n.fx) < 1e-4 && rel(&a.fu, &n.fu) < 1e-4);
    }
}

proptest! {
    #[test]
    fn steering_change_never_exceeds_quarter_turn(
        start in proptest::array::uniform4(-PI..PI),
        twists in proptest::collection::vec(proptest::array::uniform3(-2.0f64..2.0), 1..40),
    ) {
        let mut current = start;
        let l = square();
        for t in twists {
            let xi = Vector3::new(t[0], t[1], t[2]);
            let cmds = map_body_to_wheels(&xi, &l, &current).unwrap();
            for i in 0..4 {
                prop_assert!(angle_diff(cmds[i].steer, current[i]).abs() <= FRAC_PI_2 + 1e-12);
                prop_assert!(cmds[i].steer > -PI && cmds[i].steer <= PI);
                current[i] = cmds[i].steer;
            }
        }
    }
}
