//! Four-wheel independent steering and drive: body twist to per-wheel
//! steering angle and spin, reverse-flip optimization, and the constraint
//! stack `S(δ, p)` relating wheel rates back to the body twist.
//!
//! Twists are ordered `(v_x, v_y, ω)` and expressed in the body frame.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ocp::{Derivatives, Dynamics, OcpError, StepOutput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwerveError {
    #[error("invalid wheel layout: {0}")]
    InvalidLayout(String),
    #[error("wheel radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("constraint stack is rank deficient (smallest singular value {0:e})")]
    RankDeficient(f64),
    #[error("state vector must have 6 entries, got {0}")]
    BadState(usize),
}

/// Maps an angle to `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// `a - b` wrapped to `(-π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Planar base pose and body twist.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SwerveState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl SwerveState {
    pub fn twist(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.omega)
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.x, self.y, self.theta, self.vx, self.vy, self.omega])
    }

    pub fn from_slice(s: &[f64]) -> Result<Self, SwerveError> {
        if s.len() != 6 {
            return Err(SwerveError::BadState(s.len()));
        }
        Ok(Self { x: s[0], y: s[1], theta: s[2], vx: s[3], vy: s[4], omega: s[5] })
    }

    /// Integrates the pose with a constant body twist over `dt` (exact on SE(2)).
    pub fn advance(&self, twist: &Vector3<f64>, dt: f64) -> Self {
        let (vx, vy, w) = (twist.x, twist.y, twist.z);
        let dth = w * dt;
        // Body-frame displacement of the exponential map.
        let (a, b) = if dth.abs() < 1e-9 {
            (1.0 - dth * dth / 6.0, dth / 2.0)
        } else {
            (dth.sin() / dth, (1.0 - dth.cos()) / dth)
        };
        let dx = (a * vx - b * vy) * dt;
        let dy = (b * vx + a * vy) * dt;
        let (s, c) = self.theta.sin_cos();
        Self {
            x: self.x + c * dx - s * dy,
            y: self.y + s * dx + c * dy,
            theta: normalize_angle(self.theta + dth),
            vx,
            vy,
            omega: w,
        }
    }
}

fn default_radius() -> f64 {
    0.06
}

/// Wheel positions in the body frame and the common wheel radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WheelLayout {
    pub positions: [[f64; 2]; 4],
    #[serde(default = "default_radius")]
    pub radius: f64,
}

impl WheelLayout {
    /// Rectangle with wheels at `(±half_length, ±half_width)`, ordered
    /// front-left, front-right, rear-left, rear-right.
    pub fn rectangle(half_length: f64, half_width: f64, radius: f64) -> Self {
        let (a, b) = (half_length, half_width);
        Self { positions: [[a, b], [a, -b], [-a, b], [-a, -b]], radius }
    }

    pub fn position(&self, i: usize) -> Vector2<f64> {
        Vector2::new(self.positions[i][0], self.positions[i][1])
    }

    pub fn validate(&self) -> Result<(), SwerveError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(SwerveError::InvalidRadius(self.radius));
        }
        for i in 0..4 {
            if !self.position(i).iter().all(|x| x.is_finite()) {
                return Err(SwerveError::InvalidLayout(format!("wheel {i} position is not finite")));
            }
            for j in 0..i {
                if (self.position(i) - self.position(j)).norm() < 1e-9 {
                    return Err(SwerveError::InvalidLayout(format!("wheels {j} and {i} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vector2<f64> {
        (0..4).map(|i| self.position(i)).sum::<Vector2<f64>>() / 4.0
    }

    /// Same layout shifted so that the wheel positions sum to zero.
    pub fn centered(&self) -> Self {
        let c = self.centroid();
        let mut out = self.clone();
        for (i, p) in out.positions.iter_mut().enumerate() {
            let q = self.position(i) - c;
            *p = [q.x, q.y];
        }
        out
    }

    /// `Σ ‖p_i‖²`.
    pub fn radius_of_gyration_sq(&self) -> f64 {
        (0..4).map(|i| self.position(i).norm_squared()).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WheelCommand {
    /// Steering angle in `(-π, π]`.
    pub steer: f64,
    /// Signed spin rate, rad/s.
    pub spin: f64,
    pub flipped: bool,
}

/// Speed below which a wheel's steering direction is undefined.
pub const STEER_SPEED_TOL: f64 = 1e-9;

fn jr(r: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-r.y, r.x)
}

/// Velocity of the wheel contact at `r` for body twist `xi`.
pub fn wheel_velocity(xi: &Vector3<f64>, r: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(xi.x, xi.y) + jr(r) * xi.z
}

/// Direction of the wheel velocity, or `None` when the wheel is (nearly) at rest.
pub fn desired_steering(xi: &Vector3<f64>, r: &Vector2<f64>) -> Option<f64> {
    let v = wheel_velocity(xi, r);
    (v.norm() > STEER_SPEED_TOL).then(|| v.y.atan2(v.x))
}

/// Unsigned pure-rolling spin rate `‖v_i‖ / ρ`.
pub fn wheel_spin(v_i: &Vector2<f64>, rho: f64) -> Result<f64, SwerveError> {
    if !(rho > 0.0) {
        return Err(SwerveError::InvalidRadius(rho));
    }
    Ok(v_i.norm() / rho)
}

/// Reverses the wheel instead of turning it by more than a quarter turn.
/// Returns `(δ_opt, v', flipped)`.
pub fn flip_optimize(delta_des: f64, delta_cur: f64, v: f64) -> (f64, f64, bool) {
    if angle_diff(delta_des, delta_cur).abs() <= PI / 2.0 {
        (normalize_angle(delta_des), v, false)
    } else {
        (normalize_angle(delta_des + PI), -v, true)
    }
}

/// Wheel commands for twist `xi` given the current steering angles. Wheels
/// at rest keep their current angle and get zero spin.
pub fn map_body_to_wheels(xi: &Vector3<f64>, layout: &WheelLayout, current: &[f64; 4]) -> Result<[WheelCommand; 4], SwerveError> {
    layout.validate()?;
    let mut out = [WheelCommand::default(); 4];
    for (i, cmd) in out.iter_mut().enumerate() {
        let r = layout.position(i);
        let v = wheel_velocity(xi, &r);
        *cmd = match desired_steering(xi, &r) {
            Some(des) => {
                let speed = wheel_spin(&v, layout.radius)?;
                let (steer, spin, flipped) = flip_optimize(des, current[i], speed);
                WheelCommand { steer, spin, flipped }
            }
            None => WheelCommand { steer: normalize_angle(current[i]), spin: 0.0, flipped: false },
        };
    }
    Ok(out)
}

/// Stateful wrapper that remembers the last commanded steering angles.
#[derive(Clone, Debug)]
pub struct SwerveMapper {
    pub layout: WheelLayout,
    pub steer: [f64; 4],
}

impl SwerveMapper {
    pub fn new(layout: WheelLayout) -> Result<Self, SwerveError> {
        layout.validate()?;
        Ok(Self { layout, steer: [0.0; 4] })
    }

    pub fn command(&mut self, xi: &Vector3<f64>) -> Result<[WheelCommand; 4], SwerveError> {
        let cmds = map_body_to_wheels(xi, &self.layout, &self.steer)?;
        for (s, c) in self.steer.iter_mut().zip(cmds.iter()) {
            *s = c.steer;
        }
        Ok(cmds)
    }
}

pub type ConstraintStack = SMatrix<f64, 8, 3>;

/// `S(δ, p)`: rows 0-3 are the no-skid constraints `e_⊥ᵀ(v + ωJp_i) = 0`,
/// rows 4-7 the rolling constraints `e_∥ᵀ(v + ωJp_i) = ρφ̇_i`.
pub fn build_constraint_stack(delta: &[f64; 4], layout: &WheelLayout) -> ConstraintStack {
    let mut s = ConstraintStack::zeros();
    for i in 0..4 {
        let (sn, cs) = delta[i].sin_cos();
        let par = Vector2::new(cs, sn);
        let per = Vector2::new(-sn, cs);
        let jp = jr(&layout.position(i));
        s[(i, 0)] = per.x;
        s[(i, 1)] = per.y;
        s[(i, 2)] = per.dot(&jp);
        s[(4 + i, 0)] = par.x;
        s[(4 + i, 1)] = par.y;
        s[(4 + i, 2)] = par.dot(&jp);
    }
    s
}

pub fn gram(s: &ConstraintStack) -> Matrix3<f64> {
    s.transpose() * s
}

/// `B = diag(0₄, ρI₄)`, mapping `(δ̇, φ̇)` to the right-hand side of `S ξ`.
pub fn input_map(rho: f64) -> SMatrix<f64, 8, 8> {
    let mut b = SMatrix::<f64, 8, 8>::zeros();
    for i in 4..8 {
        b[(i, i)] = rho;
    }
    b
}

/// Singular values in descending order.
pub fn singular_values<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> Vec<f64> {
    let dense = DMatrix::from_column_slice(R, C, m.as_slice());
    let mut sv: Vec<f64> = dense.svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values above `tol`.
pub fn numerical_rank(sv: &[f64], tol: f64) -> usize {
    sv.iter().filter(|&&s| s > tol).count()
}

/// Rank threshold used by the reconstruction.
pub const RANK_TOL: f64 = 1e-9;

fn left_inverse(s: &ConstraintStack) -> Result<SMatrix<f64, 3, 8>, SwerveError> {
    let sv = singular_values(s);
    if sv[2] <= RANK_TOL {
        return Err(SwerveError::RankDeficient(sv[2]));
    }
    let g = gram(s).try_inverse().ok_or(SwerveError::RankDeficient(sv[2]))?;
    Ok(g * s.transpose())
}

/// Local connection `A(r) = -S† B` (3 x 8), acting on `(δ̇, φ̇)`.
pub fn connection(delta: &[f64; 4], layout: &WheelLayout) -> Result<SMatrix<f64, 3, 8>, SwerveError> {
    layout.validate()?;
    let s = build_constraint_stack(delta, layout);
    Ok(-(left_inverse(&s)? * input_map(layout.radius)))
}

/// Least-squares body twist from wheel spin rates, with the residual
/// `‖S ξ - B u‖` measuring how inconsistent the wheels are with rigid motion.
pub fn reconstruct_twist(delta: &[f64; 4], phidot: &[f64; 4], layout: &WheelLayout) -> Result<(Vector3<f64>, f64), SwerveError> {
    layout.validate()?;
    let s = build_constraint_stack(delta, layout);
    let mut rhs = SMatrix::<f64, 8, 1>::zeros();
    for i in 0..4 {
        rhs[4 + i] = layout.radius * phidot[i];
    }
    let xi = left_inverse(&s)? * rhs;
    let residual = (s * xi - rhs).norm();
    Ok((xi, residual))
}

/// Twist reconstructed from a full set of wheel commands.
pub fn reconstruct_from_commands(cmds: &[WheelCommand; 4], layout: &WheelLayout) -> Result<(Vector3<f64>, f64), SwerveError> {
    let delta = cmds.map(|c| c.steer);
    let spin = cmds.map(|c| c.spin);
    reconstruct_twist(&delta, &spin, layout)
}

/// Top-down base model for the optimizer: state `[x, y, θ, v_x, v_y, ω]`
/// with the twist in the body frame, controls are body accelerations. The
/// twist is advanced first and the pose follows with the updated twist.
/// The heading is left unwrapped so that the dynamics stay smooth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwerveDynamics {
    pub dt: f64,
}

impl Dynamics for SwerveDynamics {
    fn nx(&self) -> usize {
        6
    }

    fn nu(&self) -> usize {
        3
    }

    fn step(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<StepOutput, OcpError> {
        let dt = self.dt;
        let (vx, vy, w) = (x[3] + dt * u[0], x[4] + dt * u[1], x[5] + dt * u[2]);
        let (s, c) = x[2].sin_cos();
        let next = DVector::from_vec(vec![
            x[0] + dt * (c * vx - s * vy),
            x[1] + dt * (s * vx + c * vy),
            x[2] + dt * w,
            vx,
            vy,
            w,
        ]);
        Ok(StepOutput { next, aux: DVector::zeros(0) })
    }

    fn derivatives(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<Derivatives, OcpError> {
        let dt = self.dt;
        let out = self.step(k, x, u)?;
        let (vx, vy) = (out.next[3], out.next[4]);
        let (s, c) = x[2].sin_cos();
        let mut fx = DMatrix::identity(6, 6);
        fx[(0, 2)] = dt * (-s * vx - c * vy);
        fx[(1, 2)] = dt * (c * vx - s * vy);
        fx[(0, 3)] = dt * c;
        fx[(0, 4)] = -dt * s;
        fx[(1, 3)] = dt * s;
        fx[(1, 4)] = dt * c;
        fx[(2, 5)] = dt;
        let mut fu = DMatrix::zeros(6, 3);
        for i in 0..3 {
            for j in 0..3 {
                fu[(i, j)] = fx[(i, 3 + j)] * dt;
            }
            fu[(3 + i, i)] = dt;
        }
        Ok(Derivatives { next: out.next, aux: out.aux, fx, fu, ax: DMatrix::zeros(0, 6), au: DMatrix::zeros(0, 3) })
    }
}

#[cfg(test)]
mod tests;
