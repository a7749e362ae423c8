//! Planar rigid-body trees: inertia matrix, bias forces, frame Jacobians and
//! unconstrained forward dynamics.
//!
//! Coordinates live in the sagittal (x, z) plane with angles measured
//! counter-clockwise. The floating base uses world-frame velocities so that
//! `v = q̇` for every model in this crate.

mod kinematics;
mod model;
pub mod rig;

pub use kinematics::{perp, rotate, Kinematics};
pub use model::{
    Body, BodyId, Frame, FrameId, FrameSpec, FrameTask, GeneralizedState, Joint, JointKind, JointRole,
    LimitViolation, ModelDescription, RobotModel,
};

pub(crate) use model::check_dim;
use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbdError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("mass matrix is singular (degenerate inertia)")]
    SingularMassMatrix,
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Position and pitch of a frame in the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramePose {
    pub position: Vector2<f64>,
    pub angle: f64,
}

pub fn mass_matrix(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>, RbdError> {
    let kin = Kinematics::compute(model, q, None)?;
    Ok(mass_matrix_from(model, &kin))
}

pub(crate) fn mass_matrix_from(model: &RobotModel, kin: &Kinematics) -> DMatrix<f64> {
    let n = model.nv();
    let mut m = DMatrix::zeros(n, n);
    for (b, body) in model.bodies.iter().enumerate() {
        let com = Vector2::new(body.com[0], body.com[1]);
        let j = kin.point_jacobian(model, b, &com);
        let jt = j.rows(0, 2);
        let jw = j.row(2);
        m += jt.transpose() * jt * body.mass + jw.transpose() * jw * body.inertia;
    }
    // Symmetric by construction up to rounding; make it exact.
    let mt = m.transpose();
    (m + mt) * 0.5
}

/// Coriolis, centrifugal and gravity forces `h(q, v)` for the given gravity vector.
pub fn bias_forces(model: &RobotModel, s: &GeneralizedState, gravity: Vector2<f64>) -> Result<DVector<f64>, RbdError> {
    s.check_dims(model)?;
    let kin = Kinematics::compute(model, &s.q, Some(&s.v))?;
    Ok(bias_forces_from(model, &kin, &s.v, gravity))
}

pub(crate) fn bias_forces_from(model: &RobotModel, kin: &Kinematics, v: &DVector<f64>, gravity: Vector2<f64>) -> DVector<f64> {
    let mut h = DVector::zeros(model.nv());
    for (b, body) in model.bodies.iter().enumerate() {
        if body.mass == 0.0 {
            continue;
        }
        let com = Vector2::new(body.com[0], body.com[1]);
        let j = kin.point_jacobian(model, b, &com);
        let a = kin.point_bias_acceleration(model, b, &com, v) - gravity;
        h += j.rows(0, 2).transpose() * (a * body.mass);
    }
    h
}

pub fn frame_pose(model: &RobotModel, q: &DVector<f64>, frame: FrameId) -> Result<FramePose, RbdError> {
    let f = model.frame(frame)?;
    let kin = Kinematics::compute(model, q, None)?;
    Ok(FramePose { position: kin.point(f.body, &f.offset), angle: kin.angle[f.body] + f.angle })
}

/// Frame Jacobian with `frame.task.rows()` rows (world x, z and optionally pitch).
pub fn frame_jacobian(model: &RobotModel, q: &DVector<f64>, frame: FrameId) -> Result<DMatrix<f64>, RbdError> {
    let f = model.frame(frame)?;
    let kin = Kinematics::compute(model, q, None)?;
    let j = kin.point_jacobian(model, f.body, &f.offset);
    Ok(j.rows(0, f.task.rows()).into_owned())
}

/// Drift acceleration `J̇(q, v) v` of a frame.
pub fn jdot_v(model: &RobotModel, s: &GeneralizedState, frame: FrameId) -> Result<DVector<f64>, RbdError> {
    let f = model.frame(frame)?;
    s.check_dims(model)?;
    let kin = Kinematics::compute(model, &s.q, Some(&s.v))?;
    let a = kin.point_bias_acceleration(model, f.body, &f.offset, &s.v);
    let mut out = DVector::zeros(f.task.rows());
    out[0] = a.x;
    out[1] = a.y;
    Ok(out)
}

/// `q̈ = M⁻¹ (Sᵀ u − h)` with the model's gravity.
pub fn fd_unconstrained(model: &RobotModel, s: &GeneralizedState, u: &DVector<f64>) -> Result<DVector<f64>, RbdError> {
    s.check_dims(model)?;
    check_dim("controls", model.nu(), u.len())?;
    let kin = Kinematics::compute(model, &s.q, Some(&s.v))?;
    let m = mass_matrix_from(model, &kin);
    let rhs = model.actuation(u)? - bias_forces_from(model, &kin, &s.v, model.gravity());
    m.cholesky().map(|c| c.solve(&rhs)).ok_or(RbdError::SingularMassMatrix)
}

/// Whole-body centre of mass.
pub fn center_of_mass(model: &RobotModel, q: &DVector<f64>) -> Result<Vector2<f64>, RbdError> {
    let kin = Kinematics::compute(model, q, None)?;
    let mut c = Vector2::zeros();
    for (b, body) in model.bodies.iter().enumerate() {
        c += kin.point(b, &Vector2::new(body.com[0], body.com[1])) * body.mass;
    }
    Ok(c / model.total_mass())
}

/// Jacobian (2 x n_v) of the whole-body centre of mass.
pub fn com_jacobian(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>, RbdError> {
    let kin = Kinematics::compute(model, q, None)?;
    let mut j = DMatrix::zeros(2, model.nv());
    for (b, body) in model.bodies.iter().enumerate() {
        let pj = kin.point_jacobian(model, b, &Vector2::new(body.com[0], body.com[1]));
        j += pj.rows(0, 2) * body.mass;
    }
    Ok(j / model.total_mass())
}

pub fn kinetic_energy(model: &RobotModel, s: &GeneralizedState) -> Result<f64, RbdError> {
    let m = mass_matrix(model, &s.q)?;
    Ok(0.5 * s.v.dot(&(m * &s.v)))
}

/// Gravitational potential energy relative to `z = 0`.
pub fn potential_energy(model: &RobotModel, q: &DVector<f64>) -> Result<f64, RbdError> {
    let c = center_of_mass(model, q)?;
    Ok(-model.total_mass() * model.gravity().dot(&c))
}

#[cfg(test)]
mod tests;
