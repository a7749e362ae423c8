use nalgebra::{DMatrix, DVector, Vector2};

use super::model::{check_dim, BodyId, JointKind, RobotModel};
use super::RbdError;

/// Planar rotation by `angle` of a vector in the (x, z) plane.
#[inline]
pub fn rotate(angle: f64, v: &Vector2<f64>) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// The 2D rotation generator applied to `v`: `[[0, -1], [1, 0]] v`.
#[inline]
pub fn perp(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

/// Placement and motion of every body frame for one `(q, v)`.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub position: Vec<Vector2<f64>>,
    pub angle: Vec<f64>,
    pub velocity: Vec<Vector2<f64>>,
    pub omega: Vec<f64>,
    /// World direction of prismatic joints (zero for other kinds).
    axis: Vec<Vector2<f64>>,
}

impl Kinematics {
    pub fn compute(model: &RobotModel, q: &DVector<f64>, v: Option<&DVector<f64>>) -> Result<Self, RbdError> {
        check_dim("q", model.nq(), q.len())?;
        if let Some(v) = v {
            check_dim("v", model.nv(), v.len())?;
        }
        let n = model.bodies.len();
        let mut position = Vec::with_capacity(n);
        let mut angle = Vec::with_capacity(n);
        let mut velocity = Vec::with_capacity(n);
        let mut omega = Vec::with_capacity(n);
        let mut axis = Vec::with_capacity(n);
        for (i, body) in model.bodies.iter().enumerate() {
            let j = &body.joint;
            let o = Vector2::new(j.origin[0], j.origin[1]);
            let k = model.v_offset[i];
            let qd = |idx: usize| v.map_or(0.0, |v| v[idx]);
            let (pp, pa, pv, pw) = match model.parents[i] {
                Some(p) => (position[p], angle[p], velocity[p], omega[p]),
                None => (Vector2::zeros(), 0.0, Vector2::zeros(), 0.0),
            };
            let lever = rotate(pa, &o);
            let base = pp + lever;
            let base_vel = pv + perp(&lever) * pw;
            let (p, a, vel, w, ax) = match j.kind {
                JointKind::FloatingPlanar => (
                    o + Vector2::new(q[k], q[k + 1]),
                    j.angle_offset + q[k + 2],
                    Vector2::new(qd(k), qd(k + 1)),
                    qd(k + 2),
                    Vector2::zeros(),
                ),
                JointKind::Revolute => (base, pa + j.angle_offset + q[k], base_vel, pw + qd(k), Vector2::zeros()),
                JointKind::Prismatic { axis: a } => {
                    let th = pa + j.angle_offset;
                    let dir = rotate(th, &Vector2::new(a[0], a[1]));
                    let off = dir * q[k];
                    (base + off, th, base_vel + perp(&off) * pw + dir * qd(k), pw, dir)
                }
                JointKind::Fixed => (base, pa + j.angle_offset, base_vel, pw, Vector2::zeros()),
            };
            position.push(p);
            angle.push(a);
            velocity.push(vel);
            omega.push(w);
            axis.push(ax);
        }
        Ok(Self { position, angle, velocity, omega, axis })
    }

    /// World position of a point given in body coordinates.
    pub fn point(&self, body: BodyId, local: &Vector2<f64>) -> Vector2<f64> {
        self.position[body] + rotate(self.angle[body], local)
    }

    pub fn point_velocity(&self, body: BodyId, local: &Vector2<f64>) -> Vector2<f64> {
        let r = rotate(self.angle[body], local);
        self.velocity[body] + perp(&r) * self.omega[body]
    }

    /// Translational (rows 0-1) and angular (row 2) Jacobian of a body-fixed point.
    pub fn point_jacobian(&self, model: &RobotModel, body: BodyId, local: &Vector2<f64>) -> DMatrix<f64> {
        let p = self.point(body, local);
        let mut jac = DMatrix::zeros(3, model.nv);
        for &b in &model.support[body] {
            let k = model.v_offset[b];
            match model.bodies[b].joint.kind {
                JointKind::FloatingPlanar => {
                    jac[(0, k)] = 1.0;
                    jac[(1, k + 1)] = 1.0;
                    let c = perp(&(p - self.position[b]));
                    jac[(0, k + 2)] = c.x;
                    jac[(1, k + 2)] = c.y;
                    jac[(2, k + 2)] = 1.0;
                }
                JointKind::Revolute => {
                    let c = perp(&(p - self.position[b]));
                    jac[(0, k)] = c.x;
                    jac[(1, k)] = c.y;
                    jac[(2, k)] = 1.0;
                }
                JointKind::Prismatic { .. } => {
                    jac[(0, k)] = self.axis[b].x;
                    jac[(1, k)] = self.axis[b].y;
                }
                JointKind::Fixed => {}
            }
        }
        jac
    }

    /// `J̇ v` of a body-fixed point: translational (x, z) part. The angular
    /// part vanishes in the plane. Requires velocities.
    pub fn point_bias_acceleration(&self, model: &RobotModel, body: BodyId, local: &Vector2<f64>, v: &DVector<f64>) -> Vector2<f64> {
        let pv = self.point_velocity(body, local);
        let mut acc = Vector2::zeros();
        for &b in &model.support[body] {
            let k = model.v_offset[b];
            match model.bodies[b].joint.kind {
                JointKind::FloatingPlanar => {
                    acc += perp(&(pv - self.velocity[b])) * v[k + 2];
                }
                JointKind::Revolute => {
                    acc += perp(&(pv - self.velocity[b])) * v[k];
                }
                JointKind::Prismatic { .. } => {
                    acc += perp(&self.axis[b]) * (self.omega[b] * v[k]);
                }
                JointKind::Fixed => {}
            }
        }
        acc
    }
}
