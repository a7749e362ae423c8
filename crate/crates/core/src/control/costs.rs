use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::ocp::{Reference, Residual, ResidualEval};
use crate::rbd::{FrameId, Kinematics, RbdError, RobotModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameComponent {
    /// World x, or x relative to the base origin when `base_relative`.
    X,
    Z,
    Pitch,
}

/// Selected components of a frame pose minus a per-node reference, read
/// from the position half of `x = [q; v]`.
#[derive(Clone, Debug)]
pub struct FrameTaskResidual {
    pub model: Arc<RobotModel>,
    pub frame: FrameId,
    pub components: Vec<FrameComponent>,
    pub reference: Reference,
    /// Measure `X` relative to the base coordinate `q[0]`.
    pub base_relative: bool,
}

impl FrameTaskResidual {
    pub fn new(
        model: Arc<RobotModel>,
        frame: &str,
        components: Vec<FrameComponent>,
        reference: Reference,
        base_relative: bool,
    ) -> Result<Self, RbdError> {
        let frame = model.frame_id(frame)?;
        if reference.dim() != components.len() {
            return Err(RbdError::DimensionMismatch { what: "frame reference", expected: components.len(), got: reference.dim() });
        }
        Ok(Self { model, frame, components, reference, base_relative })
    }
}

impl Residual for FrameTaskResidual {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn eval(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, _aux: &DVector<f64>) -> ResidualEval {
        let m = &*self.model;
        let nq = m.nq();
        let q = x.rows(0, nq).into_owned();
        let f = m.frame(self.frame).expect("frame id checked at construction");
        let kin = Kinematics::compute(m, &q, None).expect("state dimension");
        let p = kin.point(f.body, &f.offset);
        let angle = kin.angle[f.body] + f.angle;
        let jac = kin.point_jacobian(m, f.body, &f.offset);
        let reference = self.reference.at(k);
        let n = self.dim();
        let mut r = DVector::zeros(n);
        let mut rx = DMatrix::zeros(n, x.len());
        for (i, c) in self.components.iter().enumerate() {
            let (val, row) = match c {
                FrameComponent::X => (p.x, 0),
                FrameComponent::Z => (p.y, 1),
                FrameComponent::Pitch => (angle, 2),
            };
            r[i] = val - reference[i];
            rx.view_mut((i, 0), (1, m.nv())).copy_from(&jac.row(row));
            if *c == FrameComponent::X && self.base_relative {
                r[i] -= q[0];
                rx[(i, 0)] -= 1.0;
            }
        }
        ResidualEval { r, rx, ru: DMatrix::zeros(n, u.len()), raux: None }
    }
}

/// Horizontal offset of the whole-body centre of mass from the midpoint of
/// the given frames (typically the wheels).
#[derive(Clone, Debug)]
pub struct ComSupportResidual {
    pub model: Arc<RobotModel>,
    pub support: Vec<FrameId>,
    pub offset: f64,
}

impl ComSupportResidual {
    pub fn new(model: Arc<RobotModel>, support: &[&str], offset: f64) -> Result<Self, RbdError> {
        let support = support.iter().map(|s| model.frame_id(s)).collect::<Result<Vec<_>, _>>()?;
        if support.is_empty() {
            return Err(RbdError::InvalidModel("support needs at least one frame".into()));
        }
        Ok(Self { model, support, offset })
    }
}

impl Residual for ComSupportResidual {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>, _aux: &DVector<f64>) -> ResidualEval {
        let m = &*self.model;
        let q = x.rows(0, m.nq()).into_owned();
        let kin = Kinematics::compute(m, &q, None).expect("state dimension");
        let mut com = 0.0;
        let mut jrow = DMatrix::zeros(1, m.nv());
        let total = m.total_mass();
        for (b, body) in m.bodies().iter().enumerate() {
            let c = Vector2::new(body.com[0], body.com[1]);
            com += kin.point(b, &c).x * body.mass / total;
            jrow += kin.point_jacobian(m, b, &c).rows(0, 1) * (body.mass / total);
        }
        let w = 1.0 / self.support.len() as f64;
        let mut mid = 0.0;
        for &id in &self.support {
            let f = m.frame(id).expect("frame id checked at construction");
            mid += kin.point(f.body, &f.offset).x * w;
            jrow -= kin.point_jacobian(m, f.body, &f.offset).rows(0, 1) * w;
        }
        let mut rx = DMatrix::zeros(1, x.len());
        rx.view_mut((0, 0), (1, m.nv())).copy_from(&jrow);
        ResidualEval { r: DVector::from_element(1, com - mid - self.offset), rx, ru: DMatrix::zeros(1, u.len()), raux: None }
    }
}
