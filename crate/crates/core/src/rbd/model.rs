use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use super::RbdError;

pub type BodyId = usize;
pub type FrameId = usize;

/// Joint connecting a body to its parent (or to the world for the root).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JointKind {
    /// Planar floating base: world-frame `x`, `z` and the pitch angle.
    FloatingPlanar,
    /// Rotation in the sagittal plane.
    Revolute,
    /// Translation along `axis`, expressed in the joint frame.
    Prismatic { axis: [f64; 2] },
    Fixed,
}

impl JointKind {
    pub fn dof(&self) -> usize {
        match self {
            JointKind::FloatingPlanar => 3,
            JointKind::Revolute | JointKind::Prismatic { .. } => 1,
            JointKind::Fixed => 0,
        }
    }
}

/// Functional role of a joint; drives actuation and mode lock masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JointRole {
    Base,
    Leg,
    Wheel,
    Steering,
    Arm,
    #[default]
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    #[serde(flatten)]
    pub kind: JointKind,
    /// Joint origin in the parent body frame.
    #[serde(default)]
    pub origin: [f64; 2],
    /// Constant rotation of the joint frame relative to the parent frame.
    #[serde(default)]
    pub angle_offset: f64,
    #[serde(default)]
    pub limits: Option<[f64; 2]>,
    #[serde(default)]
    pub role: JointRole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub name: String,
    pub mass: f64,
    /// Centre of mass in the body frame.
    #[serde(default)]
    pub com: [f64; 2],
    /// Rotational inertia about the centre of mass.
    pub inertia: f64,
    /// Parent body, `None` for the root.
    #[serde(default)]
    pub parent: Option<String>,
    pub joint: Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTask {
    /// Two rows: world `x` and `z`.
    Position,
    /// Three rows: world `x`, `z` and pitch.
    Pose,
}

impl FrameTask {
    pub fn rows(self) -> usize {
        match self {
            FrameTask::Position => 2,
            FrameTask::Pose => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub name: String,
    pub body: String,
    #[serde(default)]
    pub offset: [f64; 2],
    #[serde(default)]
    pub angle: f64,
    pub task: FrameTask,
}

/// Declarative model document. Bodies must be listed parents-first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    pub bodies: Vec<Body>,
    #[serde(default)]
    pub frames: Vec<FrameSpec>,
    /// Joint names whose coordinates are actuated; all non-base joints when omitted.
    #[serde(default)]
    pub actuated: Option<Vec<String>>,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    9.81
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub name: String,
    pub body: BodyId,
    pub offset: Vector2<f64>,
    pub angle: f64,
    pub task: FrameTask,
}

/// Validated planar rigid-body tree. Immutable after construction.
#[derive(Clone, Debug)]
pub struct RobotModel {
    pub(crate) bodies: Vec<Body>,
    pub(crate) parents: Vec<Option<BodyId>>,
    pub(crate) frames: Vec<Frame>,
    /// First velocity index of each body's joint.
    pub(crate) v_offset: Vec<usize>,
    /// Bodies on the path root -> body (inclusive).
    pub(crate) support: Vec<Vec<BodyId>>,
    pub(crate) actuated: Vec<usize>,
    pub(crate) nv: usize,
    pub(crate) gravity: Vector2<f64>,
    pub(crate) description: ModelDescription,
}

impl RobotModel {
    pub fn from_description(desc: ModelDescription) -> Result<Self, RbdError> {
        let invalid = |msg: String| Err(RbdError::InvalidModel(msg));
        if desc.bodies.is_empty() {
            return invalid("model has no bodies".into());
        }
        let mut parents = Vec::with_capacity(desc.bodies.len());
        let mut v_offset = Vec::with_capacity(desc.bodies.len());
        let mut support: Vec<Vec<BodyId>> = Vec::with_capacity(desc.bodies.len());
        let mut nv = 0;
        let mut roots = 0;
        for (i, body) in desc.bodies.iter().enumerate() {
            if !(body.mass >= 0.0 && body.mass.is_finite()) {
                return invalid(format!("body `{}` has invalid mass {}", body.name, body.mass));
            }
            if !(body.inertia >= 0.0 && body.inertia.is_finite()) {
                return invalid(format!("body `{}` has invalid inertia", body.name));
            }
            if desc.bodies[..i].iter().any(|b| b.name == body.name) {
                return invalid(format!("duplicate body name `{}`", body.name));
            }
            let parent = match &body.parent {
                None => {
                    roots += 1;
                    None
                }
                Some(p) => match desc.bodies[..i].iter().position(|b| &b.name == p) {
                    Some(idx) => Some(idx),
                    None => {
                        return invalid(format!(
                            "body `{}` references parent `{p}` that is not listed before it",
                            body.name
                        ))
                    }
                },
            };
            if matches!(body.joint.kind, JointKind::FloatingPlanar) && parent.is_some() {
                return invalid(format!("floating joint `{}` must be the root", body.joint.name));
            }
            if let JointKind::Prismatic { axis } = body.joint.kind {
                if (axis[0].hypot(axis[1]) - 1.0).abs() > 1e-9 {
                    return invalid(format!("prismatic axis of `{}` is not unit", body.joint.name));
                }
            }
            if let Some([lo, hi]) = body.joint.limits {
                if lo > hi {
                    return invalid(format!("joint `{}` has inverted limits", body.joint.name));
                }
            }
            let mut path = parent.map(|p| support[p].clone()).unwrap_or_default();
            path.push(i);
            support.push(path);
            parents.push(parent);
            v_offset.push(nv);
            nv += body.joint.kind.dof();
        }
        if roots != 1 {
            return invalid(format!("expected exactly one root body, found {roots}"));
        }

        let mut frames = Vec::with_capacity(desc.frames.len());
        for f in &desc.frames {
            let Some(body) = desc.bodies.iter().position(|b| b.name == f.body) else {
                return invalid(format!("frame `{}` attached to unknown body `{}`", f.name, f.body));
            };
            frames.push(Frame {
                name: f.name.clone(),
                body,
                offset: Vector2::new(f.offset[0], f.offset[1]),
                angle: f.angle,
                task: f.task,
            });
        }

        let actuated = match &desc.actuated {
            Some(names) => {
                let mut idx = Vec::new();
                for n in names {
                    let Some(b) = desc.bodies.iter().position(|b| &b.joint.name == n) else {
                        return invalid(format!("actuated joint `{n}` does not exist"));
                    };
                    let kind = &desc.bodies[b].joint.kind;
                    if matches!(kind, JointKind::FloatingPlanar) {
                        return invalid(format!("base joint `{n}` cannot be actuated"));
                    }
                    if kind.dof() != 1 {
                        return invalid(format!("joint `{n}` has no coordinate to actuate"));
                    }
                    if idx.contains(&v_offset[b]) {
                        return invalid(format!("joint `{n}` listed twice in actuation map"));
                    }
                    idx.push(v_offset[b]);
                }
                idx
            }
            None => desc
                .bodies
                .iter()
                .enumerate()
                .filter(|(_, b)| b.joint.kind.dof() == 1)
                .map(|(i, _)| v_offset[i])
                .collect(),
        };

        Ok(Self {
            gravity: Vector2::new(0.0, -desc.gravity),
            bodies: desc.bodies.clone(),
            parents,
            frames,
            v_offset,
            support,
            actuated,
            nv,
            description: desc,
        })
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn nq(&self) -> usize {
        self.nv
    }

    pub fn nu(&self) -> usize {
        self.actuated.len()
    }

    pub fn gravity(&self) -> Vector2<f64> {
        self.gravity
    }

    pub fn description(&self) -> &ModelDescription {
        &self.description
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn parent(&self, body: BodyId) -> Option<BodyId> {
        self.parents[body]
    }

    /// Velocity indices driven by actuators, in actuator order.
    pub fn actuated(&self) -> &[usize] {
        &self.actuated
    }

    pub fn frame_id(&self, name: &str) -> Result<FrameId, RbdError> {
        self.frames
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| RbdError::UnknownFrame(name.to_string()))
    }

    pub fn frame(&self, id: FrameId) -> Result<&Frame, RbdError> {
        self.frames.get(id).ok_or_else(|| RbdError::UnknownFrame(format!("#{id}")))
    }

    pub fn body_id(&self, name: &str) -> Option<BodyId> {
        self.bodies.iter().position(|b| b.name == name)
    }

    /// Velocity index of a single-coordinate joint.
    pub fn joint_index(&self, joint: &str) -> Option<usize> {
        self.bodies
            .iter()
            .position(|b| b.joint.name == joint && b.joint.kind.dof() == 1)
            .map(|b| self.v_offset[b])
    }

    pub fn joint_offset(&self, body: BodyId) -> usize {
        self.v_offset[body]
    }

    /// Human-readable name of every generalized coordinate.
    pub fn coordinate_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.nv);
        for b in &self.bodies {
            match b.joint.kind {
                JointKind::FloatingPlanar => {
                    for axis in ["x", "z", "pitch"] {
                        names.push(format!("{}_{axis}", b.joint.name));
                    }
                }
                JointKind::Revolute | JointKind::Prismatic { .. } => names.push(b.joint.name.clone()),
                JointKind::Fixed => {}
            }
        }
        names
    }

    /// Role of each generalized coordinate.
    pub fn coordinate_roles(&self) -> Vec<JointRole> {
        let mut roles = Vec::with_capacity(self.nv);
        for b in &self.bodies {
            let role = match b.joint.kind {
                JointKind::FloatingPlanar => JointRole::Base,
                _ => b.joint.role,
            };
            roles.extend(std::iter::repeat_n(role, b.joint.kind.dof()));
        }
        roles
    }

    /// Actuator indices (positions in `u`) whose joint has `role`.
    pub fn actuators_with_role(&self, role: JointRole) -> Vec<usize> {
        let roles = self.coordinate_roles();
        self.actuated
            .iter()
            .enumerate()
            .filter(|(_, &v)| roles[v] == role)
            .map(|(a, _)| a)
            .collect()
    }

    /// Selection matrix `S` (n_u x n_v).
    pub fn selection(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.nu(), self.nv);
        for (row, &col) in self.actuated.iter().enumerate() {
            s[(row, col)] = 1.0;
        }
        s
    }

    /// `Sᵀ u` without forming `S`.
    pub fn actuation(&self, u: &DVector<f64>) -> Result<DVector<f64>, RbdError> {
        check_dim("controls", self.nu(), u.len())?;
        let mut tau = DVector::zeros(self.nv);
        for (a, &v) in self.actuated.iter().enumerate() {
            tau[v] = u[a];
        }
        Ok(tau)
    }

    pub fn total_mass(&self) -> f64 {
        self.bodies.iter().map(|b| b.mass).sum()
    }

    /// Lower/upper limit per coordinate (infinite where undeclared).
    pub fn coordinate_limits(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.nv);
        for b in &self.bodies {
            for _ in 0..b.joint.kind.dof() {
                out.push(match b.joint.limits {
                    Some([lo, hi]) if b.joint.kind.dof() == 1 => (lo, hi),
                    _ => (f64::NEG_INFINITY, f64::INFINITY),
                });
            }
        }
        out
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), RbdError> {
    if expected == got {
        Ok(())
    } else {
        Err(RbdError::DimensionMismatch { what, expected, got })
    }
}

/// A coordinate found outside its declared limits.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitViolation {
    pub index: usize,
    pub value: f64,
    pub limits: (f64, f64),
}

/// Generalized position and velocity. For the planar models `v = q̇`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl GeneralizedState {
    pub fn new(q: DVector<f64>, v: DVector<f64>) -> Self {
        Self { q, v }
    }

    pub fn zeros(model: &RobotModel) -> Self {
        Self { q: DVector::zeros(model.nq()), v: DVector::zeros(model.nv()) }
    }

    pub fn check_dims(&self, model: &RobotModel) -> Result<(), RbdError> {
        check_dim("q", model.nq(), self.q.len())?;
        check_dim("v", model.nv(), self.v.len())
    }

    pub fn limit_violations(&self, model: &RobotModel) -> Vec<LimitViolation> {
        model
            .coordinate_limits()
            .into_iter()
            .enumerate()
            .filter(|&(i, (lo, hi))| self.q[i] < lo || self.q[i] > hi)
            .map(|(i, limits)| LimitViolation { index: i, value: self.q[i], limits })
            .collect()
    }

    /// Clamps positions into their limits and reports every coordinate touched.
    pub fn clamp_to_limits(&mut self, model: &RobotModel) -> Vec<LimitViolation> {
        let violations = self.limit_violations(model);
        for v in &violations {
            self.q[v.index] = v.value.clamp(v.limits.0, v.limits.1);
        }
        violations
    }

    /// Stacked `[q; v]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.q.len() + self.v.len());
        s.rows_mut(0, self.q.len()).copy_from(&self.q);
        s.rows_mut(self.q.len(), self.v.len()).copy_from(&self.v);
        s
    }

    pub fn from_vector(s: &DVector<f64>, nq: usize) -> Self {
        Self {
            q: s.rows(0, nq).into_owned(),
            v: s.rows(nq, s.len() - nq).into_owned(),
        }
    }
}
