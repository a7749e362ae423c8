//! Ready-made models: the sagittal wheel-legged rig with a three-link arm and
//! a few textbook mechanisms used for verification.
//!
//! All numbers here are desk-scale choices, not measurements of any platform.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::frame_pose;
use super::model::{Body, FrameSpec, FrameTask, Joint, JointKind, JointRole, ModelDescription, RobotModel};

/// Geometry and inertia of the sagittal rig.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigParams {
    pub base_mass: f64,
    pub base_inertia: f64,
    /// Longitudinal distance from the base origin to each hip.
    pub hip_offset: f64,
    pub hip_height: f64,
    pub thigh_length: f64,
    pub thigh_mass: f64,
    pub shank_length: f64,
    pub shank_mass: f64,
    pub wheel_radius: f64,
    pub wheel_mass: f64,
    pub shoulder: [f64; 2],
    pub upper_arm_length: f64,
    pub upper_arm_mass: f64,
    pub forearm_length: f64,
    pub forearm_mass: f64,
    pub hand_length: f64,
    pub hand_mass: f64,
    pub gravity: f64,
}

impl Default for RigParams {
    fn default() -> Self {
        Self {
            base_mass: 8.0,
            base_inertia: 0.12,
            hip_offset: 0.25,
            hip_height: -0.03,
            thigh_length: 0.22,
            thigh_mass: 0.8,
            shank_length: 0.22,
            shank_mass: 0.5,
            wheel_radius: 0.05,
            wheel_mass: 0.3,
            shoulder: [0.08, 0.05],
            upper_arm_length: 0.3,
            upper_arm_mass: 0.6,
            forearm_length: 0.25,
            forearm_mass: 0.4,
            hand_length: 0.08,
            hand_mass: 0.2,
            gravity: 9.81,
        }
    }
}

/// Names used by the rig for its frames and joints.
pub mod names {
    pub const BASE: &str = "base";
    pub const EE: &str = "ee";
    pub const FRONT_WHEEL: &str = "front_wheel";
    pub const REAR_WHEEL: &str = "rear_wheel";
    pub const FRONT_HIP: &str = "front_hip";
    pub const FRONT_KNEE: &str = "front_knee";
    pub const REAR_HIP: &str = "rear_hip";
    pub const REAR_KNEE: &str = "rear_knee";
    pub const SHOULDER: &str = "shoulder";
    pub const ELBOW: &str = "elbow";
    pub const WRIST: &str = "wrist";
}

fn slender(mass: f64, length: f64) -> f64 {
    mass * length * length / 12.0
}

fn revolute(name: &str, origin: [f64; 2], limits: Option<[f64; 2]>, role: JointRole) -> Joint {
    Joint { name: name.into(), kind: JointKind::Revolute, origin, angle_offset: 0.0, limits, role }
}

#[allow(clippy::too_many_arguments)]
fn link(name: &str, parent: &str, mass: f64, com: [f64; 2], inertia: f64, joint: Joint) -> Body {
    Body { name: name.into(), mass, com, inertia, parent: Some(parent.into()), joint }
}

impl RigParams {
    pub fn description(&self) -> ModelDescription {
        use names::*;
        let p = self;
        let mut bodies = vec![Body {
            name: BASE.into(),
            mass: p.base_mass,
            com: [0.0, 0.0],
            inertia: p.base_inertia,
            parent: None,
            joint: Joint {
                name: BASE.into(),
                kind: JointKind::FloatingPlanar,
                origin: [0.0, 0.0],
                angle_offset: 0.0,
                limits: None,
                role: JointRole::Base,
            },
        }];
        for (side, x) in [("front", p.hip_offset), ("rear", -p.hip_offset)] {
            let thigh = format!("{side}_thigh");
            let shank = format!("{side}_shank");
            bodies.push(link(
                &thigh,
                BASE,
                p.thigh_mass,
                [0.0, -0.5 * p.thigh_length],
                slender(p.thigh_mass, p.thigh_length),
                revolute(&format!("{side}_hip"), [x, p.hip_height], Some([-2.0, 2.0]), JointRole::Leg),
            ));
            bodies.push(link(
                &shank,
                &thigh,
                p.shank_mass,
                [0.0, -0.5 * p.shank_length],
                slender(p.shank_mass, p.shank_length),
                revolute(&format!("{side}_knee"), [0.0, -p.thigh_length], Some([-2.6, 2.6]), JointRole::Leg),
            ));
            bodies.push(link(
                &format!("{side}_wheel"),
                &shank,
                p.wheel_mass,
                [0.0, 0.0],
                0.5 * p.wheel_mass * p.wheel_radius * p.wheel_radius,
                revolute(&format!("{side}_wheel"), [0.0, -p.shank_length], None, JointRole::Wheel),
            ));
        }
        bodies.push(link(
            "upper_arm",
            BASE,
            p.upper_arm_mass,
            [0.0, 0.5 * p.upper_arm_length],
            slender(p.upper_arm_mass, p.upper_arm_length),
            revolute(SHOULDER, p.shoulder, Some([-2.5, 2.5]), JointRole::Arm),
        ));
        bodies.push(link(
            "forearm",
            "upper_arm",
            p.forearm_mass,
            [0.0, 0.5 * p.forearm_length],
            slender(p.forearm_mass, p.forearm_length),
            revolute(ELBOW, [0.0, p.upper_arm_length], Some([-2.6, 2.6]), JointRole::Arm),
        ));
        bodies.push(link(
            "hand",
            "forearm",
            p.hand_mass,
            [0.0, 0.5 * p.hand_length],
            slender(p.hand_mass, p.hand_length),
            revolute(WRIST, [0.0, p.forearm_length], Some([-2.0, 2.0]), JointRole::Arm),
        ));
        let frame = |name: &str, body: &str, offset: [f64; 2], task| FrameSpec {
            name: name.into(),
            body: body.into(),
            offset,
            angle: 0.0,
            task,
        };
        ModelDescription {
            bodies,
            frames: vec![
                frame(BASE, BASE, [0.0, 0.0], FrameTask::Pose),
                frame(FRONT_WHEEL, "front_wheel", [0.0, 0.0], FrameTask::Position),
                frame(REAR_WHEEL, "rear_wheel", [0.0, 0.0], FrameTask::Position),
                frame(EE, "hand", [0.0, p.hand_length], FrameTask::Pose),
            ],
            actuated: None,
            gravity: p.gravity,
        }
    }

    pub fn build(&self) -> RobotModel {
        RobotModel::from_description(self.description()).expect("rig description is valid")
    }

    /// Configuration with the given leg and arm angles whose wheels rest on
    /// the ground `z = ground` at base position `x`. Legs are ordered
    /// `[front_hip, front_knee, rear_hip, rear_knee]`; the base height is
    /// taken from the lower wheel and the base pitch is zero.
    pub fn standing_q(&self, model: &RobotModel, x: f64, ground: f64, legs: [f64; 4], arm: [f64; 3]) -> DVector<f64> {
        use names::*;
        let mut q = DVector::zeros(model.nq());
        let joints = [FRONT_HIP, FRONT_KNEE, REAR_HIP, REAR_KNEE, SHOULDER, ELBOW, WRIST];
        let values = legs.iter().chain(arm.iter());
        for (name, &val) in joints.iter().zip(values) {
            let k = model.joint_index(name).expect("rig joint");
            q[k] = val;
        }
        q[0] = x;
        let low = [FRONT_WHEEL, REAR_WHEEL]
            .iter()
            .map(|f| {
                let id = model.frame_id(f).expect("rig frame");
                frame_pose(model, &q, id).expect("valid q").position.y
            })
            .fold(f64::INFINITY, f64::min);
        q[1] = ground + self.wheel_radius - low;
        q
    }
}

/// Leg angles of the default crouched stance.
pub const NOMINAL_LEGS: [f64; 4] = [0.5, -1.0, -0.5, 1.0];

/// Default sagittal rig.
pub fn sagittal_rig() -> RobotModel {
    RigParams::default().build()
}

/// Fixed-base pendulum: point mass `mass` at distance `length` below the pivot
/// when `q = 0`. Frame `tip` sits on the mass.
pub fn pendulum(mass: f64, length: f64, gravity: f64) -> RobotModel {
    let desc = ModelDescription {
        bodies: vec![Body {
            name: "link".into(),
            mass,
            com: [0.0, -length],
            inertia: 0.0,
            parent: None,
            joint: revolute("hinge", [0.0, 0.0], None, JointRole::Other),
        }],
        frames: vec![FrameSpec {
            name: "tip".into(),
            body: "link".into(),
            offset: [0.0, -length],
            angle: 0.0,
            task: FrameTask::Position,
        }],
        actuated: None,
        gravity,
    };
    RobotModel::from_description(desc).expect("valid pendulum")
}

/// Planar double pendulum with point masses at the link tips.
pub fn double_pendulum(m1: f64, m2: f64, l1: f64, l2: f64, gravity: f64) -> RobotModel {
    let desc = ModelDescription {
        bodies: vec![
            Body {
                name: "upper".into(),
                mass: m1,
                com: [0.0, -l1],
                inertia: 0.0,
                parent: None,
                joint: revolute("shoulder", [0.0, 0.0], None, JointRole::Other),
            },
            link("lower", "upper", m2, [0.0, -l2], 0.0, revolute("elbow", [0.0, -l1], None, JointRole::Other)),
        ],
        frames: vec![FrameSpec {
            name: "tip".into(),
            body: "lower".into(),
            offset: [0.0, -l2],
            angle: 0.0,
            task: FrameTask::Pose,
        }],
        actuated: None,
        gravity,
    };
    RobotModel::from_description(desc).expect("valid double pendulum")
}

/// One-DOF slider along world `x`.
pub fn slider(mass: f64) -> RobotModel {
    let desc = ModelDescription {
        bodies: vec![Body {
            name: "cart".into(),
            mass,
            com: [0.0, 0.0],
            inertia: 0.0,
            parent: None,
            joint: Joint {
                name: "rail".into(),
                kind: JointKind::Prismatic { axis: [1.0, 0.0] },
                origin: [0.0, 0.0],
                angle_offset: 0.0,
                limits: None,
                role: JointRole::Other,
            },
        }],
        frames: vec![],
        actuated: None,
        gravity: 9.81,
    };
    RobotModel::from_description(desc).expect("valid slider")
}

/// Free planar body (x, z, pitch) with a small rotational inertia and a
/// `contact` frame at its centre.
pub fn point_mass(mass: f64, gravity: f64) -> RobotModel {
    let desc = ModelDescription {
        bodies: vec![Body {
            name: "body".into(),
            mass,
            com: [0.0, 0.0],
            inertia: 0.01,
            parent: None,
            joint: Joint {
                name: "free".into(),
                kind: JointKind::FloatingPlanar,
                origin: [0.0, 0.0],
                angle_offset: 0.0,
                limits: None,
                role: JointRole::Base,
            },
        }],
        frames: vec![
            FrameSpec {
                name: "contact".into(),
                body: "body".into(),
                offset: [0.0, 0.0],
                angle: 0.0,
                task: FrameTask::Position,
            },
            FrameSpec { name: "body".into(), body: "body".into(), offset: [0.0, 0.0], angle: 0.0, task: FrameTask::Pose },
        ],
        actuated: Some(vec![]),
        gravity,
    };
    RobotModel::from_description(desc).expect("valid point mass")
}
