use std::sync::Arc;

use nalgebra::DVector;

use super::JointServo;
use crate::contact::{ContactSpec, ContactSystem, Ground};
use crate::ocp::{Dynamics, OcpError, StepOutput};
use crate::rbd::{GeneralizedState, RobotModel};

/// Contact-constrained multibody dynamics as an optimizer hook.
///
/// State `x = [q; v]`, controls are the torques of the `free` actuators;
/// every other actuator is driven by `servo` (or left passive). One step is
/// semi-implicit Euler. The auxiliary output stacks the local wrench of each
/// contact (6 entries per contact, zero when inactive).
pub struct WholeBodyDynamics {
    pub model: Arc<RobotModel>,
    pub contacts: Vec<ContactSpec>,
    pub ground: Arc<dyn Ground>,
    pub dt: f64,
    pub free: Vec<usize>,
    pub servo: JointServo,
}

impl WholeBodyDynamics {
    pub fn split(&self, x: &DVector<f64>) -> GeneralizedState {
        GeneralizedState::from_vector(x, self.model.nq())
    }

    /// Full actuator vector with `u` on the free actuators and zero elsewhere.
    pub fn full_controls(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.model.nu());
        for (i, &a) in self.free.iter().enumerate() {
            full[a] = u[i];
        }
        full
    }
}

impl Dynamics for WholeBodyDynamics {
    fn nx(&self) -> usize {
        self.model.nq() + self.model.nv()
    }

    fn nu(&self) -> usize {
        self.free.len()
    }

    fn naux(&self) -> usize {
        6 * self.contacts.len()
    }

    fn step(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<StepOutput, OcpError> {
        let fail = |why: String| OcpError::Dynamics { node: k, why };
        let s = self.split(x);
        let mut sys = ContactSystem::assemble(&self.model, &s, &self.contacts, self.ground.as_ref()).map_err(|e| fail(e.to_string()))?;
        let mut tau = self.model.actuation(&self.full_controls(u)).map_err(|e| fail(e.to_string()))?;
        self.servo.apply(&mut sys.mass, &mut tau, &s.q, &s.v, self.dt);
        let (qdd, lambda) = sys.solve(&tau).map_err(|e| fail(e.to_string()))?;
        let v1 = &s.v + &qdd * self.dt;
        let q1 = &s.q + &v1 * self.dt;
        let mut next = DVector::zeros(x.len());
        next.rows_mut(0, q1.len()).copy_from(&q1);
        next.rows_mut(q1.len(), v1.len()).copy_from(&v1);
        let mut aux = DVector::zeros(self.naux());
        for (i, w) in sys.wrenches(self.contacts.len(), &lambda).iter().enumerate() {
            aux.rows_mut(6 * i, 6).copy_from(w);
        }
        Ok(StepOutput { next, aux })
    }
}
