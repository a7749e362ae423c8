use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::SimError;
use crate::contact::{contact_points, ContactPoint, ContactSpec, ContactSystem, ContactWrench, Ground};
use crate::control::JointServo;
use crate::rbd::{mass_matrix, GeneralizedState, RobotModel};

/// Largest integration step accepted by [`World::step`].
pub const MAX_DT: f64 = 0.005;

/// Normal force below which an engaged contact is released.
pub const RELEASE_FORCE: f64 = 0.5;

/// Multibody state, its contacts and the terrain. A contact's `active` flag
/// says whether it is currently engaged.
pub struct World {
    pub model: Arc<RobotModel>,
    pub contacts: Vec<ContactSpec>,
    pub ground: Arc<dyn Ground>,
    pub state: GeneralizedState,
    pub t: f64,
    pub release_force: f64,
}

/// What happened during one step.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub qdd: DVector<f64>,
    /// Local wrench per contact (zero when not engaged).
    pub wrenches: Vec<ContactWrench>,
    /// Contact geometry at the end of the step.
    pub points: Vec<ContactPoint>,
    /// Torques exerted by the servo, in the servo's joint order.
    pub servo_torques: Vec<f64>,
    pub engaged: Vec<usize>,
    pub released: Vec<usize>,
    /// Deepest penetration over all contacts after the step (0 if none).
    pub penetration: f64,
}

impl World {
    pub fn new(model: Arc<RobotModel>, contacts: Vec<ContactSpec>, ground: Arc<dyn Ground>, state: GeneralizedState) -> Result<Self, SimError> {
        state.check_dims(&model)?;
        for c in &contacts {
            c.validate()?;
            model.frame_id(&c.frame)?;
        }
        Ok(Self { model, contacts, ground, state, t: 0.0, release_force: RELEASE_FORCE })
    }

    pub fn all_engaged(&self) -> bool {
        self.contacts.iter().all(|c| c.active)
    }

    /// Signed distance of each contact from the terrain (negative inside).
    pub fn gaps(&self, q: &DVector<f64>) -> Result<Vec<f64>, SimError> {
        let pts = contact_points(&self.model, q, &self.contacts, self.ground.as_ref())?;
        Ok(pts.iter().map(|p| (p.position.y - self.ground.height(p.position.x)) * p.normal.y).collect())
    }

    /// Advances by `dt` with actuator torques `u` and the implicit servo:
    /// semi-implicit Euler on the contact-constrained dynamics, followed by
    /// contact release/engagement and projection of the engaged contacts
    /// back onto the terrain.
    pub fn step(&mut self, u: &DVector<f64>, servo: &JointServo, dt: f64) -> Result<StepReport, SimError> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(SimError::InvalidStep(dt));
        }
        let tau0 = self.model.actuation(u)?;
        if tau0.iter().any(|x| !x.is_finite()) {
            return Err(SimError::NonFinite { t: self.t, what: "actuator torques".into() });
        }
        let s = self.state.clone();
        let mut released = Vec::new();
        let (qdd, wrenches) = loop {
            let mut sys = ContactSystem::assemble(&self.model, &s, &self.contacts, self.ground.as_ref())?;
            let mut tau = tau0.clone();
            servo.apply(&mut sys.mass, &mut tau, &s.q, &s.v, dt);
            sys.check_rank()?;
            let (qdd, lambda) = sys.solve(&tau)?;
            let wrenches = sys.wrenches(self.contacts.len(), &lambda);
            // Release the most strongly pulling contact and solve again.
            let weakest = (0..self.contacts.len())
                .filter(|&i| self.contacts[i].active && wrenches[i][2] < self.release_force)
                .min_by(|&a, &b| wrenches[a][2].total_cmp(&wrenches[b][2]));
            match weakest {
                Some(i) => {
                    self.contacts[i].active = false;
                    released.push(i);
                }
                None => break (qdd, wrenches),
            }
        };
        let servo_torques = servo.torques(&s.q, &s.v, &qdd, dt);
        let v = &s.v + &qdd * dt;
        let q = &s.q + &v * dt;
        self.state = GeneralizedState::new(q, v);
        self.t += dt;

        let gaps = self.gaps(&self.state.q)?;
        let mut engaged = Vec::new();
        for (i, g) in gaps.iter().enumerate() {
            if !self.contacts[i].active && *g < 0.0 {
                self.contacts[i].active = true;
                engaged.push(i);
            }
        }
        self.project_state()?;
        let gaps = self.gaps(&self.state.q)?;
        let penetration = gaps.iter().fold(0.0f64, |m, g| m.max(-g));
        let points = contact_points(&self.model, &self.state.q, &self.contacts, self.ground.as_ref())?;
        if self.state.q.iter().chain(self.state.v.iter()).any(|x| !x.is_finite()) {
            return Err(SimError::NonFinite { t: self.t, what: "state".into() });
        }
        Ok(StepReport { qdd, wrenches, points, servo_torques, engaged, released, penetration })
    }

    /// Removes the normal gap of engaged contacts (mass-weighted position
    /// correction) and the velocity along all engaged constraint rows.
    pub fn project_state(&mut self) -> Result<(), SimError> {
        if !self.contacts.iter().any(|c| c.active) {
            return Ok(());
        }
        for _ in 0..2 {
            let gaps = self.gaps(&self.state.q)?;
            let sys = ContactSystem::assemble(&self.model, &self.state, &self.contacts, self.ground.as_ref())?;
            let normal_rows: Vec<usize> = sys.blocks.iter().map(|&(_, r, _)| r + 1).collect();
            let gap: Vec<f64> = sys.blocks.iter().map(|&(i, _, _)| gaps[i]).collect();
            if gap.iter().all(|g| g.abs() < 1e-12) {
                break;
            }
            let jn = DMatrix::from_fn(normal_rows.len(), self.model.nv(), |i, j| sys.jac[(normal_rows[i], j)]);
            let dq = mass_weighted_correction(&sys.mass, &jn, &DVector::from_vec(gap).map(|g| -g))?;
            self.state.q += dq;
        }
        let sys = ContactSystem::assemble(&self.model, &self.state, &self.contacts, self.ground.as_ref())?;
        let jv = &sys.jac * &self.state.v;
        let mass = mass_matrix(&self.model, &self.state.q)?;
        let dv = mass_weighted_correction(&mass, &sys.jac, &(-jv))?;
        self.state.v += dv;
        Ok(())
    }
}

/// Smallest `M`-norm `Δ` with `J Δ = r`: `Δ = M⁻¹Jᵀ (J M⁻¹ Jᵀ)⁻¹ r`.
fn mass_weighted_correction(mass: &DMatrix<f64>, jac: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>, SimError> {
    let chol = mass.clone().cholesky().ok_or(SimError::Projection)?;
    let minv_jt = chol.solve(&jac.transpose());
    let gram = jac * &minv_jt;
    let y = gram.lu().solve(r).ok_or(SimError::Projection)?;
    Ok(minv_jt * y)
}
