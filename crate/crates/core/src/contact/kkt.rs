use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use super::cone::{ContactKind, ContactSpec, ContactWrench};
use super::ground::Ground;
use super::ContactError;
use crate::rbd::{bias_forces_from, mass_matrix_from, GeneralizedState, Kinematics, RobotModel};

/// Where and how a contact touches the ground for one configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactPoint {
    /// World (x, z) of the touching point.
    pub position: Vector2<f64>,
    pub tangent: Vector2<f64>,
    pub normal: Vector2<f64>,
}

impl ContactPoint {
    pub fn position3(&self) -> Vector3<f64> {
        Vector3::new(self.position.x, 0.0, self.position.y)
    }

    /// Re-expresses a local wrench in world-aligned axes (x forward, y lateral, z up).
    pub fn to_world(&self, w: &ContactWrench) -> ContactWrench {
        let (t, n) = (self.tangent, self.normal);
        let rot = |a: f64, b: f64, c: f64| Vector3::new(t.x * a + n.x * c, b, t.y * a + n.y * c);
        let f = rot(w[0], w[1], w[2]);
        let m = rot(w[3], w[4], w[5]);
        ContactWrench::new(f.x, f.y, f.z, m.x, m.y, m.z)
    }
}

/// Number of planar constraint rows a contact contributes.
pub fn constraint_rows(spec: &ContactSpec) -> usize {
    match spec.kind {
        ContactKind::Full => 3,
        _ => 2,
    }
}

/// Planar multipliers `(λ_t, λ_n[, λ_pitch])` to the local 6D wrench. A
/// counter-clockwise pitch moment in the (x, z) plane is a negative moment
/// about the local y axis.
pub fn planar_to_wrench(lambda: &[f64]) -> ContactWrench {
    let pitch = lambda.get(2).copied().unwrap_or(0.0);
    ContactWrench::new(lambda[0], 0.0, lambda[1], 0.0, -pitch, 0.0)
}

fn wrench_to_planar(spec: &ContactSpec, w: &ContactWrench) -> Vec<f64> {
    match spec.kind {
        ContactKind::Full => vec![w[0], w[2], -w[4]],
        _ => vec![w[0], w[2]],
    }
}

/// Constraint rows of one contact: Jacobian, drift `J̇ v` and contact geometry.
pub(crate) struct ContactRows {
    pub jac: DMatrix<f64>,
    pub drift: DVector<f64>,
    pub point: ContactPoint,
}

pub(crate) fn contact_rows(
    model: &RobotModel,
    kin: &Kinematics,
    v: Option<&DVector<f64>>,
    spec: &ContactSpec,
    ground: &dyn Ground,
) -> Result<ContactRows, ContactError> {
    spec.validate()?;
    let frame = model.frame(model.frame_id(&spec.frame)?)?;
    let (body, offset) = (frame.body, frame.offset);
    let jp = kin.point_jacobian(model, body, &offset);
    let centre = kin.point(body, &offset);
    let (t, n) = ground.frame(centre.x);
    let rows = constraint_rows(spec);
    let mut jac = DMatrix::zeros(rows, model.nv());
    let jt = jp.rows(0, 2);
    jac.row_mut(0).copy_from(&(t.transpose() * jt));
    jac.row_mut(1).copy_from(&(n.transpose() * jt));
    let position = match spec.rolling_radius {
        Some(rho) => {
            // Material point at the bottom of the wheel has zero velocity.
            let r = jp.row(2) * rho;
            let mut row = jac.row_mut(0);
            row += r;
            centre - n * rho
        }
        None => centre,
    };
    if rows == 3 {
        jac.row_mut(2).copy_from(&jp.row(2));
    }
    let mut drift = DVector::zeros(rows);
    if let Some(v) = v {
        let a = kin.point_bias_acceleration(model, body, &offset, v);
        let vc = kin.point_velocity(body, &offset);
        let turn = ground.turn_rate(centre.x, vc.x);
        // t' = turn * n, n' = -turn * t.
        drift[0] = t.dot(&a) + turn * n.dot(&vc);
        drift[1] = n.dot(&a) - turn * t.dot(&vc);
    }
    Ok(ContactRows { jac, drift, point: ContactPoint { position, tangent: t, normal: n } })
}

/// Stacked constraint Jacobian of the active contacts.
pub fn contact_jacobian(
    model: &RobotModel,
    q: &DVector<f64>,
    contacts: &[ContactSpec],
    ground: &dyn Ground,
) -> Result<DMatrix<f64>, ContactError> {
    let kin = Kinematics::compute(model, q, None)?;
    let active: Vec<_> = contacts.iter().filter(|c| c.active).collect();
    let rows: usize = active.iter().map(|c| constraint_rows(c)).sum();
    let mut jac = DMatrix::zeros(rows, model.nv());
    let mut r = 0;
    for c in active {
        let cr = contact_rows(model, &kin, None, c, ground)?;
        jac.rows_mut(r, cr.jac.nrows()).copy_from(&cr.jac);
        r += cr.jac.nrows();
    }
    Ok(jac)
}

/// Geometry of every contact (active or not) at configuration `q`.
pub fn contact_points(
    model: &RobotModel,
    q: &DVector<f64>,
    contacts: &[ContactSpec],
    ground: &dyn Ground,
) -> Result<Vec<ContactPoint>, ContactError> {
    let kin = Kinematics::compute(model, q, None)?;
    contacts.iter().map(|c| Ok(contact_rows(model, &kin, None, c, ground)?.point)).collect()
}

/// Result of a contact-constrained forward-dynamics solve.
#[derive(Clone, Debug)]
pub struct ConstrainedAccel {
    pub qdd: DVector<f64>,
    /// Local wrench per input contact, zero for inactive ones.
    pub wrenches: Vec<ContactWrench>,
    pub points: Vec<ContactPoint>,
    /// `‖J_c q̈ + J̇_c v‖∞` of the returned solution.
    pub constraint_residual: f64,
}

/// Relative threshold on the smallest eigenvalue of `J Jᵀ` below which the
/// contact set is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Terms of the contact-constrained equations of motion at one state:
/// `M q̈ + h = τ + Jᵀ λ` with `J q̈ + J̇v = 0` over the active contacts.
#[derive(Clone, Debug)]
pub struct ContactSystem {
    pub mass: DMatrix<f64>,
    pub bias: DVector<f64>,
    /// Stacked rows of the active contacts.
    pub jac: DMatrix<f64>,
    pub drift: DVector<f64>,
    /// `(contact index, first row, rows)` for each active contact.
    pub blocks: Vec<(usize, usize, usize)>,
    pub points: Vec<ContactPoint>,
    names: Vec<String>,
}

impl ContactSystem {
    pub fn assemble(
        model: &RobotModel,
        s: &GeneralizedState,
        contacts: &[ContactSpec],
        ground: &dyn Ground,
    ) -> Result<Self, ContactError> {
        s.check_dims(model)?;
        let kin = Kinematics::compute(model, &s.q, Some(&s.v))?;
        let nv = model.nv();
        let mass = mass_matrix_from(model, &kin);
        let bias = bias_forces_from(model, &kin, &s.v, model.gravity());
        let mut rows = Vec::with_capacity(contacts.len());
        for c in contacts {
            rows.push(contact_rows(model, &kin, Some(&s.v), c, ground)?);
        }
        let mut blocks = Vec::new();
        let mut nc = 0;
        for (i, c) in contacts.iter().enumerate() {
            if c.active {
                blocks.push((i, nc, rows[i].jac.nrows()));
                nc += rows[i].jac.nrows();
            }
        }
        let mut jac = DMatrix::zeros(nc, nv);
        let mut drift = DVector::zeros(nc);
        for &(i, r, k) in &blocks {
            jac.rows_mut(r, k).copy_from(&rows[i].jac);
            drift.rows_mut(r, k).copy_from(&rows[i].drift);
        }
        let names = blocks.iter().map(|&(i, _, _)| contacts[i].frame.clone()).collect();
        let points = rows.iter().map(|r| r.point).collect();
        Ok(Self { mass, bias, jac, drift, blocks, points, names })
    }

    pub fn active_names(&self) -> &[String] {
        &self.names
    }

    /// Fails when the active contact rows are (numerically) dependent.
    pub fn check_rank(&self) -> Result<(), ContactError> {
        if self.jac.nrows() == 0 {
            return Ok(());
        }
        let gram = &self.jac * self.jac.transpose();
        let eig = gram.symmetric_eigenvalues();
        let max = eig.max().max(f64::MIN_POSITIVE);
        if eig.min() <= RANK_TOL * max {
            return Err(ContactError::RankDeficient { contacts: self.names.clone() });
        }
        Ok(())
    }

    /// Solves the saddle system for generalized forces `tau` (actuation,
    /// without `h`). Returns `(q̈, λ)`.
    pub fn solve(&self, tau: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>), ContactError> {
        let nv = self.mass.nrows();
        let nc = self.jac.nrows();
        let dim = nv + nc;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&self.mass);
        kkt.view_mut((0, nv), (nv, nc)).copy_from(&(-self.jac.transpose()));
        kkt.view_mut((nv, 0), (nc, nv)).copy_from(&self.jac);
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, nv).copy_from(&(tau - &self.bias));
        rhs.rows_mut(nv, nc).copy_from(&(-&self.drift));
        let singular = || ContactError::SingularKkt { contacts: self.names.clone() };
        let sol = kkt.lu().solve(&rhs).ok_or_else(singular)?;
        if sol.iter().any(|x| !x.is_finite()) {
            return Err(singular());
        }
        Ok((sol.rows(0, nv).into_owned(), sol.rows(nv, nc).into_owned()))
    }

    /// `‖J q̈ + J̇v‖∞`.
    pub fn constraint_residual(&self, qdd: &DVector<f64>) -> f64 {
        if self.jac.nrows() == 0 {
            0.0
        } else {
            (&self.jac * qdd + &self.drift).amax()
        }
    }

    /// Local wrenches per contact (zero for inactive ones) from multipliers.
    pub fn wrenches(&self, n_contacts: usize, lambda: &DVector<f64>) -> Vec<ContactWrench> {
        let mut out = vec![ContactWrench::zeros(); n_contacts];
        for &(i, r, k) in &self.blocks {
            out[i] = planar_to_wrench(lambda.rows(r, k).as_slice());
        }
        out
    }
}

/// Forward dynamics with the active contacts held by bilateral constraints:
/// `[[M, -Jᵀ], [J, 0]] [q̈; λ] = [Sᵀu - h; -J̇v]`, solved by dense LU.
pub fn fd_constrained(
    model: &RobotModel,
    s: &GeneralizedState,
    u: &DVector<f64>,
    contacts: &[ContactSpec],
    ground: &dyn Ground,
) -> Result<ConstrainedAccel, ContactError> {
    let sys = ContactSystem::assemble(model, s, contacts, ground)?;
    sys.check_rank()?;
    let (qdd, lambda) = sys.solve(&model.actuation(u)?)?;
    let constraint_residual = sys.constraint_residual(&qdd);
    let wrenches = sys.wrenches(contacts.len(), &lambda);
    Ok(ConstrainedAccel { qdd, wrenches, points: sys.points, constraint_residual })
}

/// Generalized force balance `Σ J_iᵀ f_i + f_ext`. Zero iff the wrenches and
/// `f_ext` are in static equilibrium. Only the components a contact can
/// transmit in the plane (`f_x`, `f_z` and, for full contacts, `τ_y`) enter.
pub fn newton_euler_residual(
    model: &RobotModel,
    q: &DVector<f64>,
    wrenches: &[(&ContactSpec, ContactWrench)],
    f_ext: &DVector<f64>,
    ground: &dyn Ground,
) -> Result<DVector<f64>, ContactError> {
    crate::rbd::check_dim("f_ext", model.nv(), f_ext.len())?;
    let kin = Kinematics::compute(model, q, None)?;
    let mut res = f_ext.clone();
    for (spec, w) in wrenches {
        let cr = contact_rows(model, &kin, None, spec, ground)?;
        let lambda = DVector::from_vec(wrench_to_planar(spec, w));
        res += cr.jac.transpose() * lambda;
    }
    Ok(res)
}
