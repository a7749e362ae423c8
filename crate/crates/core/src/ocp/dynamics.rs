use nalgebra::{DMatrix, DVector};

use super::OcpError;

/// One discrete transition `x' = f_k(x, u)` together with an auxiliary
/// output `a_k(x, u)` (for instance stacked contact wrenches) that cost terms
/// may read.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub next: DVector<f64>,
    pub aux: DVector<f64>,
}

/// First-order expansion of a transition around `(x, u)`.
#[derive(Clone, Debug)]
pub struct Derivatives {
    pub next: DVector<f64>,
    pub aux: DVector<f64>,
    pub fx: DMatrix<f64>,
    pub fu: DMatrix<f64>,
    pub ax: DMatrix<f64>,
    pub au: DMatrix<f64>,
}

/// Discrete-time dynamics used by the solver. Implementations must be
/// deterministic; derivatives default to central finite differences.
pub trait Dynamics: Send + Sync {
    fn nx(&self) -> usize;
    fn nu(&self) -> usize;
    fn naux(&self) -> usize {
        0
    }
    fn step(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<StepOutput, OcpError>;
    fn derivatives(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<Derivatives, OcpError> {
        finite_difference(self, k, x, u, FD_STEP)
    }
}

/// Relative perturbation used by [`finite_difference`].
pub const FD_STEP: f64 = 1e-6;

/// Central finite-difference expansion of `dynamics` at `(x, u)`.
pub fn finite_difference<D: Dynamics + ?Sized>(
    dynamics: &D,
    k: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
    eps: f64,
) -> Result<Derivatives, OcpError> {
    let (nx, nu) = (x.len(), u.len());
    let nominal = dynamics.step(k, x, u)?;
    let na = nominal.aux.len();
    let mut fx = DMatrix::zeros(nominal.next.len(), nx);
    let mut ax = DMatrix::zeros(na, nx);
    let mut fu = DMatrix::zeros(nominal.next.len(), nu);
    let mut au = DMatrix::zeros(na, nu);
    let mut xp = x.clone();
    for j in 0..nx {
        let h = eps * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let p = dynamics.step(k, &xp, u)?;
        xp[j] = x[j] - h;
        let m = dynamics.step(k, &xp, u)?;
        xp[j] = x[j];
        fx.column_mut(j).copy_from(&((p.next - m.next) / (2.0 * h)));
        ax.column_mut(j).copy_from(&((p.aux - m.aux) / (2.0 * h)));
    }
    let mut up = u.clone();
    for j in 0..nu {
        let h = eps * u[j].abs().max(1.0);
        up[j] = u[j] + h;
        let p = dynamics.step(k, x, &up)?;
        up[j] = u[j] - h;
        let m = dynamics.step(k, x, &up)?;
        up[j] = u[j];
        fu.column_mut(j).copy_from(&((p.next - m.next) / (2.0 * h)));
        au.column_mut(j).copy_from(&((p.aux - m.aux) / (2.0 * h)));
    }
    Ok(Derivatives { next: nominal.next, aux: nominal.aux, fx, fu, ax, au })
}

/// `x' = A x + B u + c` with exact derivatives.
#[derive(Clone, Debug)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        let c = DVector::zeros(a.nrows());
        Self { a, b, c }
    }
}

impl Dynamics for LinearDynamics {
    fn nx(&self) -> usize {
        self.a.nrows()
    }
    fn nu(&self) -> usize {
        self.b.ncols()
    }
    fn step(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<StepOutput, OcpError> {
        Ok(StepOutput { next: &self.a * x + &self.b * u + &self.c, aux: DVector::zeros(0) })
    }
    fn derivatives(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<Derivatives, OcpError> {
        let s = self.step(k, x, u)?;
        Ok(Derivatives {
            next: s.next,
            aux: s.aux,
            fx: self.a.clone(),
            fu: self.b.clone(),
            ax: DMatrix::zeros(0, self.nx()),
            au: DMatrix::zeros(0, self.nu()),
        })
    }
}
