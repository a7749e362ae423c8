use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contact::WrenchCone;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    LegTracking,
    ComTracking,
    ContactForce,
    Regularization,
    BasePose,
    SteeringPosture,
    ArmPose,
}

/// How a residual is turned into a cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Penalty {
    /// `½ w ‖r‖²`
    Quadratic,
    /// `½ w Σ max(0, r_i)²`
    Hinge,
}

/// Residual value and its partial Jacobians. `raux` is `None` when the
/// residual does not read the auxiliary dynamics output.
#[derive(Clone, Debug)]
pub struct ResidualEval {
    pub r: DVector<f64>,
    pub rx: DMatrix<f64>,
    pub ru: DMatrix<f64>,
    pub raux: Option<DMatrix<f64>>,
}

pub trait Residual: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, aux: &DVector<f64>) -> ResidualEval;
    fn value(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, aux: &DVector<f64>) -> DVector<f64> {
        self.eval(k, x, u, aux).r
    }
}

#[derive(Clone)]
pub struct CostTerm {
    pub kind: CostKind,
    pub weight: f64,
    pub penalty: Penalty,
    pub residual: Arc<dyn Residual>,
    /// Hinge rows with `-band < r ≤ 0` still contribute their Gauss-Newton
    /// curvature (not their gradient), so steps toward the boundary are not
    /// predicted to be free.
    pub band: f64,
}

impl std::fmt::Debug for CostTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostTerm")
            .field("kind", &self.kind)
            .field("weight", &self.weight)
            .field("penalty", &self.penalty)
            .field("dim", &self.residual.dim())
            .finish()
    }
}

impl CostTerm {
    pub fn quadratic(kind: CostKind, weight: f64, residual: impl Residual + 'static) -> Self {
        Self { kind, weight, penalty: Penalty::Quadratic, residual: Arc::new(residual), band: 0.0 }
    }

    pub fn hinge(kind: CostKind, weight: f64, residual: impl Residual + 'static) -> Self {
        Self { kind, weight, penalty: Penalty::Hinge, residual: Arc::new(residual), band: 0.0 }
    }

    pub fn with_band(mut self, band: f64) -> Self {
        self.band = band;
        self
    }

    fn shaped(&self, r: &DVector<f64>) -> DVector<f64> {
        match self.penalty {
            Penalty::Quadratic => r.clone(),
            Penalty::Hinge => r.map(|v| v.max(0.0)),
        }
    }

    pub fn value(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, aux: &DVector<f64>) -> f64 {
        if self.weight == 0.0 {
            return 0.0;
        }
        let e = self.shaped(&self.residual.value(k, x, u, aux));
        0.5 * self.weight * e.norm_squared()
    }
}

/// Quadratic model of a stage cost: value, gradients and Gauss-Newton Hessians.
#[derive(Clone, Debug)]
pub struct CostExpansion {
    pub l: f64,
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    pub lux: DMatrix<f64>,
}

impl CostExpansion {
    pub fn zeros(nx: usize, nu: usize) -> Self {
        Self {
            l: 0.0,
            lx: DVector::zeros(nx),
            lu: DVector::zeros(nu),
            lxx: DMatrix::zeros(nx, nx),
            luu: DMatrix::zeros(nu, nu),
            lux: DMatrix::zeros(nu, nx),
        }
    }
}

/// Sum of the terms' costs.
pub fn cost_value(terms: &[CostTerm], k: usize, x: &DVector<f64>, u: &DVector<f64>, aux: &DVector<f64>) -> f64 {
    terms.iter().map(|t| t.value(k, x, u, aux)).sum()
}

/// Cost, exact gradients and Gauss-Newton Hessians of a sum of terms. The
/// auxiliary output enters through its Jacobians `ax`, `au` (chain rule).
pub fn stage_cost(
    terms: &[CostTerm],
    k: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
    aux: &DVector<f64>,
    ax: Option<&DMatrix<f64>>,
    au: Option<&DMatrix<f64>>,
) -> CostExpansion {
    let (nx, nu) = (x.len(), u.len());
    let mut out = CostExpansion::zeros(nx, nu);
    for t in terms {
        if t.weight == 0.0 {
            continue;
        }
        let ev = t.residual.eval(k, x, u, aux);
        let mut jx = ev.rx;
        let mut ju = ev.ru;
        if let Some(raux) = &ev.raux {
            if let (Some(ax), Some(au)) = (ax, au) {
                jx += raux * ax;
                ju += raux * au;
            }
        }
        let e = t.shaped(&ev.r);
        if t.penalty == Penalty::Hinge {
            for (i, &v) in ev.r.iter().enumerate() {
                if v <= -t.band || (t.band == 0.0 && v <= 0.0) {
                    jx.row_mut(i).fill(0.0);
                    ju.row_mut(i).fill(0.0);
                }
            }
        }
        let w = t.weight;
        out.l += 0.5 * w * e.norm_squared();
        // Rows inside the band have e = 0 and add no gradient.
        out.lx += jx.tr_mul(&e) * w;
        out.lu += ju.tr_mul(&e) * w;
        out.lxx += jx.tr_mul(&jx) * w;
        out.luu += ju.tr_mul(&ju) * w;
        out.lux += ju.tr_mul(&jx) * w;
    }
    out
}

/// Setpoint or per-node reference.
#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    Constant(DVector<f64>),
    /// Indexed by node; nodes past the end reuse the last entry.
    Trajectory(Vec<DVector<f64>>),
}

impl Reference {
    pub fn at(&self, k: usize) -> &DVector<f64> {
        match self {
            Reference::Constant(v) => v,
            Reference::Trajectory(vs) => &vs[k.min(vs.len() - 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.at(0).len()
    }
}

/// `r = x[indices] - ref_k`.
#[derive(Clone, Debug)]
pub struct StateResidual {
    pub indices: Vec<usize>,
    pub reference: Reference,
    pub nu: usize,
    pub nx: usize,
}

impl StateResidual {
    pub fn new(nx: usize, nu: usize, indices: Vec<usize>, reference: Reference) -> Self {
        assert_eq!(indices.len(), reference.dim(), "reference dimension");
        Self { indices, reference, nu, nx }
    }
}

impl Residual for StateResidual {
    fn dim(&self) -> usize {
        self.indices.len()
    }
    fn eval(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, aux: &DVector<f64>) -> ResidualEval {
        let m = self.indices.len();
        let mut rx = DMatrix::zeros(m, x.len());
        for (i, &j) in self.indices.iter().enumerate() {
            rx[(i, j)] = 1.0;
        }
        ResidualEval { r: self.value(k, x, u, aux), rx, ru: DMatrix::zeros(m, u.len()), raux: None }
    }
    fn value(&self, k: usize, x: &DVector<f64>, _u: &DVector<f64>, _aux: &DVector<f64>) -> DVector<f64> {
        let r = self.reference.at(k);
        DVector::from_iterator(self.indices.len(), self.indices.iter().zip(r.iter()).map(|(&j, rv)| x[j] - rv))
    }
}

/// `r = u - ref_k`.
#[derive(Clone, Debug)]
pub struct ControlResidual {
    pub reference: Reference,
}

impl Residual for ControlResidual {
    fn dim(&self) -> usize {
        self.reference.dim()
    }
    fn eval(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, aux: &DVector<f64>) -> ResidualEval {
        let n = u.len();
        ResidualEval {
            r: self.value(k, x, u, aux),
            rx: DMatrix::zeros(n, x.len()),
            ru: DMatrix::identity(n, n),
            raux: None,
        }
    }
    fn value(&self, k: usize, _x: &DVector<f64>, u: &DVector<f64>, _aux: &DVector<f64>) -> DVector<f64> {
        u - self.reference.at(k)
    }
}

/// Stacked cone residuals `A_i w_i - b_i` of the wrenches found in the
/// auxiliary output at the given offsets (6 entries each). Use with
/// [`Penalty::Hinge`].
#[derive(Clone, Debug)]
pub struct ConeResidual {
    pub cones: Vec<(usize, WrenchCone)>,
}

impl Residual for ConeResidual {
    fn dim(&self) -> usize {
        self.cones.iter().map(|(_, c)| c.rows()).sum()
    }
    fn eval(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, aux: &DVector<f64>) -> ResidualEval {
        let m = self.dim();
        let mut raux = DMatrix::zeros(m, aux.len());
        let mut row = 0;
        for (off, cone) in &self.cones {
            if aux.len() >= off + 6 {
                raux.view_mut((row, *off), (cone.rows(), 6)).copy_from(&cone.a);
            }
            row += cone.rows();
        }
        ResidualEval {
            r: self.value(k, x, u, aux),
            rx: DMatrix::zeros(m, x.len()),
            ru: DMatrix::zeros(m, u.len()),
            raux: Some(raux),
        }
    }
    fn value(&self, _k: usize, _x: &DVector<f64>, _u: &DVector<f64>, aux: &DVector<f64>) -> DVector<f64> {
        let mut r = DVector::zeros(self.dim());
        let mut row = 0;
        for (off, cone) in &self.cones {
            let mut seg = -cone.b.clone();
            if aux.len() >= off + 6 {
                seg.gemv(1.0, &cone.a, &aux.rows(*off, 6), 1.0);
            }
            r.rows_mut(row, cone.rows()).copy_from(&seg);
            row += cone.rows();
        }
        r
    }
}
