use nalgebra::{DMatrix, DVector, SVector};
use serde::{Deserialize, Serialize};

use super::ContactError;

/// Local contact wrench `[f_x, f_y, f_z, τ_x, τ_y, τ_z]` (x tangent, y lateral, z normal).
pub type ContactWrench = SVector<f64, 6>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactKind {
    /// Friction pyramid only.
    Point,
    /// Friction pyramid with lateral and normal moment bounds; the rolling
    /// moment about `y` is free.
    WheelLine,
    /// Friction pyramid with all three moments bounded.
    Full,
}

/// Per-axis moment interval `[min, max]` in N·m for `x`, `y`, `z`.
pub type TorqueBounds = [[f64; 2]; 3];

fn default_bounds() -> TorqueBounds {
    [[-1.0, 1.0]; 3]
}

fn default_active() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSpec {
    pub frame: String,
    pub kind: ContactKind,
    pub mu: f64,
    #[serde(default = "default_bounds")]
    pub torque_bounds: TorqueBounds,
    /// Wheel radius when the frame is a wheel centre rolling on the ground.
    #[serde(default)]
    pub rolling_radius: Option<f64>,
    #[serde(default = "default_active")]
    pub active: bool,
}

impl ContactSpec {
    pub fn new(frame: impl Into<String>, kind: ContactKind, mu: f64) -> Self {
        Self {
            frame: frame.into(),
            kind,
            mu,
            torque_bounds: default_bounds(),
            rolling_radius: None,
            active: true,
        }
    }

    pub fn with_torque_bounds(mut self, bounds: TorqueBounds) -> Self {
        self.torque_bounds = bounds;
        self
    }

    pub fn rolling(mut self, radius: f64) -> Self {
        self.rolling_radius = Some(radius);
        self
    }

    pub fn validate(&self) -> Result<(), ContactError> {
        let bad = |why: String| Err(ContactError::InvalidSpec { frame: self.frame.clone(), why });
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("friction coefficient must be positive, got {}", self.mu));
        }
        let constrained: &[usize] = match self.kind {
            ContactKind::Point => &[],
            ContactKind::WheelLine => &[0, 2],
            ContactKind::Full => &[0, 1, 2],
        };
        for &axis in constrained {
            let [lo, hi] = self.torque_bounds[axis];
            if !(lo <= hi) {
                return bad(format!("torque bounds on axis {axis} are inverted: [{lo}, {hi}]"));
            }
        }
        if let Some(r) = self.rolling_radius {
            if !(r > 0.0) {
                return bad(format!("rolling radius must be positive, got {r}"));
            }
        }
        Ok(())
    }
}

/// H-representation `A w <= b` of a linearized contact-wrench cone.
#[derive(Clone, Debug, PartialEq)]
pub struct WrenchCone {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl WrenchCone {
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn contains(&self, w: &ContactWrench, tol: f64) -> bool {
        cone_residual(self, w).iter().all(|&r| r <= tol)
    }
}

/// Builds the cone for a contact. Friction rows encode `|f_x| <= μ f_z` and
/// `|f_y| <= μ f_z`; torque rows encode `τ_min <= τ <= τ_max`; every kind
/// ends with the unilateral row `-f_z <= 0`.
pub fn build_cone(spec: &ContactSpec) -> Result<WrenchCone, ContactError> {
    spec.validate()?;
    let mu = spec.mu;
    let mut rows: Vec<[f64; 6]> = vec![
        [1.0, 0.0, -mu, 0.0, 0.0, 0.0],
        [-1.0, 0.0, -mu, 0.0, 0.0, 0.0],
        [0.0, 1.0, -mu, 0.0, 0.0, 0.0],
        [0.0, -1.0, -mu, 0.0, 0.0, 0.0],
    ];
    let mut b = vec![0.0; 4];
    if spec.kind != ContactKind::Point {
        for axis in 0..3 {
            let [lo, hi] = spec.torque_bounds[axis];
            let mut up = [0.0; 6];
            let mut down = [0.0; 6];
            // Rolling moment rows stay in the template but are zeroed.
            if !(spec.kind == ContactKind::WheelLine && axis == 1) {
                up[3 + axis] = 1.0;
                down[3 + axis] = -1.0;
                b.push(hi);
                b.push(-lo);
            } else {
                b.push(0.0);
                b.push(0.0);
            }
            rows.push(up);
            rows.push(down);
        }
    }
    rows.push([0.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
    b.push(0.0);
    let a = DMatrix::from_fn(rows.len(), 6, |i, j| rows[i][j]);
    Ok(WrenchCone { a, b: DVector::from_vec(b) })
}

/// `r = A w - b`.
pub fn cone_residual(cone: &WrenchCone, w: &ContactWrench) -> DVector<f64> {
    let mut r = -cone.b.clone();
    r.gemv(1.0, &cone.a, &DVector::from_column_slice(w.as_slice()), 1.0);
    r
}

/// Squared hinge penalty `½ Σ max(0, r_i)²` and its gradient `max(0, r)`.
pub fn cone_penalty(r: &DVector<f64>) -> (f64, DVector<f64>) {
    let g = r.map(|x| x.max(0.0));
    (0.5 * g.norm_squared(), g)
}
