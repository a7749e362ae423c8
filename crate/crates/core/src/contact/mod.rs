//! Contact-wrench cones and their penalty, contact-constrained forward
//! dynamics, static equilibrium residuals and the zero-moment point.

mod cone;
mod ground;
mod kkt;
mod zmp;

pub use cone::{build_cone, cone_penalty, cone_residual, ContactKind, ContactSpec, ContactWrench, TorqueBounds, WrenchCone};
pub use ground::{FlatGround, Ground};
pub use kkt::{
    constraint_rows, contact_jacobian, contact_points, fd_constrained, newton_euler_residual, planar_to_wrench,
    ConstrainedAccel, ContactPoint, ContactSystem,
};
pub use zmp::{convex_hull, in_support, zmp};

use thiserror::Error;

use crate::rbd::RbdError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("invalid contact `{frame}`: {why}")]
    InvalidSpec { frame: String, why: String },
    #[error("contact Jacobian is rank deficient for contacts {contacts:?}")]
    RankDeficient { contacts: Vec<String> },
    #[error("contact KKT system is singular for contacts {contacts:?}")]
    SingularKkt { contacts: Vec<String> },
    #[error("no net normal force ({normal_force} N); the ZMP is undefined")]
    DegenerateZmp { normal_force: f64 },
    #[error(transparent)]
    Rbd(#[from] RbdError),
}
