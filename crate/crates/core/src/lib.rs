//! Whole-body motion control for wheel-legged mobile manipulators.
//!
//! The crate is organised bottom-up:
//!
//! - [`rbd`]: planar rigid-body trees and their dynamics terms,
//! - [`contact`]: wrench cones, penalties, contact-constrained dynamics and ZMP,
//! - [`swerve`]: four-wheel independent steering kinematics,
//! - [`ocp`]: a regularized DDP solver with warm starting,
//! - [`control`]: mode switching, receding-horizon control and the linear feedback controller,
//! - [`sim`]: the deterministic simulator, scenarios and logs.

pub mod contact;
pub mod control;
pub mod ocp;
pub mod rbd;
pub mod sim;
pub mod swerve;
