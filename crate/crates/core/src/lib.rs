//! Hybrid pose and velocity-bias observers on SE(3).
//!
//! The crate is layered bottom-up: [`linalg`] and [`se3`] hold the group
//! algebra, [`measurement`] builds scenes and synthesizes outputs,
//! [`potential`] provides the trace potential and the jump set,
//! [`observers`] the four estimation laws, and [`sim`] the hybrid executor
//! with its Lyapunov monitors.

pub mod audit;
pub mod error;
pub mod linalg;
pub mod measurement;
pub mod observers;
pub mod potential;
pub mod sampling;
pub mod se3;
pub mod sim;

pub use error::{Error, Result};
pub use linalg::{Mat3, Mat4, Mat6, Vec3, Vec4, Vec6};
pub use se3::{HomVec4, Pose, Rotation};
