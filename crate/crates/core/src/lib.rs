//! Posed, shaped, camera-placed parametric human bodies from keypoints,
//! twist angles and clothing landmarks.

pub mod body;
pub mod camera;
pub mod error;
pub mod evolution;
pub mod formats;
pub mod ik;
pub mod kinematics;
pub mod metrics;
pub mod rotation;
pub mod seed;
pub mod shape;

pub use error::{Error, Result};
