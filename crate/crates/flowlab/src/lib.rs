//! Numerical laboratory for connection Ricci flow and Ricci harmonic flow
//! on symmetry-reduced geometries: a homogeneous flat torus and
//! rotationally symmetric spheres.

pub mod config;
pub mod entropy;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod linalg;
pub mod presets;
pub mod run;
pub mod serde_ext;
pub mod singularity;
pub mod verification;

pub use error::{FlowError, Result};
