//! spicorr: probabilistic 3D correspondence prediction from sparse images.
//!
//! The crate is organized around one data flow: `synth` manufactures
//! cohorts of meshes and images, `teacher` learns a correspondence model
//! from surfaces, `student` predicts distributions over the same
//! correspondences from images, `train` runs the three-phase schedule, and
//! `eval` scores the results. `geometry` holds the exact kernels everything
//! else is measured against.

pub mod cli;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod io;
pub mod nn;
pub mod plot;
pub mod student;
pub mod train;
pub mod synth;
pub mod teacher;

pub use error::{Error, Result};
