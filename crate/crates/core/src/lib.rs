//! Desk-scale Gaussian splatting for driving scenes with out-of-path supervision:
//! inverse view warping, LiDAR depth bootstrapping, box-constrained dynamic
//! objects, a staged trainer and a procedural benchmark generator.

pub mod bootstrap;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod fid;
pub mod formats;
pub mod ivw;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod render;
pub mod scene;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
