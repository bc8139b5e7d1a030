//! Single-view 3D hair reconstruction through a volumetric orientation field.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod formats;
pub mod gan;
pub mod maps;
pub mod mspace;
pub mod orient2d;
pub mod pairs;
pub mod rasterize;
pub mod strands;
pub mod synth;

pub use error::{HairError, Result};
pub use mspace::{ModelSpace, Vec3};
