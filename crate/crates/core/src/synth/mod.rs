//! From a predicted orientation volume to strands: occupancy surface, mesh
//! and field smoothing, image-guided refinement, tracing and deformation.

mod deform;
mod field;
mod surface;
mod tables;
mod trace;

use serde::{Deserialize, Serialize};

pub use deform::{deform_strands, MAX_ROTATION_DEG, MIN_CONFIDENCE};
pub use field::{
    apply_constraints, lift, smooth_field, warp_image_orientation, SurfaceConstraint, SURFACE_REACH,
    TANGENT_BAND,
};
pub use surface::{
    extract_surface, occupancy_field, smooth_mesh, OccupancyGrid, RoughShape, TAUBIN_LAMBDA, TAUBIN_MU,
};
pub use trace::{trace_strand, trace_strands, DirectionField, TraceParams, VolumeField, BLEND_STEPS, MIN_POINTS};

use crate::error::{HairError, Result};
use crate::maps::OrientVolume;
use crate::mspace::OCCUPANCY_THRESHOLD;
use crate::orient2d::OrientationField2D;
use crate::strands::{BustModel, HairModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Occupancy level of the rough shape surface.
    pub iso: f64,
    /// Taubin smoothing iterations.
    pub smooth_iters: usize,
    /// Tracing step in voxel edges.
    pub step: f64,
    /// Maximum strand arc length in model units.
    pub max_length: f64,
    /// Field magnitude below which tracing stops.
    pub min_magnitude: f64,
    /// Scalp samples drawn before the inside test.
    pub n_seeds: usize,
    /// Strength of the image-guided deformation in `[0, 1]`.
    pub deform_weight: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            iso: 0.5,
            smooth_iters: 20,
            step: 0.5,
            max_length: 1.0,
            min_magnitude: OCCUPANCY_THRESHOLD,
            n_seeds: 2000,
            deform_weight: 0.5,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HairError::InvalidArgument(m));
        if !(self.iso > 0.0 && self.iso < 1.0) {
            return bad(format!("iso level {} outside (0, 1)", self.iso));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad(format!("trace step {} must be positive", self.step));
        }
        if !(self.max_length > 0.0 && self.max_length.is_finite()) {
            return bad(format!("max strand length {} must be positive", self.max_length));
        }
        if !(self.min_magnitude >= 0.0) {
            return bad(format!("min magnitude {} must be non-negative", self.min_magnitude));
        }
        if !(0.0..=1.0).contains(&self.deform_weight) {
            return bad(format!("deformation weight {} outside [0, 1]", self.deform_weight));
        }
        Ok(())
    }
}

/// Everything the pipeline produces.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub shape: RoughShape,
    /// The volume after field smoothing and image constraints.
    pub volume: OrientVolume,
    pub model: HairModel,
}

/// Runs the full pipeline. With an image orientation map the surface field
/// is refined and the traced strands are deformed toward it.
pub fn synthesize(
    v: &OrientVolume,
    bust: &BustModel,
    image: Option<&OrientationField2D>,
    p: &SynthParams,
) -> Result<Synthesis> {
    p.validate()?;
    let occ = occupancy_field(v);
    let shape = extract_surface(&occ, p.iso, &v.ms)?;
    let shape = smooth_mesh(&shape, p.smooth_iters, TAUBIN_LAMBDA, TAUBIN_MU);
    let mut volume = smooth_field(v, &shape)?;
    if let Some(f) = image {
        let c = warp_image_orientation(f, &shape, &v.ms)?;
        volume = apply_constraints(&volume, &c)?;
    }
    let mut model = trace_strands(&volume, &shape, bust, p)?;
    if let Some(f) = image {
        model = deform_strands(&model, f, &v.ms, p.deform_weight)?;
    }
    Ok(Synthesis { shape, volume, model })
}
