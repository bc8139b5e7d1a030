//! Evaluation metrics: mask overlap, π-periodic orientation difference with
//! a difference map, and per-voxel volume agreement.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{HairError, Result};
use crate::maps::{Map2D, OrientVolume};
use crate::mspace::{decode_component, is_occupied, ModelSpace, Vec3};
use crate::rasterize::{hair_mask, render_with_hints};
use crate::strands::HairModel;

/// `|A ∩ B| / |A ∪ B|`, or 1 when both are empty.
pub fn mask_iou(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(HairError::Shape(format!("mask sizes {} and {} differ", a.len(), b.len())));
    }
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Undirected angle between two orientations in radians, in `[0, π/2]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Pixels above one half.
pub fn mask_bits(m: &Map2D) -> Vec<bool> {
    m.plane(0).iter().map(|&v| v > 0.5).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrientationDiff {
    /// Mean difference in degrees over the compared pixels.
    pub mean_deg: f64,
    pub pixels: usize,
    /// Difference per pixel scaled to `[0, 1]` (1 = 90°), zero elsewhere.
    pub map: Map2D,
}

/// Compares two orientation maps (angles in radians, any period of π) on
/// the pixels where `on` holds.
pub fn orientation_difference(
    width: usize,
    height: usize,
    a: &[f64],
    b: &[f64],
    on: &[bool],
) -> Result<OrientationDiff> {
    let n = width * height;
    if a.len() != n || b.len() != n || on.len() != n {
        return Err(HairError::Shape("orientation maps and mask differ in size".into()));
    }
    let mut map = vec![0.0; n];
    let mut total = 0.0;
    let mut pixels = 0;
    for i in 0..n {
        if on[i] {
            let d = angle_diff(a[i], b[i]);
            map[i] = d / (PI / 2.0);
            total += d;
            pixels += 1;
        }
    }
    let mean_deg = if pixels == 0 { 0.0 } else { (total / pixels as f64).to_degrees() };
    Ok(OrientationDiff {
        mean_deg,
        pixels,
        map: Map2D::from_plane(width, height, map)?,
    })
}

/// Occupancy IoU and mean angle between decoded directions on co-occupied voxels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeMetrics {
    pub occupancy_iou: f64,
    pub mean_angle_deg: f64,
    pub co_occupied: usize,
}

pub fn volume_metrics(result: &OrientVolume, truth: &OrientVolume) -> Result<VolumeMetrics> {
    if result.dims() != truth.dims() {
        return Err(HairError::Shape(format!(
            "volume extents {:?} and {:?} differ",
            result.dims(),
            truth.dims()
        )));
    }
    let occ = |v: &OrientVolume| -> Vec<bool> {
        v.raw()
            .iter()
            .map(|c| is_occupied(&c.map(decode_component).into()))
            .collect()
    };
    let (a, b) = (occ(result), occ(truth));
    let occupancy_iou = mask_iou(&a, &b)?;
    let mut total = 0.0;
    let mut co = 0;
    for (i, (ca, cb)) in result.raw().iter().zip(truth.raw()).enumerate() {
        if a[i] && b[i] {
            let da = Vec3::from(ca.map(decode_component)).normalize();
            let db = Vec3::from(cb.map(decode_component)).normalize();
            total += da.dot(&db).clamp(-1.0, 1.0).acos();
            co += 1;
        }
    }
    Ok(VolumeMetrics {
        occupancy_iou,
        mean_angle_deg: if co == 0 { 0.0 } else { (total / co as f64).to_degrees() },
        co_occupied: co,
    })
}

/// Everything reported for a strand model against reference maps.
#[derive(Clone, Debug)]
pub struct ModelReport {
    pub mask_iou: f64,
    pub orientation: OrientationDiff,
}

/// Projects `m` and compares its mask with `ref_mask` and its projected
/// strand orientation with `ref_theta` on the mask intersection.
pub fn evaluate_model(
    m: &HairModel,
    ms: &ModelSpace,
    ref_mask: &Map2D,
    ref_theta: &[f64],
) -> Result<ModelReport> {
    let n = ms.img_res;
    if ref_mask.width != n || ref_mask.height != n {
        return Err(HairError::Shape(format!(
            "reference mask {}x{} does not match image resolution {n}",
            ref_mask.width, ref_mask.height
        )));
    }
    let mine = mask_bits(&hair_mask(m, ms));
    let theirs = mask_bits(ref_mask);
    let (_, hints) = render_with_hints(m, ms, 0);
    let theta: Vec<f64> = (0..n * n)
        .map(|i| {
            let x = decode_component(hints.raw()[2 * i]);
            let y = decode_component(hints.raw()[2 * i + 1]);
            y.atan2(x).rem_euclid(PI)
        })
        .collect();
    let has_hint: Vec<bool> = (0..n * n)
        .map(|i| hints.raw()[2 * i] != 0.5 || hints.raw()[2 * i + 1] != 0.5)
        .collect();
    let on: Vec<bool> = (0..n * n).map(|i| mine[i] && theirs[i] && has_hint[i]).collect();
    Ok(ModelReport {
        mask_iou: mask_iou(&mine, &theirs)?,
        orientation: orientation_difference(n, n, &theta, ref_theta, &on)?,
    })
}
