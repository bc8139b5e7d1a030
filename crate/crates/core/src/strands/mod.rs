//! Polyline hair strands, the bust they grow from, and rigid augmentation.

mod bust;
mod generate;

use std::collections::BTreeMap;

use nalgebra::Rotation3;

pub use bust::{BustModel, HeadShape};
pub use generate::{gen_hairstyle, StyleParams};

use crate::error::{HairError, Result};
use crate::mspace::{Vec3, FULL_VOXEL_EDGE};

/// Longest allowed segment: twice the full-resolution voxel edge.
pub const MAX_SEGMENT: f64 = 2.0 * FULL_VOXEL_EDGE;

/// Ordered points, root first.
#[derive(Clone, Debug, PartialEq)]
pub struct Strand {
    points: Vec<Vec3>,
}

impl Strand {
    /// Drops repeated points and subdivides segments longer than [`MAX_SEGMENT`].
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        let mut out: Vec<Vec3> = Vec::with_capacity(points.len());
        for p in points {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(HairError::InvalidInput(format!("non-finite strand point {p:?}")));
            }
            match out.last() {
                Some(&q) if q == p => continue,
                Some(&q) => {
                    let len = (p - q).norm();
                    let pieces = (len / MAX_SEGMENT).ceil() as usize;
                    for s in 1..pieces {
                        out.push(q + (p - q) * (s as f64 / pieces as f64));
                    }
                    out.push(p);
                }
                None => out.push(p),
            }
        }
        if out.len() < 2 {
            return Err(HairError::InvalidInput(
                "a strand needs at least two distinct points".into(),
            ));
        }
        Ok(Self { points: out })
    }

    /// Wraps points without resampling. Callers guarantee the invariants.
    pub(crate) fn from_raw(points: Vec<Vec3>) -> Self {
        debug_assert!(points.len() >= 2);
        Self { points }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn root(&self) -> Vec3 {
        self.points[0]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec3, Vec3)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn arc_length(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).sum()
    }

    fn map_points(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HairModel {
    pub strands: Vec<Strand>,
    pub style_meta: BTreeMap<String, String>,
}

impl HairModel {
    pub fn new(strands: Vec<Strand>) -> Self {
        Self {
            strands,
            style_meta: BTreeMap::new(),
        }
    }

    pub fn point_count(&self) -> usize {
        self.strands.iter().map(Strand::len).sum()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.strands.iter().flat_map(|s| s.points.iter());
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    fn map_points(&self, f: impl Fn(&Vec3) -> Vec3 + Copy) -> Self {
        Self {
            strands: self.strands.iter().map(|s| s.map_points(f)).collect(),
            style_meta: self.style_meta.clone(),
        }
    }
}

/// Rotation matrix for Euler angles in degrees, applied X, then Y, then Z.
pub fn euler_rotation(euler_deg: [f64; 3]) -> Rotation3<f64> {
    let [rx, ry, rz] = euler_deg.map(f64::to_radians);
    Rotation3::from_axis_angle(&Vec3::z_axis(), rz)
        * Rotation3::from_axis_angle(&Vec3::y_axis(), ry)
        * Rotation3::from_axis_angle(&Vec3::x_axis(), rx)
}

/// Rigid rotation about the box centre (the origin).
pub fn rotate_model(m: &HairModel, euler_deg: [f64; 3]) -> HairModel {
    if euler_deg == [0.0; 3] {
        return m.clone();
    }
    let r = euler_rotation(euler_deg);
    m.map_points(|p| r * p)
}

/// Mirror across the sagittal plane `x = 0`.
pub fn flip_model(m: &HairModel) -> HairModel {
    m.map_points(|p| Vec3::new(-p.x, p.y, p.z))
}

/// Euler angles whose rotation is the mirror image of `euler_deg`'s:
/// `M·R(rx, ry, rz)·M = R(rx, −ry, −rz)` for `M = diag(−1, 1, 1)`.
pub fn mirror_euler(euler_deg: [f64; 3]) -> [f64; 3] {
    [euler_deg[0], -euler_deg[1], -euler_deg[2]]
}
