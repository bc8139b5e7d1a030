//! Orientation-field cleanup against the rough shape: tangent projection near
//! the surface, neighbourhood averaging, and image-guided surface constraints.

use std::collections::HashMap;

use super::surface::RoughShape;
use crate::error::{HairError, Result};
use crate::maps::OrientVolume;
use crate::mspace::{ModelSpace, Vec3};
use crate::orient2d::OrientationField2D;

/// Width of the tangent band around the surface, in voxel edges.
pub const TANGENT_BAND: f64 = 2.0;
/// Reach of a surface voxel for image constraints, in voxel edges.
pub const SURFACE_REACH: f64 = 1.0;

/// Surface vertices bucketed by the voxel that contains them.
struct VertexBuckets<'a> {
    shape: &'a RoughShape,
    normals: Vec<Vec3>,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> VertexBuckets<'a> {
    fn new(shape: &'a RoughShape) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in shape.vertices.iter().enumerate() {
            cells.entry(cell(&shape.ms, p)).or_default().push(i);
        }
        Self {
            shape,
            normals: shape.vertex_normals(),
            cells,
        }
    }

    /// Nearest vertex within `reach` voxel edges: `(distance, normal)`.
    fn nearest(&self, p: &Vec3, reach: f64) -> Option<(f64, Vec3)> {
        let c = cell(&self.shape.ms, p);
        let r = reach.ceil() as i64 + 1;
        let limit = reach * self.shape.ms.voxel_edge();
        let mut best: Option<(f64, usize)> = None;
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &i in ids {
                        let d = (self.shape.vertices[i] - p).norm();
                        if d <= limit && best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                            best = Some((d, i));
                        }
                    }
                }
            }
        }
        best.map(|(d, i)| (d, self.normals[i]))
    }
}

fn cell(ms: &ModelSpace, p: &Vec3) -> [i64; 3] {
    let g = (p - ms.box_min()) / ms.voxel_edge();
    [g.x.floor() as i64, g.y.floor() as i64, g.z.floor() as i64]
}

fn voxel_indices(dims: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    (0..dims[2]).flat_map(move |z| (0..dims[1]).flat_map(move |y| (0..dims[0]).map(move |x| [x, y, z])))
}

fn check_space(v: &OrientVolume, shape: &RoughShape) -> Result<()> {
    if v.ms != shape.ms {
        return Err(HairError::Shape("volume and rough shape use different model spaces".into()));
    }
    Ok(())
}

/// Projects occupied directions within [`TANGENT_BAND`] of the surface onto
/// the local tangent plane, then averages every occupied voxel's direction
/// over its occupied 3³ neighbourhood. Magnitudes are kept.
pub fn smooth_field(v: &OrientVolume, shape: &RoughShape) -> Result<OrientVolume> {
    check_space(v, shape)?;
    let buckets = VertexBuckets::new(shape);
    let dims = v.dims();
    let occupied = |d: &Vec3| d.norm() >= shape.iso;
    let mut dirs: Vec<Vec3> = voxel_indices(dims).map(|i| v.dir(i)).collect();
    for idx in voxel_indices(dims) {
        let k = v.index(idx);
        let d = dirs[k];
        if !occupied(&d) {
            continue;
        }
        let Some((_, n)) = buckets.nearest(&v.ms.voxel_center(idx), TANGENT_BAND) else {
            continue;
        };
        dirs[k] = tangent_part(&d, &n) * d.norm();
    }
    let mut out = v.clone();
    for idx in voxel_indices(dims) {
        let k = v.index(idx);
        let d = dirs[k];
        if !occupied(&d) {
            continue;
        }
        let mut acc = Vec3::zeros();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let j = [idx[0] as i64 + dx, idx[1] as i64 + dy, idx[2] as i64 + dz];
                    if (0..3).any(|a| j[a] < 0 || j[a] >= dims[a] as i64) {
                        continue;
                    }
                    let e = dirs[v.index(j.map(|x| x as usize))];
                    if occupied(&e) {
                        acc += e / e.norm();
                    }
                }
            }
        }
        let l = acc.norm();
        let nd = if l > 1e-9 { acc * (d.norm() / l) } else { d };
        out.set_dir(idx, &nd)?;
    }
    Ok(out)
}

/// Unit direction of `d − (d·n)n`. When `d` is parallel to `n` any fixed
/// tangent is returned.
fn tangent_part(d: &Vec3, n: &Vec3) -> Vec3 {
    let t = d - n * d.dot(n);
    let l = t.norm();
    if l > 1e-6 * d.norm() {
        return t / l;
    }
    let axis = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    n.cross(&axis).normalize()
}

/// One image-derived direction for a surface voxel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceConstraint {
    pub voxel: [usize; 3],
    /// Unit tangent whose image projection follows the 2D direction.
    pub dir: Vec3,
    /// Orientation confidence of the pixel it came from.
    pub weight: f64,
}

/// Lifts the 2D directed field onto front-facing surface voxels (normal
/// towards the camera at `+z`). Each occupied voxel within
/// [`SURFACE_REACH`] of the surface takes the pixel under its centre.
pub fn warp_image_orientation(
    f: &OrientationField2D,
    shape: &RoughShape,
    ms: &ModelSpace,
) -> Result<Vec<SurfaceConstraint>> {
    if f.width != ms.img_res || f.height != ms.img_res {
        return Err(HairError::InvalidArgument(format!(
            "orientation map {}x{} does not match image resolution {}",
            f.width, f.height, ms.img_res
        )));
    }
    if shape.ms != *ms {
        return Err(HairError::Shape("rough shape uses a different model space".into()));
    }
    let buckets = VertexBuckets::new(shape);
    let mut out = Vec::new();
    for idx in voxel_indices(ms.vol_res) {
        if shape.occ.get(idx) < shape.iso {
            continue;
        }
        let c = ms.voxel_center(idx);
        let Some((_, n)) = buckets.nearest(&c, SURFACE_REACH) else {
            continue;
        };
        if n.z <= 0.0 {
            continue;
        }
        let (u, w) = ms.project_to_image(&c);
        if u < 0.0 || w < 0.0 {
            continue;
        }
        let (col, row) = (u.floor() as usize, w.floor() as usize);
        if col >= f.width || row >= f.height {
            continue;
        }
        let i = row * f.width + col;
        if !f.mask[i] || f.conf[i] <= 0.0 {
            continue;
        }
        let Some(dir) = lift(f.directed[i], &n) else {
            continue;
        };
        out.push(SurfaceConstraint {
            voxel: idx,
            dir,
            weight: f.conf[i],
        });
    }
    Ok(out)
}

/// The unit tangent to the plane with normal `n` whose `xy` part is parallel
/// to `d2`.
pub fn lift(d2: [f64; 2], n: &Vec3) -> Option<Vec3> {
    if n.z.abs() < 1e-9 || (d2[0] == 0.0 && d2[1] == 0.0) {
        return None;
    }
    let tz = -(n.x * d2[0] + n.y * d2[1]) / n.z;
    let t = Vec3::new(d2[0], d2[1], tz);
    Some(t / t.norm())
}

/// Blends each constraint into the volume: `normalize((1−w)·d + w·t)`,
/// keeping the voxel's magnitude.
pub fn apply_constraints(v: &OrientVolume, constraints: &[SurfaceConstraint]) -> Result<OrientVolume> {
    let mut out = v.clone();
    for c in constraints {
        if c.weight <= 0.0 {
            continue;
        }
        let w = c.weight.min(1.0);
        let d = v.dir(c.voxel);
        let mag = d.norm();
        if mag == 0.0 {
            continue;
        }
        let b = d * ((1.0 - w) / mag) + c.dir * w;
        let l = b.norm();
        if l > 1e-9 {
            out.set_dir(c.voxel, &(b * (mag / l)))?;
        }
    }
    Ok(out)
}
