//! Unified model space: the hair bounding box, its voxel grid, and the
//! orthographic front camera. Also the colour encoding of directions.
//!
//! The box is centred at the origin: `x, y ∈ [−H/2, H/2]`, `z ∈ [−Dz/2, Dz/2]`,
//! with `+y` up and the camera on the `+z` side looking along `−z`.

use nalgebra::Vector3;

use crate::error::{HairError, Result};

pub type Vec3 = Vector3<f64>;

/// Full-resolution grid extents.
pub const FULL_VOL_RES: [usize; 3] = [128, 128, 96];
pub const FULL_IMG_RES: usize = 1024;
/// Edge of a full-resolution voxel with `H = 1`; strands are resampled against it.
pub const FULL_VOXEL_EDGE: f64 = 1.0 / 128.0;
/// `|decode(c)|` at or above this marks an occupied voxel.
pub const OCCUPANCY_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpace {
    /// Box width and height.
    pub h: f64,
    /// Box depth.
    pub dz: f64,
    pub vol_res: [usize; 3],
    pub img_res: usize,
}

impl Default for ModelSpace {
    fn default() -> Self {
        Self {
            h: 1.0,
            dz: 0.75,
            vol_res: FULL_VOL_RES,
            img_res: FULL_IMG_RES,
        }
    }
}

impl ModelSpace {
    pub fn new(h: f64, dz: f64, vol_res: [usize; 3], img_res: usize) -> Result<Self> {
        let ms = Self {
            h,
            dz,
            vol_res,
            img_res,
        };
        ms.validate()?;
        Ok(ms)
    }

    /// The default space with every resolution divided by `k`.
    pub fn scaled(k: usize) -> Result<Self> {
        if k == 0 || FULL_VOL_RES.iter().any(|n| !n.is_multiple_of(k)) || !FULL_IMG_RES.is_multiple_of(k) {
            return Err(HairError::InvalidArgument(format!(
                "scale divisor {k} does not divide the grid"
            )));
        }
        Self::new(
            1.0,
            0.75,
            FULL_VOL_RES.map(|n| n / k),
            FULL_IMG_RES / k,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let [nx, ny, nz] = self.vol_res;
        let bad = |m: String| Err(HairError::InvalidArgument(m));
        if !(self.h > 0.0 && self.dz > 0.0) {
            return bad(format!("box extents must be positive: {} x {}", self.h, self.dz));
        }
        if nx == 0 || ny == 0 || nz == 0 || nx != ny {
            return bad(format!("volume must be square in x/y: {:?}", self.vol_res));
        }
        let ratio = nz as f64 / nx as f64;
        if (ratio - self.dz / self.h).abs() > 1e-9 {
            return bad(format!(
                "voxels not cubic: nz/nx = {ratio} but Dz/H = {}",
                self.dz / self.h
            ));
        }
        if self.img_res == 0 || !self.img_res.is_multiple_of(nx) {
            return bad(format!(
                "image resolution {} is not a multiple of {nx}",
                self.img_res
            ));
        }
        Ok(())
    }

    /// Pixels per model unit.
    pub fn scale(&self) -> f64 {
        self.img_res as f64 / self.h
    }

    pub fn voxel_edge(&self) -> f64 {
        self.h / self.vol_res[0] as f64
    }

    pub fn voxel_count(&self) -> usize {
        self.vol_res.iter().product()
    }

    pub fn box_min(&self) -> Vec3 {
        Vec3::new(-self.h / 2.0, -self.h / 2.0, -self.dz / 2.0)
    }

    pub fn box_max(&self) -> Vec3 {
        Vec3::new(self.h / 2.0, self.h / 2.0, self.dz / 2.0)
    }

    pub fn center(&self) -> Vec3 {
        Vec3::zeros()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let (lo, hi) = (self.box_min(), self.box_max());
        (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
    }

    /// Voxel containing `p`, with half-open cells `[lo, hi)` and the box's
    /// max face closed. `None` outside the box.
    pub fn world_to_voxel(&self, p: &Vec3) -> Option<[usize; 3]> {
        if !self.contains(p) {
            return None;
        }
        let lo = self.box_min();
        let e = self.voxel_edge();
        let mut idx = [0; 3];
        for a in 0..3 {
            let i = ((p[a] - lo[a]) / e).floor() as usize;
            idx[a] = i.min(self.vol_res[a] - 1);
        }
        Some(idx)
    }

    pub fn voxel_center(&self, idx: [usize; 3]) -> Vec3 {
        let lo = self.box_min();
        let e = self.voxel_edge();
        Vec3::new(
            lo.x + (idx[0] as f64 + 0.5) * e,
            lo.y + (idx[1] as f64 + 0.5) * e,
            lo.z + (idx[2] as f64 + 0.5) * e,
        )
    }

    /// Continuous voxel coordinates, so that voxel centres land on integers.
    pub fn world_to_grid(&self, p: &Vec3) -> Vec3 {
        (p - self.box_min()) / self.voxel_edge() - Vec3::repeat(0.5)
    }

    /// Orthographic projection to continuous pixel coordinates `(u, v)`;
    /// `v` grows downward and pixel `(i, j)` has its centre at `(i + ½, j + ½)`.
    pub fn project_to_image(&self, p: &Vec3) -> (f64, f64) {
        let (du, dv) = self.project_offset(p);
        let half = self.img_res as f64 / 2.0;
        (half + du, half + dv)
    }

    /// Projection relative to the image centre. Exactly odd in `x`, which keeps
    /// mirrored rasterisation bit-symmetric.
    pub fn project_offset(&self, p: &Vec3) -> (f64, f64) {
        let s = self.scale();
        (s * p.x, -s * p.y)
    }

    /// Offset of pixel `(col, row)`'s centre from the image centre.
    pub fn pixel_offset(&self, col: usize, row: usize) -> (f64, f64) {
        let half = self.img_res as f64 / 2.0;
        (col as f64 + 0.5 - half, row as f64 + 0.5 - half)
    }

    /// Point on the `z = 0` plane that projects to pixel offset `(du, dv)`.
    pub fn unproject_offset(&self, du: f64, dv: f64) -> (f64, f64) {
        let s = self.scale();
        (du / s, -dv / s)
    }
}

/// A direction encoded as a colour in `[0, 1]³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rgb01(pub [f64; 3]);

impl Rgb01 {
    pub const EMPTY: Rgb01 = Rgb01([0.5, 0.5, 0.5]);

    pub fn new(c: [f64; 3]) -> Result<Self> {
        if c.iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(Self(c))
        } else {
            Err(HairError::InvalidInput(format!("colour {c:?} outside [0,1]")))
        }
    }
}

/// `c = (d + 1) / 2`; the zero vector maps to the empty code.
pub fn encode_dir(d: &Vec3) -> Result<Rgb01> {
    if !d.iter().all(|v| v.is_finite()) {
        return Err(HairError::InvalidInput(format!("non-finite direction {d:?}")));
    }
    Ok(Rgb01([
        encode_component(d.x),
        encode_component(d.y),
        encode_component(d.z),
    ]))
}

#[inline]
pub fn encode_component(v: f64) -> f64 {
    ((v + 1.0) / 2.0).clamp(0.0, 1.0)
}

#[inline]
pub fn decode_component(c: f64) -> f64 {
    2.0 * c - 1.0
}

/// `d = 2c − 1`.
pub fn decode_dir(c: &Rgb01) -> Result<Vec3> {
    let c = Rgb01::new(c.0)?;
    Ok(Vec3::new(
        decode_component(c.0[0]),
        decode_component(c.0[1]),
        decode_component(c.0[2]),
    ))
}

pub fn is_occupied(d: &Vec3) -> bool {
    d.norm() >= OCCUPANCY_THRESHOLD
}
