//! Dense grids shared across the pipeline: the colour-coded orientation
//! volume and multi-channel image maps.

use hg_autodiff::Tensor;

use crate::error::{HairError, Result};
use crate::mspace::{decode_dir, encode_dir, ModelSpace, Rgb01, Vec3};

/// Voxel colours stored x-fastest: index `ix + nx·(iy + ny·iz)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientVolume {
    pub ms: ModelSpace,
    data: Vec<[f64; 3]>,
}

impl OrientVolume {
    pub fn empty(ms: ModelSpace) -> Self {
        Self {
            data: vec![Rgb01::EMPTY.0; ms.voxel_count()],
            ms,
        }
    }

    pub fn from_raw(ms: ModelSpace, data: Vec<[f64; 3]>) -> Result<Self> {
        if data.len() != ms.voxel_count() {
            return Err(HairError::Shape(format!(
                "volume has {} voxels, grid {:?} needs {}",
                data.len(),
                ms.vol_res,
                ms.voxel_count()
            )));
        }
        if let Some(c) = data
            .iter()
            .find(|c| !c.iter().all(|v| (0.0..=1.0).contains(v)))
        {
            return Err(HairError::InvalidInput(format!("voxel colour {c:?} outside [0,1]")));
        }
        Ok(Self { ms, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.ms.vol_res
    }

    #[inline]
    pub fn index(&self, [ix, iy, iz]: [usize; 3]) -> usize {
        let [nx, ny, _] = self.ms.vol_res;
        ix + nx * (iy + ny * iz)
    }

    pub fn raw(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn get(&self, idx: [usize; 3]) -> Rgb01 {
        Rgb01(self.data[self.index(idx)])
    }

    pub fn set(&mut self, idx: [usize; 3], c: Rgb01) {
        let i = self.index(idx);
        self.data[i] = c.0;
    }

    pub fn set_dir(&mut self, idx: [usize; 3], d: &Vec3) -> Result<()> {
        let c = encode_dir(d)?;
        self.set(idx, c);
        Ok(())
    }

    /// Decoded direction; colours are kept in range so this cannot fail.
    pub fn dir(&self, idx: [usize; 3]) -> Vec3 {
        decode_dir(&self.get(idx)).unwrap_or_else(|_| Vec3::zeros())
    }

    pub fn occupied_count(&self) -> usize {
        self.data
            .iter()
            .filter(|c| crate::mspace::is_occupied(&decode_dir(&Rgb01(**c)).unwrap_or_default()))
            .count()
    }

    /// Network layout `[row, col, z, 3]` with `row = ny − 1 − iy`.
    pub fn to_tensor(&self) -> Tensor {
        let [nx, ny, nz] = self.ms.vol_res;
        let mut out = vec![0.0; nx * ny * nz * 3];
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    let c = self.data[ix + nx * (iy + ny * iz)];
                    let row = ny - 1 - iy;
                    let o = ((row * nx + ix) * nz + iz) * 3;
                    out[o..o + 3].copy_from_slice(&c);
                }
            }
        }
        Tensor::new(&[ny, nx, nz, 3], out).expect("extents match")
    }

    /// Inverse of [`to_tensor`](Self::to_tensor); values are clamped to `[0, 1]`.
    pub fn from_tensor(ms: ModelSpace, t: &Tensor) -> Result<Self> {
        let [nx, ny, nz] = ms.vol_res;
        if t.shape() != [ny, nx, nz, 3] {
            return Err(HairError::Shape(format!(
                "tensor {:?} does not match volume {:?}",
                t.shape(),
                ms.vol_res
            )));
        }
        let src = t.data();
        let mut data = vec![[0.0; 3]; nx * ny * nz];
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    let o = (((ny - 1 - iy) * nx + ix) * nz + iz) * 3;
                    data[ix + nx * (iy + ny * iz)] =
                        [0, 1, 2].map(|c| src[o + c].clamp(0.0, 1.0));
                }
            }
        }
        Ok(Self { ms, data })
    }

    /// Mirror across `x = 0` with the x colour channel reflected (`R → 1 − R`).
    pub fn mirror_x(&self) -> Self {
        let [nx, ny, nz] = self.ms.vol_res;
        let mut data = self.data.clone();
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    let [r, g, b] = self.data[ix + nx * (iy + ny * iz)];
                    data[(nx - 1 - ix) + nx * (iy + ny * iz)] = [1.0 - r, g, b];
                }
            }
        }
        Self { ms: self.ms, data }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max)
    }
}

/// Multi-channel image, interleaved row-major `[row][col][channel]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Map2D {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    data: Vec<f64>,
}

impl Map2D {
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn square(res: usize, channels: usize, value: f64) -> Self {
        Self::filled(res, res, channels, value)
    }

    pub fn from_raw(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(HairError::Shape(format!(
                "{} values for a {width}x{height}x{channels} map",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(HairError::InvalidInput("non-finite map value".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Stacks single-channel maps of equal size.
    pub fn stack(planes: &[&Map2D]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| HairError::InvalidArgument("nothing to stack".into()))?;
        let (w, h) = (first.width, first.height);
        if planes.iter().any(|p| p.width != w || p.height != h) {
            return Err(HairError::InvalidArgument(
                "map resolutions differ".into(),
            ));
        }
        let channels: usize = planes.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(w * h * channels);
        for px in 0..w * h {
            for p in planes {
                data.extend_from_slice(&p.data[px * p.channels..(px + 1) * p.channels]);
            }
        }
        Ok(Self {
            width: w,
            height: h,
            channels,
            data,
        })
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, ch: usize, v: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// One channel as a row-major plane.
    pub fn plane(&self, ch: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(ch)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn from_plane(width: usize, height: usize, plane: Vec<f64>) -> Result<Self> {
        Self::from_raw(width, height, 1, plane)
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Horizontal mirror.
    pub fn mirror_x(&self) -> Self {
        let mut out = self.clone();
        let c = self.channels;
        for row in 0..self.height {
            for col in 0..self.width {
                let src = (row * self.width + col) * c;
                let dst = (row * self.width + self.width - 1 - col) * c;
                out.data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        out
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.height, self.width, self.channels], self.data.clone())
            .expect("extents match")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [h, w, c] => Self::from_raw(w, h, c, t.to_vec()),
            ref s => Err(HairError::Shape(format!("expected [h, w, c], got {s:?}"))),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Requires every value `> 0.5` to count as set.
    pub fn is_set(&self, col: usize, row: usize) -> bool {
        self.get(col, row, 0) > 0.5
    }
}
