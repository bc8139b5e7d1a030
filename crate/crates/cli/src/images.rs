//! Loading 2D inputs from `.map2d` or common image files, and PPM previews.

use std::path::Path;

use hairgan::formats::load_map;
use hairgan::maps::{Map2D, OrientVolume};
use image::{ImageBuffer, Rgb};

use crate::CliError;

fn is_map2d(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "map2d")
}

/// A map with `channels` channels. Image files give luminance for one
/// channel and the leading RGB channels otherwise, scaled to `[0, 1]`.
pub fn load_channels(path: &Path, channels: usize, res: usize) -> Result<Map2D, CliError> {
    let m = if is_map2d(path) {
        load_map(path)?
    } else {
        let img = image::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        if channels == 1 {
            let g = img.to_luma16();
            let data = g.pixels().map(|p| p.0[0] as f64 / 65535.0).collect();
            Map2D::from_raw(w, h, 1, data)?
        } else {
            let rgb = img.to_rgb16();
            let data = rgb
                .pixels()
                .flat_map(|p| p.0[..channels.min(3)].iter().map(|&v| v as f64 / 65535.0).collect::<Vec<_>>())
                .collect();
            Map2D::from_raw(w, h, channels.min(3), data)?
        }
    };
    if m.channels != channels {
        return Err(CliError::Data(format!(
            "{}: expected {channels} channel(s), found {}",
            path.display(),
            m.channels
        )));
    }
    if m.width != res || m.height != res {
        return Err(CliError::Data(format!(
            "{}: {}x{} does not match the configured image resolution {res}",
            path.display(),
            m.width,
            m.height
        )));
    }
    Ok(m)
}

/// Binary PPM of the first three channels (gray for one channel).
pub fn save_map_ppm(path: &Path, m: &Map2D) -> Result<(), CliError> {
    let img = ImageBuffer::from_fn(m.width as u32, m.height as u32, |x, y| {
        let px = |c: usize| (m.get(x as usize, y as usize, c.min(m.channels - 1)).clamp(0.0, 1.0) * 255.0).round() as u8;
        if m.channels >= 3 {
            Rgb([px(0), px(1), px(2)])
        } else {
            Rgb([px(0), px(0), px(0)])
        }
    });
    img.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Front view of a volume: each pixel shows the colour code of the nearest
/// occupied voxel along the view ray, black where there is none.
pub fn volume_preview(v: &OrientVolume) -> Map2D {
    let [nx, ny, nz] = v.dims();
    let mut data = vec![0.0; nx * ny * 3];
    for row in 0..ny {
        let iy = ny - 1 - row;
        for ix in 0..nx {
            if let Some(iz) = (0..nz).rev().find(|&iz| hairgan::mspace::is_occupied(&v.dir([ix, iy, iz]))) {
                let o = (row * nx + ix) * 3;
                data[o..o + 3].copy_from_slice(&v.get([ix, iy, iz]).0);
            }
        }
    }
    Map2D::from_raw(nx, ny, 3, data).expect("sizes match")
}
