//! Binary and text file formats.
//!
//! All binary formats are little-endian and store `f32` values:
//!
//! * `.strands`: `"HGSTR1\0"`, `u32` strand count, then per strand a `u32`
//!   point count followed by `3 × f32` points.
//! * `.vol3d`: `"HGVOL1\0"`, `u32` nx, ny, nz, then `nx·ny·nz × 3` values,
//!   x-fastest.
//! * `.map2d`: `"HGMAP1\0"`, `u32` w, h, c, then row-major values with the
//!   channels of a pixel adjacent.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{HairError, Result};
use crate::maps::{Map2D, OrientVolume};
use crate::mspace::{ModelSpace, Vec3};
use crate::strands::{HairModel, Strand};

pub const STRANDS_MAGIC: &[u8; 7] = b"HGSTR1\0";
pub const VOL_MAGIC: &[u8; 7] = b"HGVOL1\0";
pub const MAP_MAGIC: &[u8; 7] = b"HGMAP1\0";

fn bad(msg: impl Into<String>) -> HairError {
    HairError::format("<stream>", msg)
}

fn io_err(e: std::io::Error) -> HairError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        bad("unexpected end of data")
    } else {
        HairError::io("<stream>", e)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n.checked_mul(4).ok_or_else(|| bad("size overflow"))?];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_f32s(w: &mut impl Write, vals: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in vals {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

fn check_magic(r: &mut impl Read, magic: &[u8; 7]) -> Result<()> {
    let mut m = [0u8; 7];
    r.read_exact(&mut m).map_err(io_err)?;
    if &m != magic {
        return Err(bad(format!("bad magic {m:?}")));
    }
    Ok(())
}

fn expect_eof(r: &mut impl Read) -> Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b).map_err(io_err)? {
        0 => Ok(()),
        _ => Err(bad("trailing bytes")),
    }
}

/// Runs `f` on a file and tags errors with its path.
fn with_path<T>(path: &Path, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| match e {
        HairError::Format { msg, .. } => HairError::format(path, msg),
        HairError::Io { source, .. } => HairError::io(path, source),
        other => other,
    })
}

pub fn write_strands(w: &mut impl Write, m: &HairModel) -> Result<()> {
    w.write_all(STRANDS_MAGIC).map_err(io_err)?;
    w.write_all(&(m.strands.len() as u32).to_le_bytes()).map_err(io_err)?;
    for s in &m.strands {
        w.write_all(&(s.len() as u32).to_le_bytes()).map_err(io_err)?;
        write_f32s(w, s.points().iter().flat_map(|p| [p.x, p.y, p.z]))?;
    }
    Ok(())
}

pub fn read_strands(r: &mut impl Read) -> Result<HairModel> {
    check_magic(r, STRANDS_MAGIC)?;
    let n = read_u32(r)? as usize;
    let mut strands = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let np = read_u32(r)? as usize;
        let v = read_f32s(r, np * 3)?;
        let pts: Vec<Vec3> = v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        if pts.len() < 2 || pts.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("strand with fewer than two distinct points"));
        }
        strands.push(Strand::from_raw(pts));
    }
    expect_eof(r)?;
    Ok(HairModel::new(strands))
}

pub fn write_volume(w: &mut impl Write, v: &OrientVolume) -> Result<()> {
    w.write_all(VOL_MAGIC).map_err(io_err)?;
    for n in v.dims() {
        w.write_all(&(n as u32).to_le_bytes()).map_err(io_err)?;
    }
    write_f32s(w, v.raw().iter().flatten().copied())
}

/// Reads a volume; the grid must match `ms`.
pub fn read_volume(r: &mut impl Read, ms: &ModelSpace) -> Result<OrientVolume> {
    check_magic(r, VOL_MAGIC)?;
    let dims = [read_u32(r)?, read_u32(r)?, read_u32(r)?].map(|n| n as usize);
    if dims != ms.vol_res {
        return Err(bad(format!(
            "volume grid {dims:?} does not match model space {:?}",
            ms.vol_res
        )));
    }
    let vals = read_f32s(r, ms.voxel_count() * 3)?;
    expect_eof(r)?;
    let data = vals.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    OrientVolume::from_raw(*ms, data).map_err(|e| bad(e.to_string()))
}

/// Reads only the grid extents of a volume file.
pub fn peek_volume_dims(r: &mut impl Read) -> Result<[usize; 3]> {
    check_magic(r, VOL_MAGIC)?;
    Ok([read_u32(r)?, read_u32(r)?, read_u32(r)?].map(|n| n as usize))
}

pub fn write_map(w: &mut impl Write, m: &Map2D) -> Result<()> {
    w.write_all(MAP_MAGIC).map_err(io_err)?;
    for n in [m.width, m.height, m.channels] {
        w.write_all(&(n as u32).to_le_bytes()).map_err(io_err)?;
    }
    write_f32s(w, m.raw().iter().copied())
}

pub fn read_map(r: &mut impl Read) -> Result<Map2D> {
    check_magic(r, MAP_MAGIC)?;
    let (w, h, c) = (read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize);
    let vals = read_f32s(r, w * h * c)?;
    expect_eof(r)?;
    Map2D::from_raw(w, h, c, vals).map_err(|e| bad(e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HairError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HairError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| HairError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| HairError::io(path, e))
}

pub fn save_strands(path: &Path, m: &HairModel) -> Result<()> {
    with_path(path, || {
        let mut w = create(path)?;
        write_strands(&mut w, m)?;
        finish(path, w)
    })
}

pub fn load_strands(path: &Path) -> Result<HairModel> {
    with_path(path, || read_strands(&mut open(path)?))
}

pub fn save_volume(path: &Path, v: &OrientVolume) -> Result<()> {
    with_path(path, || {
        let mut w = create(path)?;
        write_volume(&mut w, v)?;
        finish(path, w)
    })
}

pub fn load_volume(path: &Path, ms: &ModelSpace) -> Result<OrientVolume> {
    with_path(path, || read_volume(&mut open(path)?, ms))
}

pub fn load_volume_dims(path: &Path) -> Result<[usize; 3]> {
    with_path(path, || peek_volume_dims(&mut open(path)?))
}

pub fn save_map(path: &Path, m: &Map2D) -> Result<()> {
    with_path(path, || {
        let mut w = create(path)?;
        write_map(&mut w, m)?;
        finish(path, w)
    })
}

pub fn load_map(path: &Path) -> Result<Map2D> {
    with_path(path, || read_map(&mut open(path)?))
}

pub fn save_text(path: &Path, text: &str) -> Result<()> {
    with_path(path, || {
        let mut w = create(path)?;
        w.write_all(text.as_bytes()).map_err(io_err)?;
        finish(path, w)
    })
}

pub fn load_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HairError::io(path, e))
}

/// Wavefront OBJ of a triangle mesh.
pub fn mesh_obj(vertices: &[Vec3], faces: &[[usize; 3]]) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    for v in vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for [a, b, c] in faces {
        let _ = writeln!(s, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    s
}

/// Wavefront OBJ with one polyline per strand.
pub fn strands_obj(m: &HairModel) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let mut base = 1;
    for st in &m.strands {
        for p in st.points() {
            let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
        }
        s.push('l');
        for i in 0..st.len() {
            let _ = write!(s, " {}", base + i);
        }
        s.push('\n');
        base += st.len();
    }
    s
}
