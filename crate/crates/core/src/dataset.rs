//! Synthetic datasets on disk: procedural styles, their training pairs, and
//! a CSV manifest carrying content hashes.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HairError, Result};
use crate::formats::{load_map, load_volume, save_map, save_volume};
use crate::gan::Sample;
use crate::maps::Map2D;
use crate::mspace::ModelSpace;
use crate::pairs::{build_pair, sample_pair_specs, TrainingPair};
use crate::rasterize::bust_depth_map;
use crate::strands::{flip_model, gen_hairstyle, BustModel, StyleParams};

pub const MANIFEST: &str = "manifest.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub styles: usize,
    pub n_rot: usize,
    pub flips: bool,
    pub n_strands: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            styles: 10,
            n_rot: 12,
            flips: true,
            n_strands: 1500,
            seed: 0,
        }
    }
}

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: usize,
    pub style: usize,
    pub flipped: bool,
    pub n_strands: usize,
    pub length_mean: f64,
    pub length_sigma: f64,
    pub curl_radius: f64,
    pub curl_freq: f64,
    pub gravity: f64,
    pub waviness: f64,
    pub rot_x: f64,
    pub rot_y: f64,
    pub rot_z: f64,
    pub iters: usize,
    pub render_seed: u64,
    pub x_file: String,
    pub y_file: String,
    pub x_sha256: String,
    pub y_sha256: String,
}

/// Style parameters and generator seed of style `i`.
pub fn style_of(cfg: &DatasetConfig, i: usize) -> (StyleParams, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64);
    let p = StyleParams::sample(&mut rng, cfg.n_strands);
    (p, cfg.seed.wrapping_mul(1_000_003).wrapping_add(i as u64))
}

/// All pairs of style `i`: `n_rot` rotations, then their mirror images built
/// from the flipped model when flips are on.
pub fn style_pairs(
    cfg: &DatasetConfig,
    i: usize,
    bust: &BustModel,
    depth: &Map2D,
    ms: &ModelSpace,
) -> Result<(StyleParams, Vec<(bool, TrainingPair)>)> {
    let (p, seed) = style_of(cfg, i);
    let m = gen_hairstyle(&p, seed, bust, ms)?;
    let specs = sample_pair_specs(cfg.n_rot, seed);
    let mut out = Vec::with_capacity(specs.len() * 2);
    for &spec in &specs {
        out.push((false, build_pair(&m, depth, ms, spec)?));
    }
    if cfg.flips {
        let f = flip_model(&m);
        for &spec in &specs {
            out.push((true, build_pair(&f, depth, ms, spec.mirrored())?));
        }
    }
    Ok((p, out))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| HairError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes every pair and the manifest into `dir`; returns the rows.
pub fn make_dataset(
    dir: &Path,
    cfg: &DatasetConfig,
    bust: &BustModel,
    ms: &ModelSpace,
) -> Result<Vec<ManifestRow>> {
    if cfg.styles == 0 || cfg.n_rot == 0 {
        return Err(HairError::InvalidArgument("styles and n_rot must be >= 1".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| HairError::io(dir, e))?;
    let depth = bust_depth_map(bust, ms)?;
    let mut rows = Vec::new();
    for st in 0..cfg.styles {
        let (p, pairs) = style_pairs(cfg, st, bust, &depth, ms)?;
        for (flipped, pair) in pairs {
            let id = rows.len();
            let (xf, yf) = (format!("{id:06}_x.map2d"), format!("{id:06}_y.vol3d"));
            save_map(&dir.join(&xf), &pair.x)?;
            save_volume(&dir.join(&yf), &pair.y)?;
            rows.push(ManifestRow {
                id,
                style: st,
                flipped,
                n_strands: p.n_strands,
                length_mean: p.length_mean,
                length_sigma: p.length_sigma,
                curl_radius: p.curl_radius,
                curl_freq: p.curl_freq,
                gravity: p.gravity,
                waviness: p.waviness,
                rot_x: pair.spec.euler[0],
                rot_y: pair.spec.euler[1],
                rot_z: pair.spec.euler[2],
                iters: pair.spec.iters,
                render_seed: pair.spec.render_seed,
                x_sha256: sha256_file(&dir.join(&xf))?,
                y_sha256: sha256_file(&dir.join(&yf))?,
                x_file: xf,
                y_file: yf,
            });
        }
    }
    write_manifest(&dir.join(MANIFEST), &rows)?;
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HairError::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| HairError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| HairError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| HairError::format(path, e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| HairError::format(path, e.to_string())))
        .collect()
}

/// SHA-256 of the manifest file.
pub fn manifest_hash(dir: &Path) -> Result<String> {
    sha256_file(&dir.join(MANIFEST))
}

/// A dataset loaded back as network samples.
pub struct Dataset {
    pub dir: PathBuf,
    pub rows: Vec<ManifestRow>,
    pub samples: Vec<Sample>,
}

/// Reads the manifest and every pair, verifying hashes and extents.
pub fn load_dataset(dir: &Path, ms: &ModelSpace) -> Result<Dataset> {
    let rows = read_manifest(&dir.join(MANIFEST))?;
    if rows.is_empty() {
        return Err(HairError::Dataset(format!("{} lists no pairs", dir.join(MANIFEST).display())));
    }
    let mut samples = Vec::with_capacity(rows.len());
    for r in &rows {
        for (f, h) in [(&r.x_file, &r.x_sha256), (&r.y_file, &r.y_sha256)] {
            if &sha256_file(&dir.join(f))? != h {
                return Err(HairError::Dataset(format!("{f}: content hash does not match the manifest")));
            }
        }
        let x = load_map(&dir.join(&r.x_file))?;
        if x.width != ms.img_res || x.height != ms.img_res || x.channels != 4 {
            return Err(HairError::Dataset(format!(
                "{}: {}x{}x{} maps do not match image resolution {}",
                r.x_file, x.width, x.height, x.channels, ms.img_res
            )));
        }
        let y = load_volume(&dir.join(&r.y_file), ms).map_err(|e| HairError::Dataset(e.to_string()))?;
        samples.push(Sample {
            x: x.to_tensor(),
            y: y.to_tensor(),
        });
    }
    Ok(Dataset {
        dir: dir.to_path_buf(),
        rows,
        samples,
    })
}

impl From<&TrainingPair> for Sample {
    fn from(p: &TrainingPair) -> Self {
        Sample {
            x: p.x.to_tensor(),
            y: p.y.to_tensor(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::pair_count;

    fn tiny() -> DatasetConfig {
        DatasetConfig {
            styles: 2,
            n_rot: 2,
            flips: true,
            n_strands: 150,
            seed: 3,
        }
    }

    #[test]
    fn manifest_matches_pairs_and_reruns_hash_equal() {
        let ms = ModelSpace::scaled(8).unwrap();
        let bust = BustModel::procedural();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let rows = make_dataset(a.path(), &tiny(), &bust, &ms).unwrap();
        assert_eq!(rows.len(), pair_count(2, true, 2));
        assert_eq!(read_manifest(&a.path().join(MANIFEST)).unwrap(), rows);
        make_dataset(b.path(), &tiny(), &bust, &ms).unwrap();
        assert_eq!(manifest_hash(a.path()).unwrap(), manifest_hash(b.path()).unwrap());
        let ds = load_dataset(a.path(), &ms).unwrap();
        assert_eq!(ds.samples.len(), rows.len());
        assert_eq!(ds.samples[0].x.shape(), &[128, 128, 4]);
        assert_eq!(ds.samples[0].y.shape(), &[16, 16, 12, 3]);
        assert_eq!(rows.iter().filter(|r| r.flipped).count(), 4);
    }

    #[test]
    fn tampered_file_is_a_dataset_error() {
        let ms = ModelSpace::scaled(8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig {
            styles: 1,
            n_rot: 1,
            flips: false,
            ..tiny()
        };
        let rows = make_dataset(dir.path(), &cfg, &BustModel::procedural(), &ms).unwrap();
        let f = dir.path().join(&rows[0].y_file);
        let mut bytes = std::fs::read(&f).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&f, bytes).unwrap();
        assert!(matches!(load_dataset(dir.path(), &ms), Err(HairError::Dataset(_))));
        let other = ModelSpace::scaled(4).unwrap();
        assert!(load_dataset(dir.path(), &other).is_err());
    }
}
