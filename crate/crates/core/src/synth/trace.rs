//! Strand growth from scalp seeds through a 3D direction field.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::surface::RoughShape;
use super::SynthParams;
use crate::error::{HairError, Result};
use crate::maps::OrientVolume;
use crate::mspace::Vec3;
use crate::strands::{BustModel, HairModel, Strand};

/// Number of steps over which the scalp normal hands over to the field.
pub const BLEND_STEPS: usize = 5;
/// Traced strands with fewer points are dropped.
pub const MIN_POINTS: usize = 5;

/// A direction at every point of space, unnormalised.
pub trait DirectionField: Sync {
    /// `None` where the field is undefined.
    fn sample(&self, p: &Vec3) -> Option<Vec3>;
}

/// Trilinear interpolation of the decoded directions of a volume. Empty
/// voxels contribute zero, so the magnitude fades with occupancy.
pub struct VolumeField<'a> {
    pub v: &'a OrientVolume,
}

impl DirectionField for VolumeField<'_> {
    fn sample(&self, p: &Vec3) -> Option<Vec3> {
        let ms = &self.v.ms;
        let g = ms.world_to_grid(p);
        let dims = ms.vol_res;
        let base = [g.x.floor(), g.y.floor(), g.z.floor()];
        let f = [g.x - base[0], g.y - base[1], g.z - base[2]];
        let mut acc = Vec3::zeros();
        let mut any = false;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut idx = [0usize; 3];
            let mut w = 1.0;
            let mut inside = true;
            for a in 0..3 {
                let i = base[a] as i64 + o[a] as i64;
                if i < 0 || i >= dims[a] as i64 {
                    inside = false;
                    break;
                }
                idx[a] = i as usize;
                w *= if o[a] == 1 { f[a] } else { 1.0 - f[a] };
            }
            if !inside || w == 0.0 {
                continue;
            }
            acc += self.v.dir(idx) * w;
            any = true;
        }
        any.then_some(acc)
    }
}

/// Settings of a single trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceParams {
    /// Step length in model units.
    pub h: f64,
    /// Maximum arc length in model units.
    pub max_length: f64,
    /// Tracing stops where the field magnitude falls below this.
    pub min_magnitude: f64,
    /// Steps over which the start direction hands over to the field.
    pub blend_steps: usize,
}

fn unit(d: &Vec3) -> Option<Vec3> {
    let l = d.norm();
    (l > 0.0 && l.is_finite()).then(|| d / l)
}

/// Grows one polyline from `root` with midpoint steps. The first
/// `blend_steps` steps blend from `normal` into the field.
pub fn trace_strand(
    field: &dyn DirectionField,
    inside: &dyn Fn(&Vec3) -> bool,
    root: Vec3,
    normal: Vec3,
    p: &TraceParams,
) -> Vec<Vec3> {
    let mut pts = vec![root];
    let Some(n) = unit(&normal) else {
        return pts;
    };
    let steps = (p.max_length / p.h).floor() as usize;
    let dir_at = |x: &Vec3, w: f64| -> Option<Vec3> {
        let d = field.sample(x)?;
        if d.norm() < p.min_magnitude {
            return None;
        }
        let d = unit(&d)?;
        if w >= 1.0 {
            Some(d)
        } else {
            unit(&(n * (1.0 - w) + d * w))
        }
    };
    let mut x = root;
    for i in 0..steps {
        let w = if i >= p.blend_steps {
            1.0
        } else {
            i as f64 / p.blend_steps as f64
        };
        let step = |w: f64| -> Option<Vec3> {
            let k1 = dir_at(&x, w)?;
            let k2 = dir_at(&(x + k1 * (0.5 * p.h)), w)?;
            Some(x + k2 * p.h).filter(|q| inside(q))
        };
        // the start direction never pushes a strand out of the shape
        let Some(next) = step(w).or_else(|| if w < 1.0 { step(1.0) } else { None }) else {
            break;
        };
        pts.push(next);
        x = next;
    }
    pts
}

/// Seeds strands uniformly on the scalp inside `shape` and traces them
/// through the volume.
pub fn trace_strands(
    v: &OrientVolume,
    shape: &RoughShape,
    bust: &BustModel,
    params: &SynthParams,
) -> Result<HairModel> {
    params.validate()?;
    if shape.is_empty() {
        return Err(HairError::EmptyShape(shape.iso));
    }
    if v.ms != shape.ms {
        return Err(HairError::Shape("volume and rough shape use different model spaces".into()));
    }
    let sampler = bust.scalp_sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<(Vec3, Vec3)> = (0..params.n_seeds)
        .map(|_| sampler.sample(&mut rng))
        .filter(|(r, _)| shape.contains(r))
        .collect();
    if seeds.is_empty() {
        return Err(HairError::NoSeed);
    }
    let field = VolumeField { v };
    let tp = TraceParams {
        h: params.step * v.ms.voxel_edge(),
        max_length: params.max_length,
        min_magnitude: params.min_magnitude,
        blend_steps: BLEND_STEPS,
    };
    let inside = |x: &Vec3| shape.contains(x);
    let strands: Vec<Strand> = seeds
        .par_iter()
        .map(|&(r, n)| trace_strand(&field, &inside, r, n, &tp))
        .filter(|pts| pts.len() >= MIN_POINTS)
        .map(Strand::from_raw)
        .collect();
    let mut m = HairModel::new(strands);
    m.style_meta.insert("source".into(), "traced".into());
    m.style_meta.insert("seeds".into(), seeds.len().to_string());
    Ok(m)
}
