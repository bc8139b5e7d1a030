//! Training pairs: a rotated hair model's ground-truth volume `Y` and the
//! 4-channel input maps `X` re-estimated from its render.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::maps::{Map2D, OrientVolume};
use crate::mspace::ModelSpace;
use crate::orient2d::input_maps;
use crate::rasterize::{hair_mask, render_with_hints, strands_to_volume};
use crate::strands::{mirror_euler, rotate_model, HairModel};

/// Augmentation ranges in degrees for rotations about X, Y and Z.
pub const ROT_RANGE: [f64; 3] = [15.0, 30.0, 20.0];
/// Orientation refinement passes are drawn from this range.
pub const ITERS_RANGE: (usize, usize) = (3, 5);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub euler: [f64; 3],
    pub iters: usize,
    pub render_seed: u64,
}

impl PairSpec {
    /// The pair spec that builds the mirror image of this pair from a flipped model.
    pub fn mirrored(&self) -> Self {
        Self {
            euler: mirror_euler(self.euler),
            ..*self
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub x: Map2D,
    pub y: OrientVolume,
    pub spec: PairSpec,
}

impl TrainingPair {
    /// Mirror image: both grids flipped with their x-direction channels reflected.
    pub fn mirrored(&self) -> Self {
        let mut x = self.x.mirror_x();
        for px in x.raw_mut().chunks_exact_mut(4) {
            px[0] = 1.0 - px[0];
        }
        Self {
            x,
            y: self.y.mirror_x(),
            spec: self.spec.mirrored(),
        }
    }
}

pub fn sample_pair_specs(n_rot: usize, seed: u64) -> Vec<PairSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_rot)
        .map(|_| PairSpec {
            euler: ROT_RANGE.map(|r| rng.random_range(-r..=r)),
            iters: rng.random_range(ITERS_RANGE.0..=ITERS_RANGE.1),
            render_seed: rng.random(),
        })
        .collect()
}

/// Rotate, voxelise, render, and run the 2D orientation stage. The bust
/// (and so `depth`) stays fixed.
pub fn build_pair(
    m: &HairModel,
    depth: &Map2D,
    ms: &ModelSpace,
    spec: PairSpec,
) -> Result<TrainingPair> {
    let rotated = rotate_model(m, spec.euler);
    let y = strands_to_volume(&rotated, ms);
    let (gray, hints) = render_with_hints(&rotated, ms, spec.render_seed);
    let mask = hair_mask(&rotated, ms);
    let (x, _) = input_maps(&gray, &mask, &hints, depth, spec.iters)?;
    Ok(TrainingPair { x, y, spec })
}

/// `n_rot` randomly rotated pairs of one model, deterministic in `seed`.
pub fn make_training_pairs(
    m: &HairModel,
    depth: &Map2D,
    ms: &ModelSpace,
    n_rot: usize,
    seed: u64,
) -> Result<Vec<TrainingPair>> {
    sample_pair_specs(n_rot, seed)
        .into_par_iter()
        .map(|spec| build_pair(m, depth, ms, spec))
        .collect()
}

/// Pairs produced by `styles` models, doubled when flips are included.
pub fn pair_count(styles: usize, flips: bool, n_rot: usize) -> usize {
    styles * if flips { 2 } else { 1 } * n_rot
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_respect_ranges_and_seed() {
        let a = sample_pair_specs(12, 4);
        assert_eq!(a.len(), 12);
        assert_eq!(a, sample_pair_specs(12, 4));
        assert_ne!(a, sample_pair_specs(12, 5));
        for s in &a {
            for k in 0..3 {
                assert!(s.euler[k].abs() <= ROT_RANGE[k]);
            }
            assert!((3..=5).contains(&s.iters));
        }
    }

    #[test]
    fn flipped_model_gives_mirrored_pair() {
        use crate::rasterize::bust_depth_map;
        use crate::strands::{flip_model, gen_hairstyle, BustModel, StyleParams};
        let ms = ModelSpace::scaled(8).unwrap();
        let bust = BustModel::procedural();
        let depth = bust_depth_map(&bust, &ms).unwrap();
        let m = gen_hairstyle(&StyleParams { n_strands: 400, ..Default::default() }, 2, &bust, &ms)
            .unwrap();
        for spec in sample_pair_specs(3, 1) {
            let a = build_pair(&m, &depth, &ms, spec).unwrap().mirrored();
            let b = build_pair(&flip_model(&m), &depth, &ms, spec.mirrored()).unwrap();
            assert!(a.x.max_abs_diff(&b.x) < 1e-6);
            assert!(a.y.max_abs_diff(&b.y) < 1e-6);
        }
    }

    #[test]
    fn counts() {
        assert_eq!(pair_count(10, true, 12), 240);
        assert_eq!(pair_count(303, false, 12), 3636);
    }
}
