//! Procedural hairstyles.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bust::{BustModel, HeadShape};
use super::{HairModel, Strand};
use crate::error::{HairError, Result};
use crate::mspace::{ModelSpace, Vec3, FULL_VOXEL_EDGE};

const STEP: f64 = FULL_VOXEL_EDGE;
/// Steps over which the scalp-tangent start direction fades out.
const START_STEPS: usize = 2;
const HEAD_CLEARANCE: f64 = 1.02;
const NOISE_TERMS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleParams {
    pub n_strands: usize,
    pub length_mean: f64,
    pub length_sigma: f64,
    pub curl_radius: f64,
    /// Turns per unit arc length.
    pub curl_freq: f64,
    pub gravity: f64,
    pub waviness: f64,
}

impl Default for StyleParams {
    fn default() -> Self {
        StyleParams {
            n_strands: 800,
            length_mean: 0.35,
            length_sigma: 0.05,
            curl_radius: 0.0,
            curl_freq: 0.0,
            gravity: 1.0,
            waviness: 0.1,
        }
    }
}

impl StyleParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_strands == 0 {
            return Err(HairError::InvalidArgument("n_strands must be >= 1".into()));
        }
        let fields = [
            ("length_mean", self.length_mean),
            ("length_sigma", self.length_sigma),
            ("curl_radius", self.curl_radius),
            ("curl_freq", self.curl_freq),
            ("gravity", self.gravity),
            ("waviness", self.waviness),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(HairError::InvalidArgument(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Random style spanning short to long and straight to curly.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n_strands: usize) -> Self {
        let length_mean = rng.random_range(0.12..0.75);
        let curly = rng.random_bool(0.35);
        let (curl_radius, curl_freq) = if curly {
            (rng.random_range(0.01..0.035), rng.random_range(6.0..16.0))
        } else {
            (0.0, 0.0)
        };
        StyleParams {
            n_strands,
            length_mean,
            length_sigma: length_mean * rng.random_range(0.05..0.2),
            curl_radius,
            curl_freq,
            gravity: rng.random_range(0.6..1.4),
            waviness: rng.random_range(0.0..0.4),
        }
    }

    pub fn meta(&self) -> BTreeMap<String, String> {
        let length = match self.length_mean {
            l if l < 0.2 => "short",
            l if l < 0.45 => "medium",
            _ => "long",
        };
        let curl = if self.curl_radius * self.curl_freq == 0.0 {
            if self.waviness > 0.25 {
                "wavy"
            } else {
                "straight"
            }
        } else {
            "curly"
        };
        BTreeMap::from([
            ("length".to_string(), length.to_string()),
            ("curliness".to_string(), curl.to_string()),
        ])
    }
}

struct StrandNoise {
    amp: [[f64; NOISE_TERMS]; 3],
    freq: [[f64; NOISE_TERMS]; 3],
    phase: [[f64; NOISE_TERMS]; 3],
}

impl StrandNoise {
    fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut n = StrandNoise {
            amp: [[0.0; NOISE_TERMS]; 3],
            freq: [[0.0; NOISE_TERMS]; 3],
            phase: [[0.0; NOISE_TERMS]; 3],
        };
        for a in 0..3 {
            for k in 0..NOISE_TERMS {
                n.amp[a][k] = rng.random_range(0.5..1.0) / (k + 1) as f64;
                n.freq[a][k] = rng.random_range(3.0..9.0) * (k + 1) as f64;
                n.phase[a][k] = rng.random_range(0.0..TAU);
            }
        }
        n
    }

    fn at(&self, s: f64) -> Vec3 {
        Vec3::from_fn(|a, _| {
            (0..NOISE_TERMS)
                .map(|k| self.amp[a][k] * (self.freq[a][k] * s + self.phase[a][k]).sin())
                .sum()
        })
    }
}

/// Moves `p` out of the head horizontally so that growth never gains height.
fn push_out_horizontal(head: &HeadShape, p: &Vec3, fallback: &Vec3) -> Vec3 {
    let u = head.local(p);
    let r2 = HEAD_CLEARANCE * HEAD_CLEARANCE;
    if u.norm_squared() >= r2 {
        return *p;
    }
    let target = (r2 - u.y * u.y).sqrt();
    let mut h = (u.x, u.z);
    let hn = (h.0 * h.0 + h.1 * h.1).sqrt();
    if hn < 1e-9 {
        let f = fallback.component_div(&head.radii);
        let fnorm = (f.x * f.x + f.z * f.z).sqrt();
        h = if fnorm > 1e-9 { (f.x / fnorm, f.z / fnorm) } else { (0.0, -1.0) };
    } else {
        h = (h.0 / hn, h.1 / hn);
    }
    let q = Vec3::new(h.0 * target, u.y, h.1 * target);
    head.center + q.component_mul(&head.radii)
}

/// Grows one strand from `root`; stops at the box boundary or on entering
/// the body below the head.
#[allow(clippy::too_many_arguments)]
fn grow<R: Rng + ?Sized>(
    params: &StyleParams,
    bust: &BustModel,
    ms: &ModelSpace,
    root: Vec3,
    normal: Vec3,
    crown: Vec3,
    rng: &mut R,
    length: f64,
) -> Vec<Vec3> {
    let mut comb = root - crown;
    comb -= normal * comb.dot(&normal);
    let comb = comb.try_normalize(1e-12).unwrap_or_else(Vec3::zeros);
    let start = (normal + comb).try_normalize(1e-12).unwrap_or(normal);
    let noise = StrandNoise::sample(rng);
    let phase0 = rng.random_range(0.0..TAU);
    let helix_speed = TAU * params.curl_freq * params.curl_radius;

    let steps = (length / STEP).ceil().max(1.0) as usize;
    let mut pts = vec![root];
    let mut dir = start;
    let mut p = root;
    for k in 0..steps {
        let s = k as f64 * STEP;
        let w_start = 1.0 - (k as f64 / START_STEPS as f64).min(1.0);
        let phi = TAU * params.curl_freq * s + phase0;
        let d = Vec3::new(0.0, -params.gravity, 0.0)
            + start * w_start
            + Vec3::new(phi.cos(), 0.0, phi.sin()) * helix_speed
            + noise.at(s) * params.waviness;
        if let Some(d) = d.try_normalize(1e-12) {
            dir = d;
        }
        let mut next = p + dir * STEP;
        if let Some(head) = bust.head() {
            next = push_out_horizontal(head, &next, &(root - head.center));
        }
        if !ms.contains(&next) || bust.collision.iter().skip(1).any(|e| e.contains(&next, 1.0)) {
            break;
        }
        pts.push(next);
        p = next;
    }
    pts
}

pub fn gen_hairstyle(
    params: &StyleParams,
    seed: u64,
    bust: &BustModel,
    ms: &ModelSpace,
) -> Result<HairModel> {
    params.validate()?;
    let sampler = bust.scalp_sampler()?;
    let crown = match bust.head() {
        Some(h) => h.center + Vec3::new(0.0, 0.8 * h.radii.y, -0.5 * h.radii.z),
        None => ms.center(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length_dist = Normal::new(params.length_mean, params.length_sigma)
        .map_err(|e| HairError::InvalidArgument(e.to_string()))?;
    let mut strands = Vec::with_capacity(params.n_strands);
    while strands.len() < params.n_strands {
        let (root, normal) = sampler.sample(&mut rng);
        let length = length_dist.sample(&mut rng).max(2.0 * STEP);
        if !ms.contains(&root) {
            return Err(HairError::InvalidBust("scalp lies outside the box".into()));
        }
        let mut pts = grow(params, bust, ms, root, normal, crown, &mut rng, length);
        if pts.len() < 2 {
            // blocked immediately: keep a stub along the normal
            let stub = root + normal * (0.5 * STEP);
            pts.push(if ms.contains(&stub) { stub } else { root + (ms.center() - root) * 1e-3 });
        }
        strands.push(Strand::new(pts)?);
    }
    let mut model = HairModel::new(strands);
    model.style_meta = params.meta();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> StyleParams {
        StyleParams {
            n_strands: n,
            ..StyleParams::default()
        }
    }

    #[test]
    fn exact_strand_count_and_determinism() {
        let bust = BustModel::procedural();
        let ms = ModelSpace::default();
        let p = small(500);
        let a = gen_hairstyle(&p, 9, &bust, &ms).unwrap();
        let b = gen_hairstyle(&p, 9, &bust, &ms).unwrap();
        assert_eq!(a.strands.len(), 500);
        assert_eq!(a, b);
        let c = gen_hairstyle(&p, 10, &bust, &ms).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pure_gravity_never_rises_after_start() {
        let bust = BustModel::procedural();
        let ms = ModelSpace::default();
        let p = StyleParams {
            n_strands: 200,
            curl_radius: 0.0,
            waviness: 0.0,
            gravity: 1.0,
            length_mean: 0.6,
            ..StyleParams::default()
        };
        let m = gen_hairstyle(&p, 4, &bust, &ms).unwrap();
        for s in &m.strands {
            let pts = s.points();
            for w in pts[2..].windows(2) {
                assert!(w[1].y <= w[0].y, "{} > {}", w[1].y, w[0].y);
            }
        }
    }

    #[test]
    fn roots_on_scalp_and_strands_inside_box() {
        let bust = BustModel::procedural();
        let ms = ModelSpace::default();
        let p = StyleParams {
            n_strands: 300,
            length_mean: 0.9,
            length_sigma: 0.2,
            curl_radius: 0.03,
            curl_freq: 10.0,
            waviness: 0.5,
            gravity: 0.7,
        };
        let m = gen_hairstyle(&p, 1, &bust, &ms).unwrap();
        let head = bust.head().unwrap();
        for s in &m.strands {
            assert!((head.local(&s.root()).norm() - 1.0).abs() < 0.02 / 0.15);
            assert!(s.points().iter().all(|q| ms.contains(q)));
        }
        assert_eq!(m.style_meta["curliness"], "curly");
    }

    #[test]
    fn rejects_bad_params_and_empty_scalp() {
        let bust = BustModel::procedural();
        let ms = ModelSpace::default();
        assert!(gen_hairstyle(&small(0), 0, &bust, &ms).is_err());
        let neg = StyleParams {
            gravity: -1.0,
            ..small(5)
        };
        assert!(matches!(
            gen_hairstyle(&neg, 0, &bust, &ms),
            Err(HairError::InvalidArgument(_))
        ));
        let mut bald = bust.clone();
        bald.scalp.clear();
        assert!(matches!(
            gen_hairstyle(&small(5), 0, &bald, &ms),
            Err(HairError::InvalidBust(_))
        ));
    }
}
