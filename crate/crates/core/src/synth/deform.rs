//! In-plane strand deformation toward a 2D directed orientation map.

use rayon::prelude::*;

use crate::error::{HairError, Result};
use crate::mspace::{ModelSpace, Vec3};
use crate::orient2d::OrientationField2D;
use crate::strands::{HairModel, Strand};

/// Pixels below this confidence do not pull on strands.
pub const MIN_CONFIDENCE: f64 = 0.4;
/// Largest rotation applied at one vertex, in degrees.
pub const MAX_ROTATION_DEG: f64 = 10.0;

/// Rotates each segment in the image plane toward the directed 2D field at
/// its start vertex by `weight` times the angular error, capped at
/// [`MAX_ROTATION_DEG`]. Points are re-propagated from the root, so roots,
/// segment lengths and segment z-components are preserved.
pub fn deform_strands(
    m: &HairModel,
    f: &OrientationField2D,
    ms: &ModelSpace,
    weight: f64,
) -> Result<HairModel> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(HairError::InvalidArgument(format!(
            "deformation weight {weight} outside [0, 1]"
        )));
    }
    if f.width != ms.img_res || f.height != ms.img_res {
        return Err(HairError::InvalidArgument(format!(
            "orientation map {}x{} does not match image resolution {}",
            f.width, f.height, ms.img_res
        )));
    }
    if weight == 0.0 {
        return Ok(m.clone());
    }
    let strands = m
        .strands
        .par_iter()
        .map(|s| deform_one(s, f, ms, weight))
        .collect();
    Ok(HairModel {
        strands,
        style_meta: m.style_meta.clone(),
    })
}

fn target_at(f: &OrientationField2D, ms: &ModelSpace, p: &Vec3) -> Option<[f64; 2]> {
    let (u, v) = ms.project_to_image(p);
    if !(u >= 0.0 && v >= 0.0) {
        return None;
    }
    let (col, row) = (u.floor() as usize, v.floor() as usize);
    if col >= f.width || row >= f.height {
        return None;
    }
    let i = row * f.width + col;
    let d = f.directed[i];
    (f.mask[i] && f.conf[i] >= MIN_CONFIDENCE && (d[0] != 0.0 || d[1] != 0.0)).then_some(d)
}

fn deform_one(s: &Strand, f: &OrientationField2D, ms: &ModelSpace, weight: f64) -> Strand {
    let src = s.points();
    let cap = MAX_ROTATION_DEG.to_radians();
    let mut out = Vec::with_capacity(src.len());
    out.push(src[0]);
    let mut moved = false;
    for i in 0..src.len() - 1 {
        let seg = src[i + 1] - src[i];
        let here = out[i];
        let angle = target_at(f, ms, &here)
            .filter(|_| seg.x != 0.0 || seg.y != 0.0)
            .map(|d| {
                let err = (seg.x * d[1] - seg.y * d[0]).atan2(seg.x * d[0] + seg.y * d[1]);
                (weight * err).clamp(-cap, cap)
            })
            .unwrap_or(0.0);
        if angle == 0.0 {
            out.push(if moved { here + seg } else { src[i + 1] });
            continue;
        }
        moved = true;
        let (sn, cs) = angle.sin_cos();
        let rotated = Vec3::new(cs * seg.x - sn * seg.y, sn * seg.x + cs * seg.y, seg.z);
        out.push(here + rotated);
    }
    Strand::from_raw(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(ms: &ModelSpace, d: [f64; 2], conf: f64) -> OrientationField2D {
        let n = ms.img_res * ms.img_res;
        OrientationField2D {
            width: ms.img_res,
            height: ms.img_res,
            mask: vec![true; n],
            theta: vec![d[1].atan2(d[0]).rem_euclid(std::f64::consts::PI); n],
            conf: vec![conf; n],
            directed: vec![d; n],
        }
    }

    fn wavy(ms: &ModelSpace) -> HairModel {
        let c = ms.center();
        let strands = (0..5)
            .map(|k| {
                let pts = (0..30)
                    .map(|i| {
                        let t = i as f64 * 0.01;
                        Vec3::new(c.x + 0.05 * k as f64 + 0.02 * (t * 30.0).sin(), c.y + 0.2 - t, c.z + 0.3 * t)
                    })
                    .collect();
                Strand::new(pts).unwrap()
            })
            .collect();
        HairModel::new(strands)
    }

    fn lengths(s: &Strand) -> Vec<f64> {
        s.segments().map(|(a, b)| (b - a).norm()).collect()
    }

    #[test]
    fn zero_weight_is_identity() {
        let ms = ModelSpace::scaled(8).unwrap();
        let m = wavy(&ms);
        assert_eq!(deform_strands(&m, &uniform(&ms, [1.0, 0.0], 1.0), &ms, 0.0).unwrap(), m);
    }

    #[test]
    fn aligned_strand_is_unchanged() {
        let ms = ModelSpace::scaled(8).unwrap();
        let c = ms.center();
        let s = Strand::new((0..20).map(|i| c + Vec3::new(0.0, -0.01 * i as f64, 0.004 * i as f64)).collect()).unwrap();
        let m = HairModel::new(vec![s]);
        let out = deform_strands(&m, &uniform(&ms, [0.0, -1.0], 1.0), &ms, 0.7).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn lengths_roots_and_z_are_preserved() {
        let ms = ModelSpace::scaled(8).unwrap();
        let m = wavy(&ms);
        let out = deform_strands(&m, &uniform(&ms, [1.0, 0.0], 1.0), &ms, 0.5).unwrap();
        assert_ne!(out, m);
        for (a, b) in m.strands.iter().zip(&out.strands) {
            assert_eq!(a.root(), b.root());
            assert_eq!(a.len(), b.len());
            for (la, lb) in lengths(a).iter().zip(lengths(b)) {
                assert!((la - lb).abs() <= 1e-12 * la);
            }
            let ta: f64 = lengths(a).iter().sum();
            let tb: f64 = lengths(b).iter().sum();
            assert!((ta - tb).abs() <= 1e-6 * ta);
            for ((pa, qa), (pb, qb)) in a.segments().zip(b.segments()) {
                assert!(((qa - pa).z - (qb - pb).z).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rotation_is_capped_and_moves_toward_target() {
        let ms = ModelSpace::scaled(8).unwrap();
        let c = ms.center();
        let s = Strand::new(vec![c, c + Vec3::new(0.0, -0.01, 0.0), c + Vec3::new(0.0, -0.02, 0.0)]).unwrap();
        let m = HairModel::new(vec![s]);
        let out = deform_strands(&m, &uniform(&ms, [1.0, 0.0], 1.0), &ms, 1.0).unwrap();
        let p = out.strands[0].points();
        let d = p[1] - p[0];
        let turned = d.x.atan2(-d.y).to_degrees();
        assert!((turned - MAX_ROTATION_DEG).abs() < 1e-9);
    }

    #[test]
    fn low_confidence_does_nothing() {
        let ms = ModelSpace::scaled(8).unwrap();
        let m = wavy(&ms);
        let out = deform_strands(&m, &uniform(&ms, [1.0, 0.0], 0.39), &ms, 1.0).unwrap();
        assert_eq!(out, m);
    }
}
