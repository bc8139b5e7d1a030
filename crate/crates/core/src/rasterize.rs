//! Ground-truth volumes and 2D captures of a hair model in the model space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{HairError, Result};
use crate::maps::{Map2D, OrientVolume};
use crate::mspace::{encode_component, ModelSpace, Vec3};
use crate::strands::{BustModel, HairModel};

pub const BACKGROUND: f64 = 0.15;
/// Pixel centres within this distance of a projected segment are hair.
pub const MASK_RADIUS: f64 = 0.75;
pub const CLOSING_RADIUS: usize = 2;
pub const DEPTH_MISS: f64 = 1.0;

/// Voxel index along one axis from a centred grid coordinate `s = x / edge`.
/// Exactly mirror symmetric for even `n`: `−s` lands in `n − 1 − i`.
#[inline]
fn axis_index(s: f64, n: usize) -> Option<usize> {
    let i = if n.is_multiple_of(2) {
        s.floor() + (n / 2) as f64
    } else {
        (s + n as f64 / 2.0).floor()
    };
    (i >= 0.0 && i < n as f64).then_some(i as usize)
}

/// Length-weighted tangent average per traversed voxel. Each segment is cut
/// at every voxel plane it crosses and each piece is credited to the voxel
/// containing its midpoint.
pub fn strands_to_volume(m: &HairModel, ms: &ModelSpace) -> OrientVolume {
    let [nx, ny, nz] = ms.vol_res;
    let e = ms.voxel_edge();
    let mut acc = vec![[0.0f64; 3]; ms.voxel_count()];
    let mut cuts: Vec<f64> = Vec::new();
    for strand in &m.strands {
        for (a, b) in strand.segments() {
            let (sa, sb) = (a / e, b / e);
            let d = b - a;
            cuts.clear();
            cuts.push(0.0);
            cuts.push(1.0);
            for (axis, n) in [nx, ny, nz].into_iter().enumerate() {
                let (lo, hi) = (sa[axis].min(sb[axis]), sa[axis].max(sb[axis]));
                if lo == hi {
                    continue;
                }
                let off = if n % 2 == 0 { 0.0 } else { 0.5 };
                let mut q = (lo - off).floor() + 1.0 + off;
                while q < hi {
                    cuts.push((q - sa[axis]) / (sb[axis] - sa[axis]));
                    q += 1.0;
                }
            }
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let dt = w[1] - w[0];
                if dt <= 0.0 {
                    continue;
                }
                let tm = 0.5 * (w[0] + w[1]);
                let sm = sa + (sb - sa) * tm;
                let (Some(ix), Some(iy), Some(iz)) = (
                    axis_index(sm.x, nx),
                    axis_index(sm.y, ny),
                    axis_index(sm.z, nz),
                ) else {
                    continue;
                };
                let cell = &mut acc[ix + nx * (iy + ny * iz)];
                for c in 0..3 {
                    cell[c] += d[c] * dt;
                }
            }
        }
    }
    let mut vol = OrientVolume::empty(*ms);
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                let s = Vec3::from(acc[ix + nx * (iy + ny * iz)]);
                if let Some(dir) = s.try_normalize(0.0) {
                    vol.set_dir([ix, iy, iz], &dir).expect("finite direction");
                }
            }
        }
    }
    vol
}

/// A segment projected to pixel offsets from the image centre.
#[derive(Clone, Copy)]
struct Seg2 {
    a: (f64, f64),
    b: (f64, f64),
}

impl Seg2 {
    fn project(ms: &ModelSpace, a: &Vec3, b: &Vec3) -> Self {
        Self {
            a: ms.project_offset(a),
            b: ms.project_offset(b),
        }
    }

    fn dist(&self, p: (f64, f64)) -> f64 {
        let d = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let w = (p.0 - self.a.0, p.1 - self.a.1);
        let dd = d.0 * d.0 + d.1 * d.1;
        let t = if dd > 0.0 {
            ((w.0 * d.0 + w.1 * d.1) / dd).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let r = (w.0 - t * d.0, w.1 - t * d.1);
        (r.0 * r.0 + r.1 * r.1).sqrt()
    }

    /// Pixels whose centres may lie within `radius`.
    fn pixel_range(&self, ms: &ModelSpace, radius: f64) -> Option<[usize; 4]> {
        let half = ms.img_res as f64 / 2.0;
        let n = ms.img_res as f64;
        let (u0, u1) = (self.a.0.min(self.b.0) + half, self.a.0.max(self.b.0) + half);
        let (v0, v1) = (self.a.1.min(self.b.1) + half, self.a.1.max(self.b.1) + half);
        let c0 = (u0 - radius - 0.5).ceil().max(0.0);
        let c1 = (u1 + radius - 0.5).floor().min(n - 1.0);
        let r0 = (v0 - radius - 0.5).ceil().max(0.0);
        let r1 = (v1 + radius - 0.5).floor().min(n - 1.0);
        (c0 <= c1 && r0 <= r1).then_some([c0 as usize, c1 as usize, r0 as usize, r1 as usize])
    }
}

fn morph(src: &[bool], n: usize, radius: usize, dilate: bool) -> Vec<bool> {
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    (0..n * n)
        .into_par_iter()
        .map(|i| {
            let (col, row) = ((i % n) as isize, (i / n) as isize);
            let hit = |&(dx, dy): &(isize, isize)| {
                let (c, rr) = (col + dx, row + dy);
                if c < 0 || rr < 0 || c >= n as isize || rr >= n as isize {
                    // outside counts as background for dilation, foreground for erosion
                    !dilate
                } else {
                    src[rr as usize * n + c as usize]
                }
            };
            if dilate {
                offsets.iter().any(hit)
            } else {
                offsets.iter().all(hit)
            }
        })
        .collect()
}

pub fn dilate_mask(mask: &Map2D, radius: usize) -> Map2D {
    let n = mask.width;
    let bits: Vec<bool> = (0..n * n).map(|i| mask.raw()[i] > 0.5).collect();
    let out = morph(&bits, n, radius, true);
    Map2D::from_plane(n, n, out.iter().map(|&b| b as u8 as f64).collect()).expect("sizes match")
}

/// Binary hair mask from strand projections, closed with a disk.
pub fn hair_mask(m: &HairModel, ms: &ModelSpace) -> Map2D {
    let n = ms.img_res;
    let mut bits = vec![false; n * n];
    for s in &m.strands {
        for (a, b) in s.segments() {
            let seg = Seg2::project(ms, &a, &b);
            let Some([c0, c1, r0, r1]) = seg.pixel_range(ms, MASK_RADIUS) else {
                continue;
            };
            for row in r0..=r1 {
                for col in c0..=c1 {
                    if seg.dist(ms.pixel_offset(col, row)) <= MASK_RADIUS {
                        bits[row * n + col] = true;
                    }
                }
            }
        }
    }
    let closed = morph(&morph(&bits, n, CLOSING_RADIUS, true), n, CLOSING_RADIUS, false);
    Map2D::from_plane(n, n, closed.iter().map(|&b| b as u8 as f64).collect()).expect("sizes match")
}

/// Per-strand shade in `[0.6, 1.0]`, fixed by the seed and the strand order.
pub fn strand_shades(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.6..=1.0)).collect()
}

/// Stroke render plus a 2-channel hint map of the front-most projected
/// strand tangent per pixel (encoded, `0.5` where none).
pub fn render_with_hints(m: &HairModel, ms: &ModelSpace, seed: u64) -> (Map2D, Map2D) {
    let n = ms.img_res;
    let shades = strand_shades(m.strands.len(), seed);
    let mut order: Vec<(f64, usize, usize)> = Vec::with_capacity(m.point_count());
    for (si, s) in m.strands.iter().enumerate() {
        for (k, w) in s.points().windows(2).enumerate() {
            order.push((0.5 * (w[0].z + w[1].z), si, k));
        }
    }
    // far to near; the camera looks down −z
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut img = vec![BACKGROUND; n * n];
    let mut hint = vec![(0.0f64, 0.0f64); n * n];
    for &(_, si, k) in &order {
        let pts = m.strands[si].points();
        let seg = Seg2::project(ms, &pts[k], &pts[k + 1]);
        let Some([c0, c1, r0, r1]) = seg.pixel_range(ms, 1.0) else {
            continue;
        };
        let t = (pts[k + 1].x - pts[k].x, pts[k + 1].y - pts[k].y);
        let tn = (t.0 * t.0 + t.1 * t.1).sqrt();
        let shade = shades[si];
        for row in r0..=r1 {
            for col in c0..=c1 {
                let d = seg.dist(ms.pixel_offset(col, row));
                let cover = (1.0 - d).clamp(0.0, 1.0);
                let i = row * n + col;
                if cover > 0.0 {
                    img[i] = shade * cover + img[i] * (1.0 - cover);
                }
                if d <= MASK_RADIUS && tn > 0.0 {
                    hint[i] = (t.0 / tn, t.1 / tn);
                }
            }
        }
    }
    let gray = Map2D::from_plane(n, n, img).expect("sizes match");
    let hints = Map2D::from_raw(
        n,
        n,
        2,
        hint.iter()
            .flat_map(|&(x, y)| [encode_component(x), encode_component(y)])
            .collect(),
    )
    .expect("sizes match");
    (gray, hints)
}

pub fn render_strands(m: &HairModel, ms: &ModelSpace, seed: u64) -> Map2D {
    render_with_hints(m, ms, seed).0
}

/// Normalised distance from the box front face to the first bust hit along
/// each pixel's orthographic ray.
pub fn bust_depth_map(bust: &BustModel, ms: &ModelSpace) -> Result<Map2D> {
    if bust.faces.is_empty() {
        return Err(HairError::InvalidBust("mesh has no faces".into()));
    }
    let n = ms.img_res;
    let front = ms.dz / 2.0;
    let mut zbuf = vec![f64::NEG_INFINITY; n * n];
    for f in 0..bust.faces.len() {
        let tri = bust.triangle(f);
        let p = tri.map(|v| ms.project_offset(&v));
        let seg_lo = (p[0].0.min(p[1].0).min(p[2].0), p[0].1.min(p[1].1).min(p[2].1));
        let seg_hi = (p[0].0.max(p[1].0).max(p[2].0), p[0].1.max(p[1].1).max(p[2].1));
        let bbox = Seg2 { a: seg_lo, b: seg_hi };
        let Some([c0, c1, r0, r1]) = bbox.pixel_range(ms, 0.0) else {
            continue;
        };
        let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
        if area.abs() < 1e-18 {
            continue;
        }
        let tol = -1e-12 * area.abs();
        for row in r0..=r1 {
            for col in c0..=c1 {
                let q = ms.pixel_offset(col, row);
                let edge = |i: usize, j: usize| {
                    ((p[j].0 - p[i].0) * (q.1 - p[i].1) - (q.0 - p[i].0) * (p[j].1 - p[i].1))
                        * area.signum()
                };
                let (w0, w1, w2) = (edge(1, 2), edge(2, 0), edge(0, 1));
                if w0 < tol || w1 < tol || w2 < tol {
                    continue;
                }
                let s = w0 + w1 + w2;
                let z = tri[0].z + (w1 * (tri[1].z - tri[0].z) + w2 * (tri[2].z - tri[0].z)) / s;
                let i = row * n + col;
                if z > zbuf[i] {
                    zbuf[i] = z;
                }
            }
        }
    }
    let depth = zbuf
        .iter()
        .map(|&z| {
            if z == f64::NEG_INFINITY {
                DEPTH_MISS
            } else {
                ((front - z) / ms.dz).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(Map2D::from_plane(n, n, depth).expect("sizes match"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mspace::Rgb01;
    use crate::strands::{flip_model, gen_hairstyle, Strand, StyleParams};

    fn tiny() -> ModelSpace {
        // 8 × 8 × 6 voxels, 64 px
        ModelSpace::scaled(16).unwrap()
    }

    #[test]
    fn empty_model_gives_empty_outputs() {
        let ms = tiny();
        let m = HairModel::default();
        assert!(strands_to_volume(&m, &ms)
            .raw()
            .iter()
            .all(|c| *c == Rgb01::EMPTY.0));
        assert!(hair_mask(&m, &ms).raw().iter().all(|&v| v == 0.0));
        assert!(render_strands(&m, &ms, 1).raw().iter().all(|&v| v == BACKGROUND));
    }

    #[test]
    fn straight_strand_through_voxel_centres() {
        let ms = tiny();
        let (iy, iz) = (3, 2);
        let c0 = ms.voxel_center([0, iy, iz]);
        let c7 = ms.voxel_center([7, iy, iz]);
        let m = HairModel::new(vec![Strand::new(vec![c0, c7]).unwrap()]);
        let v = strands_to_volume(&m, &ms);
        for ix in 0..8 {
            for y in 0..8 {
                for z in 0..6 {
                    let d = v.dir([ix, y, z]);
                    if (y, z) == (iy, iz) {
                        assert!((d - Vec3::x()).norm() < 1e-6);
                    } else {
                        assert_eq!(v.get([ix, y, z]), Rgb01::EMPTY);
                    }
                }
            }
        }
    }

    #[test]
    fn vertical_strand_mask_is_one_pixel_wide() {
        let ms = tiny();
        // pixel 40's centre
        let (x, _) = ms.unproject_offset(ms.pixel_offset(40, 0).0, 0.0);
        let m = HairModel::new(vec![Strand::new(vec![
            Vec3::new(x, 0.2, 0.0),
            Vec3::new(x, -0.2, 0.0),
        ])
        .unwrap()]);
        let n = ms.img_res;
        let mut bits = vec![false; n * n];
        let seg = Seg2::project(&ms, &m.strands[0].points()[0], m.strands[0].points().last().unwrap());
        for row in 0..n {
            for col in 0..n {
                bits[row * n + col] = seg.dist(ms.pixel_offset(col, row)) <= MASK_RADIUS;
            }
        }
        for row in 20..44 {
            let on: Vec<usize> = (0..n).filter(|&c| bits[row * n + c]).collect();
            assert_eq!(on, vec![40]);
        }
        let mask = hair_mask(&m, &ms);
        assert_eq!(mask.get(40, 32, 0), 1.0);
    }

    #[test]
    fn flip_equivariance_of_volume_mask_and_render() {
        let ms = ModelSpace::scaled(8).unwrap();
        let bust = BustModel::procedural();
        let p = StyleParams {
            n_strands: 150,
            curl_radius: 0.02,
            curl_freq: 8.0,
            ..StyleParams::default()
        };
        let m = gen_hairstyle(&p, 5, &bust, &ms).unwrap();
        let f = flip_model(&m);
        let v = strands_to_volume(&m, &ms);
        assert!(strands_to_volume(&f, &ms).max_abs_diff(&v.mirror_x()) < 1e-6);
        assert_eq!(hair_mask(&f, &ms), hair_mask(&m, &ms).mirror_x());
        let (g, h) = render_with_hints(&m, &ms, 3);
        let (gf, hf) = render_with_hints(&f, &ms, 3);
        assert!(gf.max_abs_diff(&g.mirror_x()) < 1e-12);
        let hm = h.mirror_x();
        for row in 0..hm.height {
            for col in 0..hm.width {
                assert!((hf.get(col, row, 0) - (1.0 - hm.get(col, row, 0))).abs() < 1e-12);
                assert!((hf.get(col, row, 1) - hm.get(col, row, 1)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn render_is_deterministic_and_in_range() {
        let ms = ModelSpace::scaled(8).unwrap();
        let bust = BustModel::procedural();
        let m = gen_hairstyle(&StyleParams { n_strands: 100, ..Default::default() }, 1, &bust, &ms)
            .unwrap();
        let a = render_strands(&m, &ms, 7);
        assert_eq!(a, render_strands(&m, &ms, 7));
        assert!(a.in_unit_range());
        assert!(a.raw().iter().any(|&v| v > 0.5));
    }

    #[test]
    fn depth_map_examples() {
        let ms = ModelSpace::scaled(8).unwrap();
        let r = 0.25;
        let ball = BustModel::ellipsoid(Vec3::zeros(), Vec3::repeat(r), 24, 32);
        let d = bust_depth_map(&ball, &ms).unwrap();
        let n = ms.img_res;
        let expect = (ms.dz / 2.0 - r) / ms.dz;
        let min = d.raw().iter().copied().fold(f64::INFINITY, f64::min);
        // pixel centres sit half a pixel off the pole
        assert!((min - expect).abs() < 2e-3, "{min} vs {expect}");
        let centre = d.get(n / 2, n / 2, 0);
        assert!((centre - min).abs() < 1e-12);
        assert_eq!(d.get(0, 0, 0), DEPTH_MISS);

        // a quad on the front face
        let h = ms.h / 2.0 + 0.01;
        let z = ms.dz / 2.0;
        let quad = BustModel {
            vertices: vec![
                Vec3::new(-h, -h, z),
                Vec3::new(h, -h, z),
                Vec3::new(h, h, z),
                Vec3::new(-h, h, z),
            ],
            faces: vec![[0, 1, 2], [0, 2, 3]],
            scalp: vec![],
            collision: vec![],
        };
        assert!(bust_depth_map(&quad, &ms).unwrap().raw().iter().all(|&v| v == 0.0));
        let empty = BustModel { faces: vec![], ..quad };
        assert!(bust_depth_map(&empty, &ms).is_err());
    }

    #[test]
    fn depth_map_of_bust_is_symmetric() {
        let ms = ModelSpace::scaled(8).unwrap();
        let d = bust_depth_map(&BustModel::procedural(), &ms).unwrap();
        assert!(d.max_abs_diff(&d.mirror_x()) < 1e-9);
        assert!(d.in_unit_range());
        assert!(d.raw().iter().any(|&v| v < 1.0));
    }
}
