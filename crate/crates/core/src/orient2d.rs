//! Dense 2D hair orientation from an image: Gabor-bank estimation with
//! iterative refinement, sign disambiguation, harmonic diffusion, and the
//! 4-channel network input.
//!
//! Angles live in the model frame: `θ = 0` points along `+x`, `θ = π/2` up
//! the image.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{HairError, Result};
use crate::maps::Map2D;
use crate::mspace::{decode_component, encode_component};

pub const N_ORIENT: usize = 32;
pub const WAVELENGTH: f64 = 4.0;
pub const SIGMA: f64 = 2.0;
pub const KSIZE: usize = 13;
pub const DEFAULT_CONF_THRESH: f64 = 0.4;
const HALF: usize = KSIZE / 2;
const CONF_EPS: f64 = 1e-6;
/// Half-length, in pixels, of the smoothing stroke used between iterations.
const SMOOTH_REACH: i32 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct OrientationField2D {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
    /// Undirected angle in `[0, π)`.
    pub theta: Vec<f64>,
    pub conf: Vec<f64>,
    /// Unit vectors on the mask after disambiguation, zero elsewhere.
    pub directed: Vec<[f64; 2]>,
}

impl OrientationField2D {
    /// A field with the given angles and confidences on a full mask.
    pub fn from_parts(width: usize, height: usize, theta: Vec<f64>, conf: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if theta.len() != n || conf.len() != n {
            return Err(HairError::InvalidArgument("field size mismatch".into()));
        }
        Ok(Self {
            width,
            height,
            mask: vec![true; n],
            directed: vec![[0.0; 2]; n],
            theta,
            conf,
        })
    }

    fn len(&self) -> usize {
        self.width * self.height
    }

    /// Directed vectors as an encoded 2-channel map.
    pub fn directed_map(&self) -> Map2D {
        let data = self
            .directed
            .iter()
            .flat_map(|d| [encode_component(d[0]), encode_component(d[1])])
            .collect();
        Map2D::from_raw(self.width, self.height, 2, data).expect("sizes match")
    }

    /// Reads back the field stored in `[R, G, confidence, depth]` input maps.
    /// Pixels with the empty code `(0.5, 0.5)` are outside the mask.
    pub fn from_input_maps(x: &Map2D) -> Result<Self> {
        if x.channels != 4 {
            return Err(HairError::InvalidArgument(format!(
                "input maps need 4 channels, have {}",
                x.channels
            )));
        }
        let n = x.width * x.height;
        let mut f = Self {
            width: x.width,
            height: x.height,
            mask: vec![false; n],
            theta: vec![0.0; n],
            conf: vec![0.0; n],
            directed: vec![[0.0; 2]; n],
        };
        for (i, px) in x.raw().chunks_exact(4).enumerate() {
            let d = [decode_component(px[0]), decode_component(px[1])];
            let len = d[0].hypot(d[1]);
            if len <= 1e-6 {
                continue;
            }
            f.mask[i] = true;
            f.directed[i] = [d[0] / len, d[1] / len];
            f.theta[i] = d[1].atan2(d[0]).rem_euclid(PI);
            f.conf[i] = px[2];
        }
        Ok(f)
    }
}

/// Separable factors of one oriented even/odd Gabor pair.
///
/// `even = hc⊗vc − hs⊗vs − dc·g⊗g` and `odd = hs⊗vc + hc⊗vs`, where the
/// `h*` taps run along columns and the `v*` taps along rows.
struct Orientation {
    hc: [f64; KSIZE],
    hs: [f64; KSIZE],
    vc: [f64; KSIZE],
    vs: [f64; KSIZE],
    dc: f64,
}

struct Bank {
    gauss: [f64; KSIZE],
    orient: Vec<Orientation>,
}

/// Fills symmetric or antisymmetric taps from their non-negative half.
fn taps(f: impl Fn(f64) -> f64, odd: bool) -> [f64; KSIZE] {
    let mut t = [0.0; KSIZE];
    for i in 0..=HALF {
        let v = f(i as f64);
        t[HALF + i] = v;
        t[HALF - i] = if odd { -v } else { v };
    }
    if odd {
        t[HALF] = 0.0;
    }
    t
}

fn bank() -> &'static Bank {
    static BANK: OnceLock<Bank> = OnceLock::new();
    BANK.get_or_init(|| {
        let w = 2.0 * PI / WAVELENGTH;
        let gauss = taps(|x| (-x * x / (2.0 * SIGMA * SIGMA)).exp(), false);
        let g = |i: usize| gauss[i];
        let mut orient: Vec<Orientation> = Vec::with_capacity(N_ORIENT);
        for k in 0..N_ORIENT {
            if k > N_ORIENT / 2 {
                // mirror image of orientation N − k: same column taps, row sine negated
                let m = &orient[N_ORIENT - k];
                orient.push(Orientation {
                    hc: m.hc,
                    hs: m.hs,
                    vc: m.vc,
                    vs: m.vs.map(|v| -v),
                    dc: m.dc,
                });
                continue;
            }
            let th = k as f64 * PI / N_ORIENT as f64;
            let (s, c) = match k {
                0 => (0.0, 1.0),
                _ if 2 * k == N_ORIENT => (1.0, 0.0),
                _ => th.sin_cos(),
            };
            // kernel phase ω(dx·sinθ + dy·cosθ) with dy the row offset
            let hc = taps(|x| (-x * x / (2.0 * SIGMA * SIGMA)).exp() * (w * x * s).cos(), false);
            let hs = taps(|x| (-x * x / (2.0 * SIGMA * SIGMA)).exp() * (w * x * s).sin(), true);
            let vc = taps(|y| (-y * y / (2.0 * SIGMA * SIGMA)).exp() * (w * y * c).cos(), false);
            let vs = taps(|y| (-y * y / (2.0 * SIGMA * SIGMA)).exp() * (w * y * c).sin(), true);
            let sum = |t: &[f64; KSIZE]| t.iter().sum::<f64>();
            let gsum: f64 = (0..KSIZE).map(g).sum();
            let dc = (sum(&hc) * sum(&vc) - sum(&hs) * sum(&vs)) / (gsum * gsum);
            orient.push(Orientation { hc, hs, vc, vs, dc });
        }
        Bank { gauss, orient }
    })
}

/// Horizontal pass with clamped borders. Taps are summed in mirror pairs so a
/// mirrored image gives exactly the mirrored result.
fn filter_rows(src: &[f64], w: usize, h: usize, t: &[f64; KSIZE]) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(row, dst)| {
        let line = &src[row * w..(row + 1) * w];
        let at = |c: isize| line[c.clamp(0, w as isize - 1) as usize];
        for (col, o) in dst.iter_mut().enumerate() {
            let c = col as isize;
            let mut acc = t[HALF] * line[col];
            for i in 1..=HALF {
                let ii = i as isize;
                acc += t[HALF - i] * at(c - ii) + t[HALF + i] * at(c + ii);
            }
            *o = acc;
        }
    });
    out
}

fn filter_cols(src: &[f64], w: usize, h: usize, t: &[f64; KSIZE]) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(row, dst)| {
        let r = row as isize;
        let at = |rr: isize, col: usize| src[rr.clamp(0, h as isize - 1) as usize * w + col];
        for (col, o) in dst.iter_mut().enumerate() {
            let mut acc = t[HALF] * src[row * w + col];
            for i in 1..=HALF {
                let ii = i as isize;
                acc += t[HALF - i] * at(r - ii, col) + t[HALF + i] * at(r + ii, col);
            }
            *o = acc;
        }
    });
    out
}

/// Quadrature energy `√(even² + odd²)` per orientation, `[k][pixel]`.
fn responses(img: &[f64], w: usize, h: usize) -> Vec<Vec<f64>> {
    let b = bank();
    let smooth = filter_cols(&filter_rows(img, w, h, &b.gauss), w, h, &b.gauss);
    // column passes are shared between an orientation and its mirror
    let mut row_passes: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..N_ORIENT).map(|_| None).collect();
    let base: Vec<usize> = (0..=N_ORIENT / 2).collect();
    let computed: Vec<(Vec<f64>, Vec<f64>)> = base
        .par_iter()
        .map(|&k| {
            let o = &b.orient[k];
            (filter_rows(img, w, h, &o.hc), filter_rows(img, w, h, &o.hs))
        })
        .collect();
    for (k, p) in base.into_iter().zip(computed) {
        row_passes[k] = Some(p);
    }
    (0..N_ORIENT)
        .into_par_iter()
        .map(|k| {
            let src = if k > N_ORIENT / 2 { N_ORIENT - k } else { k };
            let (rc, rs) = row_passes[src].as_ref().expect("computed");
            let o = &b.orient[k];
            let cc = filter_cols(rc, w, h, &o.vc);
            let ss = filter_cols(rs, w, h, &o.vs);
            let sc = filter_cols(rs, w, h, &o.vc);
            let cs = filter_cols(rc, w, h, &o.vs);
            (0..w * h)
                .map(|i| {
                    let even = cc[i] - ss[i] - o.dc * smooth[i];
                    let odd = sc[i] + cs[i];
                    (even * even + odd * odd).sqrt()
                })
                .collect()
        })
        .collect()
}

/// Sum over orientations in mirror pairs `(k, N − k)`.
fn paired_sum(r: impl Fn(usize) -> f64) -> f64 {
    let mut s = r(0) + r(N_ORIENT / 2);
    for k in 1..N_ORIENT / 2 {
        s += r(k) + r(N_ORIENT - k);
    }
    s
}

/// `(θ, confidence)` at one pixel with parabolic sub-bin refinement.
fn pick(resp: &[Vec<f64>], i: usize) -> (f64, f64) {
    let r = |k: usize| resp[k % N_ORIENT][i];
    let mut best = 0;
    for k in 1..N_ORIENT {
        if r(k) > r(best) {
            best = k;
        }
    }
    let rmax = r(best);
    let mean = paired_sum(r) / N_ORIENT as f64;
    let conf = ((rmax - mean) / (rmax + CONF_EPS)).clamp(0.0, 1.0);
    let (lo, hi) = (r(best + N_ORIENT - 1), r(best + 1));
    let curv = (lo + hi) - 2.0 * rmax;
    let delta = if curv < 0.0 {
        (0.5 * (lo - hi) / curv).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let theta = ((best as f64 + delta) * PI / N_ORIENT as f64).rem_euclid(PI);
    (if theta >= PI { 0.0 } else { theta }, conf)
}

fn bilinear(img: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = img[y0 * w + x0] * (1.0 - fx) + img[y0 * w + x1] * fx;
    let bot = img[y1 * w + x0] * (1.0 - fx) + img[y1 * w + x1] * fx;
    top * (1.0 - fy) + bot * fy
}

/// Smooths along the current orientation, weighted by confidence, so that
/// the next filtering pass sees cleaner ridges.
fn reconstruct(img: &[f64], w: usize, h: usize, theta: &[f64], conf: &[f64]) -> Vec<f64> {
    let weights: Vec<f64> = (-SMOOTH_REACH..=SMOOTH_REACH)
        .map(|s| (-(s * s) as f64 / (2.0 * 1.5f64.powi(2))).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();
    (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (col, row) = ((i % w) as f64, (i / w) as f64);
            let (s, c) = theta[i].sin_cos();
            // image rows grow downward
            let (dx, dy) = (c, -s);
            let mut acc = weights[SMOOTH_REACH as usize] * img[i];
            for t in 1..=SMOOTH_REACH {
                let tf = t as f64;
                acc += weights[(SMOOTH_REACH + t) as usize]
                    * (bilinear(img, w, h, col + tf * dx, row + tf * dy)
                        + bilinear(img, w, h, col - tf * dx, row - tf * dy));
            }
            conf[i] * (acc / wsum) + (1.0 - conf[i]) * img[i]
        })
        .collect()
}

fn mask_bits(mask: &Map2D) -> Vec<bool> {
    (0..mask.width * mask.height)
        .map(|i| mask.raw()[i * mask.channels] > 0.5)
        .collect()
}

/// Orientation and confidence of a grayscale image; `iters − 1` refinement
/// passes follow the first estimate.
pub fn estimate_orientation(img: &Map2D, mask: &Map2D, iters: usize) -> Result<OrientationField2D> {
    if iters < 1 {
        return Err(HairError::InvalidArgument("orientation iterations must be >= 1".into()));
    }
    if img.channels != 1 {
        return Err(HairError::InvalidArgument("expected a grayscale image".into()));
    }
    if (img.width, img.height) != (mask.width, mask.height) {
        return Err(HairError::InvalidArgument(format!(
            "image {}x{} and mask {}x{} differ",
            img.width, img.height, mask.width, mask.height
        )));
    }
    if !img.in_unit_range() {
        return Err(HairError::InvalidInput("image values outside [0,1]".into()));
    }
    let (w, h) = (img.width, img.height);
    let mask = mask_bits(mask);
    let mut cur = img.raw().to_vec();
    let mut theta = vec![0.0; w * h];
    let mut conf = vec![0.0; w * h];
    for it in 0..iters {
        if it > 0 {
            cur = reconstruct(&cur, w, h, &theta, &conf);
        }
        let resp = responses(&cur, w, h);
        let picked: Vec<(f64, f64)> = (0..w * h).into_par_iter().map(|i| pick(&resp, i)).collect();
        for (i, (t, c)) in picked.into_iter().enumerate() {
            theta[i] = t;
            conf[i] = c;
        }
    }
    for i in 0..w * h {
        if !mask[i] {
            conf[i] = 0.0;
        }
    }
    Ok(OrientationField2D {
        width: w,
        height: h,
        mask,
        theta,
        conf,
        directed: vec![[0.0; 2]; w * h],
    })
}

fn neighbours(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (c, r) = (i % w, i / w);
    [
        (c > 0).then(|| i - 1),
        (c + 1 < w).then(|| i + 1),
        (r > 0).then(|| i - w),
        (r + 1 < h).then(|| i + w),
    ]
    .into_iter()
    .flatten()
}

/// Decoded hint vectors from an encoded 2-channel map; `None` where empty.
pub fn decode_hints(hint: &Map2D) -> Result<Vec<Option<[f64; 2]>>> {
    if hint.channels != 2 {
        return Err(HairError::InvalidArgument(format!(
            "hint map needs 2 channels, has {}",
            hint.channels
        )));
    }
    Ok(hint
        .raw()
        .chunks_exact(2)
        .map(|c| {
            let v = [decode_component(c[0]), decode_component(c[1])];
            (v[0].abs() > 1e-6 || v[1].abs() > 1e-6).then_some(v)
        })
        .collect())
}

/// Signs each masked orientation: hinted pixels by their own hint, the rest
/// by breadth-first layers grown from them, each pixel following the sum of
/// its already-signed neighbours.
pub fn disambiguate(f: &OrientationField2D, hint: &Map2D) -> Result<OrientationField2D> {
    let (w, h) = (f.width, f.height);
    if (hint.width, hint.height) != (w, h) {
        return Err(HairError::InvalidArgument("hint resolution differs".into()));
    }
    let hints = decode_hints(hint)?;
    let axis = |i: usize| {
        let (s, c) = f.theta[i].sin_cos();
        [c, s]
    };
    let sign_by = |a: [f64; 2], r: [f64; 2]| {
        if a[0] * r[0] + a[1] * r[1] >= 0.0 {
            a
        } else {
            [-a[0], -a[1]]
        }
    };
    let mut out = f.clone();
    out.directed = vec![[0.0; 2]; f.len()];
    let mut done = vec![false; f.len()];
    let mut frontier = Vec::new();
    for i in 0..f.len() {
        if let (true, Some(hv)) = (f.mask[i], hints[i]) {
            out.directed[i] = sign_by(axis(i), hv);
            done[i] = true;
            frontier.push(i);
        }
    }
    if frontier.is_empty() {
        return Err(HairError::AmbiguityUnresolved(
            "no direction hint falls inside the hair mask".into(),
        ));
    }
    while !frontier.is_empty() {
        let mut next: Vec<usize> = frontier
            .iter()
            .flat_map(|&i| neighbours(i, w, h))
            .filter(|&j| f.mask[j] && !done[j])
            .collect();
        next.sort_unstable();
        next.dedup();
        let signed: Vec<[f64; 2]> = next
            .iter()
            .map(|&j| {
                let mut r = [0.0; 2];
                for n in neighbours(j, w, h).filter(|&n| done[n]) {
                    r[0] += out.directed[n][0];
                    r[1] += out.directed[n][1];
                }
                sign_by(axis(j), r)
            })
            .collect();
        for (&j, d) in next.iter().zip(signed) {
            out.directed[j] = d;
            done[j] = true;
        }
        frontier = next;
    }
    for i in 0..f.len() {
        if f.mask[i] && !done[i] {
            // a mask component without any hint keeps the unsigned axis
            out.directed[i] = axis(i);
        }
    }
    Ok(out)
}

/// Matrix-free conjugate gradient for the masked graph Laplacian restricted
/// to the free pixels.
fn solve_laplace(
    free: &[usize],
    slot: &[usize],
    w: usize,
    h: usize,
    mask: &[bool],
    rhs: &[f64],
) -> Vec<f64> {
    let n = free.len();
    let apply = |x: &[f64]| -> Vec<f64> {
        free.iter()
            .map(|&i| {
                let mut deg = 0.0;
                let mut s = 0.0;
                for j in neighbours(i, w, h).filter(|&j| mask[j]) {
                    deg += 1.0;
                    if slot[j] != usize::MAX {
                        s += x[slot[j]];
                    }
                }
                deg * x[slot[i]] - s
            })
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let tol = 1e-24 * dot(rhs, rhs).max(1e-300);
    for _ in 0..(10 * n).max(100) {
        if rr <= tol {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    x
}

/// Harmonic fill of low-confidence masked pixels from the confident ones.
pub fn diffuse_orientation(f: &OrientationField2D, conf_thresh: f64) -> Result<OrientationField2D> {
    let (w, h) = (f.width, f.height);
    let fixed: Vec<bool> = (0..f.len()).map(|i| f.mask[i] && f.conf[i] >= conf_thresh).collect();
    if !fixed.iter().any(|&b| b) {
        return Err(HairError::DiffusionUnderconstrained(conf_thresh));
    }
    // free pixels whose mask component reaches a constraint
    let mut reach = vec![false; f.len()];
    let mut queue: VecDeque<usize> = (0..f.len()).filter(|&i| fixed[i]).collect();
    while let Some(i) = queue.pop_front() {
        for j in neighbours(i, w, h) {
            if f.mask[j] && !fixed[j] && !reach[j] {
                reach[j] = true;
                queue.push_back(j);
            }
        }
    }
    let free: Vec<usize> = (0..f.len()).filter(|&i| reach[i]).collect();
    let mut slot = vec![usize::MAX; f.len()];
    for (k, &i) in free.iter().enumerate() {
        slot[i] = k;
    }
    let mut out = f.clone();
    if free.is_empty() {
        return Ok(out);
    }
    let comps: Vec<Vec<f64>> = (0..2)
        .into_par_iter()
        .map(|c| {
            let rhs: Vec<f64> = free
                .iter()
                .map(|&i| {
                    neighbours(i, w, h)
                        .filter(|&j| fixed[j])
                        .map(|j| f.directed[j][c])
                        .sum()
                })
                .collect();
            solve_laplace(&free, &slot, w, h, &f.mask, &rhs)
        })
        .collect();
    for (k, &i) in free.iter().enumerate() {
        let v = [comps[0][k], comps[1][k]];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if n > 1e-9 {
            out.directed[i] = [v[0] / n, v[1] / n];
        }
    }
    Ok(out)
}

/// `[R, G, confidence, depth]` with empty codes outside the mask.
pub fn assemble_input(f: &OrientationField2D, depth: &Map2D) -> Result<Map2D> {
    if (depth.width, depth.height) != (f.width, f.height) || depth.channels != 1 {
        return Err(HairError::InvalidArgument(format!(
            "depth map {}x{}x{} does not match field {}x{}",
            depth.width, depth.height, depth.channels, f.width, f.height
        )));
    }
    let mut data = Vec::with_capacity(f.len() * 4);
    for i in 0..f.len() {
        if f.mask[i] {
            data.extend([
                encode_component(f.directed[i][0]),
                encode_component(f.directed[i][1]),
                f.conf[i].clamp(0.0, 1.0),
            ]);
        } else {
            data.extend([0.5, 0.5, 0.0]);
        }
        data.push(depth.raw()[i]);
    }
    Map2D::from_raw(f.width, f.height, 4, data)
}

/// Full 2D stage: estimate, sign with hints, diffuse, and assemble.
pub fn input_maps(
    img: &Map2D,
    mask: &Map2D,
    hint: &Map2D,
    depth: &Map2D,
    iters: usize,
) -> Result<(Map2D, OrientationField2D)> {
    let f = estimate_orientation(img, mask, iters)?;
    let f = disambiguate(&f, hint)?;
    let f = diffuse_orientation(&f, DEFAULT_CONF_THRESH)?;
    Ok((assemble_input(&f, depth)?, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stripes(n: usize, deg: f64) -> Map2D {
        let th = deg.to_radians();
        let (s, c) = th.sin_cos();
        let w = 2.0 * PI / WAVELENGTH;
        let data = (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as f64, -((i / n) as f64));
                // constant along (cos θ, sin θ)
                0.5 + 0.5 * (w * (-x * s + y * c)).sin()
            })
            .collect();
        Map2D::from_plane(n, n, data).unwrap()
    }

    fn ang_err(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(PI);
        d.min(PI - d).to_degrees()
    }

    #[test]
    fn stripes_are_recovered() {
        let n = 48;
        let full = Map2D::square(n, 1, 1.0);
        for deg in [0.0, 30.0, 90.0, 121.0] {
            let f = estimate_orientation(&stripes(n, deg), &full, 3).unwrap();
            for row in 10..n - 10 {
                for col in 10..n - 10 {
                    let i = row * n + col;
                    assert!(ang_err(f.theta[i], deg.to_radians()) < 3.0, "{deg}: {}", f.theta[i].to_degrees());
                    assert!(f.conf[i] > 0.4);
                }
            }
        }
    }

    #[test]
    fn constant_image_has_no_confidence() {
        let n = 32;
        let f = estimate_orientation(&Map2D::square(n, 1, 0.7), &Map2D::square(n, 1, 1.0), 2).unwrap();
        assert!(f.conf.iter().all(|&c| c <= 0.05));
    }

    #[test]
    fn mirrored_image_mirrors_theta() {
        let n = 40;
        let img = Map2D::from_plane(
            n,
            n,
            (0..n * n)
                .map(|i| {
                    let (x, y) = ((i % n) as f64, (i / n) as f64);
                    0.5 + 0.25 * (0.9 * x + 0.4 * y).sin() + 0.2 * (0.3 * x * y / n as f64).cos()
                })
                .collect(),
        )
        .unwrap();
        let full = Map2D::square(n, 1, 1.0);
        let a = estimate_orientation(&img, &full, 3).unwrap();
        let b = estimate_orientation(&img.mirror_x(), &full, 3).unwrap();
        for row in 0..n {
            for col in 0..n {
                let (i, j) = (row * n + col, row * n + n - 1 - col);
                assert!(ang_err(b.theta[j], PI - a.theta[i]) < 1e-6);
                assert!((b.conf[j] - a.conf[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_zero_iterations() {
        let m = Map2D::square(8, 1, 0.5);
        assert!(matches!(
            estimate_orientation(&m, &m, 0),
            Err(HairError::InvalidArgument(_))
        ));
    }

    fn field(n: usize, theta: f64, conf: f64) -> OrientationField2D {
        OrientationField2D::from_parts(n, n, vec![theta; n * n], vec![conf; n * n]).unwrap()
    }

    fn hint_at(n: usize, at: usize, v: [f64; 2]) -> Map2D {
        let mut h = Map2D::square(n, 2, 0.5);
        h.set(at % n, at / n, 0, encode_component(v[0]));
        h.set(at % n, at / n, 1, encode_component(v[1]));
        h
    }

    #[test]
    fn single_hint_floods_sign() {
        let n = 9;
        let d = disambiguate(&field(n, 0.0, 1.0), &hint_at(n, 40, [-1.0, 0.0])).unwrap();
        assert!(d.directed.iter().all(|v| *v == [-1.0, 0.0]));
        let d = disambiguate(&field(n, 0.3, 1.0), &hint_at(n, 3, [0.3f64.cos(), 0.3f64.sin()])).unwrap();
        assert!(d.directed.iter().all(|v| *v == [0.3f64.cos(), 0.3f64.sin()]));
        let empty = Map2D::square(n, 2, 0.5);
        assert!(matches!(
            disambiguate(&field(n, 0.0, 1.0), &empty),
            Err(HairError::AmbiguityUnresolved(_))
        ));
    }

    #[test]
    fn negated_hints_negate_directions() {
        let n = 12;
        let theta: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.37).rem_euclid(PI)).collect();
        let f = OrientationField2D::from_parts(n, n, theta, vec![1.0; n * n]).unwrap();
        let mut h = Map2D::square(n, 2, 0.5);
        let mut hn = h.clone();
        for (i, v) in [(5usize, [0.6, 0.8]), (77, [-1.0, 0.2]), (130, [0.1, -0.9])] {
            for c in 0..2 {
                h.set(i % n, i / n, c, encode_component(v[c]));
                hn.set(i % n, i / n, c, encode_component(-v[c]));
            }
        }
        let a = disambiguate(&f, &h).unwrap();
        let b = disambiguate(&f, &hn).unwrap();
        for (x, y) in a.directed.iter().zip(&b.directed) {
            assert_eq!([-x[0], -x[1]], *y);
            assert!(((x[0] * x[0] + x[1] * x[1]) - 1.0).abs() < 1e-12);
        }
    }

    fn banded(n: usize, left: [f64; 2], right: [f64; 2]) -> OrientationField2D {
        let mut f = field(n, 0.0, 0.0);
        for row in 0..n {
            for col in [0, 1] {
                let i = row * n + col;
                f.conf[i] = 1.0;
                f.directed[i] = left;
                let j = row * n + n - 1 - col;
                f.conf[j] = 1.0;
                f.directed[j] = right;
            }
        }
        f
    }

    #[test]
    fn diffusion_examples() {
        let n = 11;
        let d = [0.6, 0.8];
        let out = diffuse_orientation(&banded(n, d, d), 0.4).unwrap();
        assert!(out.directed.iter().all(|v| (v[0] - d[0]).abs() < 1e-9 && (v[1] - d[1]).abs() < 1e-9));

        let out = diffuse_orientation(&banded(n, [1.0, 0.0], [0.0, 1.0]), 0.4).unwrap();
        let s = 0.5f64.sqrt();
        for row in 0..n {
            let v = out.directed[row * n + n / 2];
            assert!((v[0] - s).abs() < 0.05 && (v[1] - s).abs() < 0.05, "{v:?}");
        }
        // constraints untouched
        assert_eq!(out.directed[0], [1.0, 0.0]);

        let all = field(n, 0.2, 1.0);
        let mut all = all;
        all.directed = vec![[0.2f64.cos(), 0.2f64.sin()]; n * n];
        assert_eq!(diffuse_orientation(&all, 0.4).unwrap(), all);
        assert!(matches!(
            diffuse_orientation(&field(n, 0.0, 0.1), 0.4),
            Err(HairError::DiffusionUnderconstrained(_))
        ));
    }

    #[test]
    fn harmonic_fill_matches_linear_profile() {
        // independent oracle: 1D harmonic interpolation between the bands
        let n = 13;
        let out = diffuse_orientation(&banded(n, [1.0, 0.0], [0.0, 1.0]), 0.4).unwrap();
        for col in 2..n - 2 {
            let t = (col as f64 - 1.0) / (n as f64 - 3.0);
            let v = [1.0 - t, t];
            let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let got = out.directed[5 * n + col];
            assert!((got[0] - v[0] / nv).abs() < 1e-6 && (got[1] - v[1] / nv).abs() < 1e-6);
        }
    }

    #[test]
    fn assemble_examples() {
        let n = 4;
        let depth = Map2D::square(n, 1, 1.0);
        let mut f = field(n, 0.0, 0.0);
        f.mask = vec![false; n * n];
        let x = assemble_input(&f, &depth).unwrap();
        assert_eq!(x.channels, 4);
        assert!(x.raw().chunks(4).all(|c| c == [0.5, 0.5, 0.0, 1.0]));
        let mut f = field(n, 0.0, 1.0);
        f.directed = vec![[1.0, 0.0]; n * n];
        let depth = Map2D::square(n, 1, 0.3);
        let x = assemble_input(&f, &depth).unwrap();
        assert!(x.raw().chunks(4).all(|c| c == [1.0, 0.5, 1.0, 0.3]));
        assert!(assemble_input(&f, &Map2D::square(n + 1, 1, 0.0)).is_err());
    }

    #[test]
    fn input_maps_read_back() {
        let n = 4;
        let mut f = field(n, 0.0, 0.8);
        f.directed = vec![[0.6, -0.8]; n * n];
        f.mask[5] = false;
        f.directed[5] = [0.0, 0.0];
        let x = assemble_input(&f, &Map2D::square(n, 1, 0.2)).unwrap();
        let back = OrientationField2D::from_input_maps(&x).unwrap();
        assert_eq!(back.mask, f.mask);
        assert!((back.directed[0][0] - 0.6).abs() < 1e-12 && (back.directed[0][1] + 0.8).abs() < 1e-12);
        assert!((back.theta[0] - (-0.8f64).atan2(0.6).rem_euclid(PI)).abs() < 1e-12);
        assert_eq!(back.conf[0], 0.8);
        assert!(OrientationField2D::from_input_maps(&Map2D::square(n, 2, 0.5)).is_err());
    }
}
