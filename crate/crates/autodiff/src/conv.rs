//! Direct convolution kernels with SAME zero padding.
//!
//! Two-dimensional convolutions run through the same code as 3D ones with a
//! unit third axis. The three kernels (forward, input gradient, weight
//! gradient) are the three partial derivatives of one trilinear form, which
//! keeps the set closed under differentiation.
//!
//! Thin layers run as direct tap-major loops over output rows; wide layers
//! lower to a matrix product over an im2col patch matrix built in blocks of
//! output planes. Both visit their terms in a fixed order.

use crate::error::{shape_err, Result};

/// Resolved geometry of one convolution, spatial axes padded to three.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub spatial_rank: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub output: [usize; 3],
    pub pad: [usize; 3],
    pub stride: usize,
    pub cin: usize,
    pub cout: usize,
}

/// SAME padding: output extent is `ceil(n / s)`, leading pad gets the smaller half.
pub fn same_padding(n: usize, k: usize, s: usize) -> (usize, usize) {
    let out = n.div_ceil(s);
    let total = ((out - 1) * s + k).saturating_sub(n);
    (out, total / 2)
}

impl ConvGeom {
    pub fn new(x_shape: &[usize], w_shape: &[usize], stride: usize) -> Result<Self> {
        if stride == 0 {
            return shape_err("stride must be positive");
        }
        let spatial_rank = match x_shape.len() {
            3 => 2,
            4 => 3,
            r => return shape_err(format!("conv input must have rank 3 or 4, got {r}")),
        };
        if w_shape.len() != spatial_rank + 2 {
            return shape_err(format!(
                "conv weight rank {} does not match input rank {}",
                w_shape.len(),
                x_shape.len()
            ));
        }
        let cin = x_shape[spatial_rank];
        if w_shape[spatial_rank] != cin {
            return shape_err(format!(
                "channel mismatch: input has {cin}, weight expects {}",
                w_shape[spatial_rank]
            ));
        }
        let cout = w_shape[spatial_rank + 1];
        let lead = 3 - spatial_rank;
        let mut input = [1; 3];
        let mut kernel = [1; 3];
        input[lead..].copy_from_slice(&x_shape[..spatial_rank]);
        kernel[lead..].copy_from_slice(&w_shape[..spatial_rank]);
        if input.contains(&0) || kernel.contains(&0) || cin == 0 || cout == 0 {
            return shape_err("zero-sized convolution");
        }
        let mut output = [1; 3];
        let mut pad = [0; 3];
        for a in 0..3 {
            let s = if a >= lead { stride } else { 1 };
            let (o, p) = same_padding(input[a], kernel[a], s);
            output[a] = o;
            pad[a] = p;
        }
        Ok(Self {
            spatial_rank,
            input,
            kernel,
            output,
            pad,
            stride,
            cin,
            cout,
        })
    }

    pub fn input_shape(&self) -> Vec<usize> {
        let mut s = self.input[self.lead()..].to_vec();
        s.push(self.cin);
        s
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let mut s = self.output[self.lead()..].to_vec();
        s.push(self.cout);
        s
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        let mut s = self.kernel[self.lead()..].to_vec();
        s.push(self.cin);
        s.push(self.cout);
        s
    }

    /// Number of unit axes padded in front of the spatial axes.
    fn lead(&self) -> usize {
        3 - self.spatial_rank
    }

    fn axis_stride(&self, a: usize) -> usize {
        if a >= self.lead() {
            self.stride
        } else {
            1
        }
    }

    #[cfg(test)]
    /// Input coordinate hit by output `o` and kernel tap `k` on axis `a`.
    #[inline]
    fn input_at(&self, a: usize, o: usize, k: usize) -> Option<usize> {
        let i = (o * self.axis_stride(a) + k) as isize - self.pad[a] as isize;
        (i >= 0 && (i as usize) < self.input[a]).then_some(i as usize)
    }

    #[cfg(test)]
    /// Output coordinate that reads input `i` through kernel tap `k` on axis `a`.
    #[inline]
    fn output_at(&self, a: usize, i: usize, k: usize) -> Option<usize> {
        let t = (i + self.pad[a]) as isize - k as isize;
        let s = self.axis_stride(a) as isize;
        if t < 0 || t % s != 0 {
            return None;
        }
        let o = (t / s) as usize;
        (o < self.output[a]).then_some(o)
    }
}

/// Output positions per patch block, bounding the im2col buffer.
const BLOCK_ELEMS: usize = 1 << 21;

impl ConvGeom {
    fn taps(&self) -> usize {
        self.kernel.iter().product()
    }

    fn out_positions(&self) -> usize {
        self.output.iter().product()
    }

    /// Output rows (fixed first two coordinates) handled per block.
    fn block_rows(&self) -> usize {
        let row = self.output[2] * self.taps() * self.cin;
        (BLOCK_ELEMS / row.max(1)).clamp(1, self.rows())
    }

    fn rows(&self) -> usize {
        self.output[0] * self.output[1]
    }

    /// Valid kernel taps `lo..hi` on axis `a` for output coordinate `o`.
    fn tap_range(&self, a: usize, o: usize) -> (usize, usize) {
        let base = (o * self.axis_stride(a)) as isize - self.pad[a] as isize;
        let lo = (-base).clamp(0, self.kernel[a] as isize) as usize;
        let hi = (self.input[a] as isize - base).clamp(0, self.kernel[a] as isize) as usize;
        (lo, hi.max(lo))
    }

    /// Output coordinates `lo..hi` on axis `a` whose tap `k` reads inside
    /// the input.
    fn out_range(&self, a: usize, k: usize) -> (usize, usize) {
        let s = self.axis_stride(a);
        let lo = self.pad[a].saturating_sub(k).div_ceil(s);
        let last = self.input[a] + self.pad[a];
        let hi = if last > k { (last - k - 1) / s + 1 } else { 0 };
        let hi = hi.min(self.output[a]);
        (lo.min(hi), hi)
    }

    /// Calls `f(position, tap, input_offset, len)` for every run of in-bounds
    /// taps of output positions in rows `r0..r1`, with `position` counted
    /// from row `r0`. A run covers `len` consecutive last-axis taps, which
    /// read consecutive input positions.
    fn for_each_tap(&self, r0: usize, r1: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
        let [_, n1, n2] = self.input;
        let [_, kk1, kk2] = self.kernel;
        let [_, o1, o2] = self.output;
        let t1: Vec<_> = (0..o1).map(|b| self.tap_range(1, b)).collect();
        let t2: Vec<_> = (0..o2).map(|c| self.tap_range(2, c)).collect();
        let base = |a: usize, o: usize| o * self.axis_stride(a);
        for r in r0..r1 {
            let (a, b) = (r / o1, r % o1);
            let (l0, h0) = self.tap_range(0, a);
            let (l1, h1) = t1[b];
            for (c, &(l2, h2)) in t2.iter().enumerate() {
                if l2 == h2 {
                    continue;
                }
                let pos = (r - r0) * o2 + c;
                for k0 in l0..h0 {
                    let i0 = base(0, a) + k0 - self.pad[0];
                    for k1 in l1..h1 {
                        let i1 = base(1, b) + k1 - self.pad[1];
                        let i2 = base(2, c) + l2 - self.pad[2];
                        let tap = (k0 * kk1 + k1) * kk2 + l2;
                        f(pos, tap, (i0 * n1 + i1) * n2 + i2, h2 - l2);
                    }
                }
            }
        }
    }

    /// Patch matrix `[positions, taps·cin]` for rows `r0..r1`.
    fn im2col(&self, x: &[f64], r0: usize, r1: usize, buf: &mut Vec<f64>) {
        let cin = self.cin;
        let rows = (r1 - r0) * self.output[2];
        buf.clear();
        buf.resize(rows * self.taps() * cin, 0.0);
        let taps = self.taps();
        self.for_each_tap(r0, r1, |pos, tap, i, n| {
            buf[(pos * taps + tap) * cin..][..n * cin].copy_from_slice(&x[i * cin..][..n * cin]);
        });
    }

    fn row_blocks(&self) -> impl Iterator<Item = (usize, usize)> {
        let step = self.block_rows();
        let n = self.rows();
        (0..n).step_by(step).map(move |r0| (r0, (r0 + step).min(n)))
    }
}

/// Row-major `c = a·b + beta·c` with `a: [m, k]`, `b: [k, n]`, optional transposes.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], at: bool, b: &[f64], bt: bool, beta: f64, c: &mut [f64]) {
    let (rsa, csa) = if at { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if bt { (1, k as isize) } else { (n as isize, 1) };
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the assert above bounds every strided access.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Channel product from which the im2col + GEMM path beats direct loops.
const GEMM_MIN_CHANNELS: usize = 8;

fn use_gemm(g: &ConvGeom) -> bool {
    g.cin * g.cout >= GEMM_MIN_CHANNELS
}

/// Calls `f(tap, y_offset, x_offset, len)` for every in-bounds run of
/// output positions along the last axis, tap-major. Within a run, output
/// positions advance by one and input positions by the stride.
fn for_each_row(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize, usize)) {
    let [_, n1, n2] = g.input;
    let [kk0, kk1, kk2] = g.kernel;
    let [_, o1, o2] = g.output;
    for k0 in 0..kk0 {
        let (a_lo, a_hi) = g.out_range(0, k0);
        for k1 in 0..kk1 {
            let (b_lo, b_hi) = g.out_range(1, k1);
            for k2 in 0..kk2 {
                let (c_lo, c_hi) = g.out_range(2, k2);
                if c_lo >= c_hi {
                    continue;
                }
                let tap = (k0 * kk1 + k1) * kk2 + k2;
                for a in a_lo..a_hi {
                    let i0 = a * g.axis_stride(0) + k0 - g.pad[0];
                    for b in b_lo..b_hi {
                        let i1 = b * g.axis_stride(1) + k1 - g.pad[1];
                        let i2 = c_lo * g.axis_stride(2) + k2 - g.pad[2];
                        f(tap, (a * o1 + b) * o2 + c_lo, (i0 * n1 + i1) * n2 + i2, c_hi - c_lo);
                    }
                }
            }
        }
    }
}

/// `y[o, co] = Σ_k Σ_ci x[o·s + k − pad, ci] · w[k, ci, co]`
pub fn conv_forward(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    if use_gemm(g) {
        return gemm_forward(x, w, g);
    }
    let (cin, cout) = (g.cin, g.cout);
    let xs = g.axis_stride(2) * cin;
    let mut y = vec![0.0; g.out_positions() * cout];
    for_each_row(g, |tap, yo, xo, n| {
        for ci in 0..cin {
            for co in 0..cout {
                let wv = w[(tap * cin + ci) * cout + co];
                let (yb, xb) = (yo * cout + co, xo * cin + ci);
                for j in 0..n {
                    y[yb + j * cout] += wv * x[xb + j * xs];
                }
            }
        }
    });
    y
}

/// Adjoint of `conv_forward` in `x`: `dx[i, ci] = Σ g[o, co] · w[k, ci, co]`.
pub fn conv_input_grad(gy: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    if use_gemm(g) {
        return gemm_input_grad(gy, w, g);
    }
    let (cin, cout) = (g.cin, g.cout);
    let xs = g.axis_stride(2) * cin;
    let mut dx = vec![0.0; g.input.iter().product::<usize>() * cin];
    for_each_row(g, |tap, yo, xo, n| {
        for ci in 0..cin {
            for co in 0..cout {
                let wv = w[(tap * cin + ci) * cout + co];
                let (yb, xb) = (yo * cout + co, xo * cin + ci);
                for j in 0..n {
                    dx[xb + j * xs] += wv * gy[yb + j * cout];
                }
            }
        }
    });
    dx
}

/// Adjoint of `conv_forward` in `w`: `dw[k, ci, co] = Σ_o x[o·s + k − pad, ci] · g[o, co]`.
pub fn conv_weight_grad(x: &[f64], gy: &[f64], g: &ConvGeom) -> Vec<f64> {
    if use_gemm(g) {
        return gemm_weight_grad(x, gy, g);
    }
    let (cin, cout) = (g.cin, g.cout);
    let xs = g.axis_stride(2) * cin;
    let mut dw = vec![0.0; g.taps() * cin * cout];
    for_each_row(g, |tap, yo, xo, n| {
        for ci in 0..cin {
            for co in 0..cout {
                let (yb, xb) = (yo * cout + co, xo * cin + ci);
                let mut acc = 0.0;
                for j in 0..n {
                    acc += gy[yb + j * cout] * x[xb + j * xs];
                }
                dw[(tap * cin + ci) * cout + co] += acc;
            }
        }
    });
    dw
}

fn gemm_forward(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let kc = g.taps() * g.cin;
    let mut y = vec![0.0; g.out_positions() * g.cout];
    let mut patches = Vec::new();
    for (r0, r1) in g.row_blocks() {
        g.im2col(x, r0, r1, &mut patches);
        let rows = (r1 - r0) * g.output[2];
        let out = &mut y[r0 * g.output[2] * g.cout..][..rows * g.cout];
        gemm(rows, kc, g.cout, &patches, false, w, false, 0.0, out);
    }
    y
}

fn gemm_input_grad(gy: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
    let cin = g.cin;
    let kc = g.taps() * cin;
    let mut dx = vec![0.0; g.input.iter().product::<usize>() * cin];
    let mut cols = Vec::new();
    for (r0, r1) in g.row_blocks() {
        let rows = (r1 - r0) * g.output[2];
        cols.clear();
        cols.resize(rows * kc, 0.0);
        let go = &gy[r0 * g.output[2] * g.cout..][..rows * g.cout];
        gemm(rows, g.cout, kc, go, false, w, true, 0.0, &mut cols);
        let taps = g.taps();
        g.for_each_tap(r0, r1, |pos, tap, i, n| {
            let row = &cols[(pos * taps + tap) * cin..][..n * cin];
            for (d, s) in dx[i * cin..][..n * cin].iter_mut().zip(row) {
                *d += s;
            }
        });
    }
    dx
}

fn gemm_weight_grad(x: &[f64], gy: &[f64], g: &ConvGeom) -> Vec<f64> {
    let kc = g.taps() * g.cin;
    let mut dw = vec![0.0; kc * g.cout];
    let mut patches = Vec::new();
    for (i, (r0, r1)) in g.row_blocks().enumerate() {
        g.im2col(x, r0, r1, &mut patches);
        let rows = (r1 - r0) * g.output[2];
        let go = &gy[r0 * g.output[2] * g.cout..][..rows * g.cout];
        let beta = if i == 0 { 0.0 } else { 1.0 };
        gemm(kc, rows, g.cout, &patches, true, go, false, beta, &mut dw);
    }
    dw
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `y[o, co] = Σ_k Σ_ci x[o·s + k − pad, ci] · w[k, ci, co]`
    fn naive_forward(x: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
        let [_, n1, n2] = g.input;
        let [kk0, kk1, kk2] = g.kernel;
        let [o0, o1, o2] = g.output;
        let (cin, cout) = (g.cin, g.cout);
        let mut y = vec![0.0; o0 * o1 * o2 * cout];
        y.chunks_mut(o1 * o2 * cout)
            .enumerate()
            .for_each(|(a, plane)| {
                for b in 0..o1 {
                    for c in 0..o2 {
                        let out = &mut plane[(b * o2 + c) * cout..][..cout];
                        for k0 in 0..kk0 {
                            let Some(i0) = g.input_at(0, a, k0) else { continue };
                            for k1 in 0..kk1 {
                                let Some(i1) = g.input_at(1, b, k1) else { continue };
                                for k2 in 0..kk2 {
                                    let Some(i2) = g.input_at(2, c, k2) else { continue };
                                    let xo = ((i0 * n1 + i1) * n2 + i2) * cin;
                                    let wo = ((k0 * kk1 + k1) * kk2 + k2) * cin * cout;
                                    for ci in 0..cin {
                                        let xv = x[xo + ci];
                                        if xv == 0.0 {
                                            continue;
                                        }
                                        let wr = &w[wo + ci * cout..][..cout];
                                        for (acc, &wv) in out.iter_mut().zip(wr) {
                                            *acc += xv * wv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            });
        y
    }

    /// Adjoint of `conv_forward` in `x`: `dx[i, ci] = Σ g[o, co] · w[k, ci, co]`.
    fn naive_input_grad(gy: &[f64], w: &[f64], g: &ConvGeom) -> Vec<f64> {
        let [_, n1, n2] = g.input;
        let [kk0, kk1, kk2] = g.kernel;
        let [_, o1, o2] = g.output;
        let (cin, cout) = (g.cin, g.cout);
        let mut dx = vec![0.0; g.input.iter().product::<usize>() * cin];
        dx.chunks_mut(n1 * n2 * cin)
            .enumerate()
            .for_each(|(i0, plane)| {
                for i1 in 0..n1 {
                    for i2 in 0..n2 {
                        let acc = &mut plane[(i1 * n2 + i2) * cin..][..cin];
                        for k0 in 0..kk0 {
                            let Some(a) = g.output_at(0, i0, k0) else { continue };
                            for k1 in 0..kk1 {
                                let Some(b) = g.output_at(1, i1, k1) else { continue };
                                for k2 in 0..kk2 {
                                    let Some(c) = g.output_at(2, i2, k2) else { continue };
                                    let go = &gy[((a * o1 + b) * o2 + c) * cout..][..cout];
                                    let wo = ((k0 * kk1 + k1) * kk2 + k2) * cin * cout;
                                    for (ci, slot) in acc.iter_mut().enumerate() {
                                        let wr = &w[wo + ci * cout..][..cout];
                                        let mut s = 0.0;
                                        for (gv, wv) in go.iter().zip(wr) {
                                            s += gv * wv;
                                        }
                                        *slot += s;
                                    }
                                }
                            }
                        }
                    }
                }
            });
        dx
    }

    /// Adjoint of `conv_forward` in `w`: `dw[k, ci, co] = Σ_o x[o·s + k − pad, ci] · g[o, co]`.
    fn naive_weight_grad(x: &[f64], gy: &[f64], g: &ConvGeom) -> Vec<f64> {
        let [_, n1, n2] = g.input;
        let [_, kk1, kk2] = g.kernel;
        let [o0, o1, o2] = g.output;
        let (cin, cout) = (g.cin, g.cout);
        let mut dw = vec![0.0; g.kernel.iter().product::<usize>() * cin * cout];
        dw.chunks_mut(cin * cout)
            .enumerate()
            .for_each(|(tap, block)| {
                let k0 = tap / (kk1 * kk2);
                let k1 = (tap / kk2) % kk1;
                let k2 = tap % kk2;
                for a in 0..o0 {
                    let Some(i0) = g.input_at(0, a, k0) else { continue };
                    for b in 0..o1 {
                        let Some(i1) = g.input_at(1, b, k1) else { continue };
                        for c in 0..o2 {
                            let Some(i2) = g.input_at(2, c, k2) else { continue };
                            let xr = &x[((i0 * n1 + i1) * n2 + i2) * cin..][..cin];
                            let go = &gy[((a * o1 + b) * o2 + c) * cout..][..cout];
                            for (ci, &xv) in xr.iter().enumerate() {
                                if xv == 0.0 {
                                    continue;
                                }
                                let row = &mut block[ci * cout..][..cout];
                                for (acc, &gv) in row.iter_mut().zip(go) {
                                    *acc += xv * gv;
                                }
                            }
                        }
                    }
                }
            });
        dw
    }

    #[test]
    fn same_padding_shapes() {
        assert_eq!(same_padding(1024, 5, 2), (512, 1));
        assert_eq!(same_padding(128, 3, 2), (64, 0));
        assert_eq!(same_padding(96, 3, 2), (48, 0));
        assert_eq!(same_padding(7, 5, 1), (7, 2));
        assert_eq!(same_padding(3, 3, 2), (2, 1));
        assert_eq!(same_padding(1, 3, 2), (1, 1));
    }

    #[test]
    fn geometry_rejects_channel_mismatch() {
        assert!(ConvGeom::new(&[4, 4, 3], &[5, 5, 2, 1], 1).is_err());
        assert!(ConvGeom::new(&[4, 4, 3], &[5, 5, 3], 1).is_err());
    }

    #[test]
    fn ones_input_ones_kernel() {
        let g = ConvGeom::new(&[4, 4, 1], &[5, 5, 1, 1], 1).unwrap();
        let y = conv_forward(&[1.0; 16], &[1.0; 25], &g);
        assert_eq!(y[0], 9.0);
        assert_eq!(y[5], 16.0);
        let g = ConvGeom::new(&[5, 5, 1], &[5, 5, 1, 1], 1).unwrap();
        let y = conv_forward(&[1.0; 25], &[1.0; 25], &g);
        assert_eq!(y[12], 25.0);
        assert_eq!(y[0], 9.0);
    }

    #[test]
    fn adjoint_identity() {
        // <conv(x, w), u> == <x, dx(u, w)> == <w, dw(x, u)>
        let g = ConvGeom::new(&[5, 4, 3, 2], &[3, 3, 3, 2, 3], 2).unwrap();
        let nx = 5 * 4 * 3 * 2;
        let nw = 27 * 2 * 3;
        let x: Vec<f64> = (0..nx).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let w: Vec<f64> = (0..nw).map(|i| ((i * 5 % 13) as f64 - 6.0) / 4.0).collect();
        let no: usize = g.output.iter().product::<usize>() * g.cout;
        let u: Vec<f64> = (0..no).map(|i| ((i * 3 % 7) as f64 - 3.0) / 2.0).collect();
        let y = conv_forward(&x, &w, &g);
        let lhs: f64 = y.iter().zip(&u).map(|(a, b)| a * b).sum();
        let dx = conv_input_grad(&u, &w, &g);
        let mid: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        let dw = conv_weight_grad(&x, &u, &g);
        let rhs: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
        assert!((lhs - mid).abs() < 1e-9 * lhs.abs().max(1.0));
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    fn ramp(n: usize, a: usize, m: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * a % m) as f64 - (m / 2) as f64) / 3.0).collect()
    }

    proptest::proptest! {
        #[test]
        fn gemm_kernels_match_direct_loops(
            n0 in 1usize..7, n1 in 1usize..7, n2 in 1usize..5,
            k in 1usize..4, cin in 1usize..4, cout in 1usize..4,
            stride in 1usize..3, rank3 in proptest::bool::ANY,
        ) {
            let (xs, ws) = if rank3 {
                (vec![n0, n1, n2, cin], vec![k, k, k, cin, cout])
            } else {
                (vec![n0, n1, cin], vec![k, k, cin, cout])
            };
            let g = ConvGeom::new(&xs, &ws, stride).unwrap();
            let x = ramp(xs.iter().product(), 7, 11);
            let w = ramp(ws.iter().product(), 5, 13);
            let u = ramp(g.out_positions() * cout, 3, 7);
            let close = |a: &[f64], b: &[f64]| {
                a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-12 * (1.0 + q.abs()))
            };
            proptest::prop_assert!(close(&conv_forward(&x, &w, &g), &naive_forward(&x, &w, &g)));
            proptest::prop_assert!(close(&conv_input_grad(&u, &w, &g), &naive_input_grad(&u, &w, &g)));
            proptest::prop_assert!(close(&conv_weight_grad(&x, &u, &g), &naive_weight_grad(&x, &u, &g)));
        }
    }

    #[test]
    fn blocked_weight_grad_matches_single_block() {
        let g = ConvGeom::new(&[300, 200, 2], &[5, 5, 2, 3], 1).unwrap();
        assert!(g.block_rows() < g.rows());
        let x = ramp(300 * 200 * 2, 7, 11);
        let u = ramp(g.out_positions() * 3, 3, 7);
        let a = conv_weight_grad(&x, &u, &g);
        let b = naive_weight_grad(&x, &u, &g);
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-9 * (1.0 + q.abs())));
    }
}
