//! Eager computation graph with reverse-mode differentiation.
//!
//! Every op computes its value immediately and records itself. `backward`
//! appends the gradient computation to the same graph using the same
//! primitives, so a function of gradients (a gradient norm, say) can be
//! differentiated again.

use crate::conv::{self, ConvGeom};
use crate::error::{shape_err, AutodiffError, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Square,
    Sqrt,
    Recip,
    Relu,
    Sum,
    BroadcastScalar,
    BroadcastLast,
    SumLeading,
    Reshape,
    ConcatLast(Vec<usize>),
    SliceLast { start: usize },
    PadLast { start: usize },
    Conv(ConvGeom),
    ConvInputGrad(ConvGeom),
    ConvWeightGrad(ConvGeom),
    MatMul,
    Transpose,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Square => "square",
            Op::Sqrt => "sqrt",
            Op::Recip => "recip",
            Op::Relu => "relu",
            Op::Sum => "sum",
            Op::BroadcastScalar => "broadcast_scalar",
            Op::BroadcastLast => "broadcast_last",
            Op::SumLeading => "sum_leading",
            Op::Reshape => "reshape",
            Op::ConcatLast(_) => "concat",
            Op::SliceLast { .. } => "slice",
            Op::PadLast { .. } => "pad",
            Op::Conv(_) => "conv",
            Op::ConvInputGrad(_) => "conv_input_grad",
            Op::ConvWeightGrad(_) => "conv_weight_grad",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
}

/// Topologically ordered record of evaluated ops. Single owner.
#[derive(Default, Clone, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NumericFault(op.name()));
        }
        self.nodes.push(Node { op, inputs, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Leaf, Vec::new(), t)
    }

    /// An input that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Constant, Vec::new(), t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push(Op::Add, vec![a, b], t)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        self.push(Op::Sub, vec![a, b], t)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(Op::Mul, vec![a, b], t)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a).map(|x| c * x);
        self.push(Op::Scale(c), vec![a], t)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| x * x);
        self.push(Op::Square, vec![a], t)
    }

    /// Square root. Its derivative at zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt, vec![a], t)
    }

    /// Reciprocal, with `1/0` defined as 0.
    pub fn recip(&mut self, a: Var) -> Result<Var> {
        let t = self
            .value(a)
            .map(|x| if x == 0.0 { 0.0 } else { 1.0 / x });
        self.push(Op::Recip, vec![a], t)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu, vec![a], t)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let t = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum, vec![a], t)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Repeats a single-element tensor to `shape`.
    pub fn broadcast_scalar(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a);
        if v.len() != 1 {
            return shape_err(format!("broadcast_scalar of shape {:?}", v.shape()));
        }
        let t = Tensor::filled(shape, v.data()[0]);
        self.push(Op::BroadcastScalar, vec![a], t)
    }

    /// Repeats a vector of length `shape.last()` over the leading axes.
    pub fn broadcast_last(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a);
        let c = *shape.last().unwrap_or(&1);
        if v.rank() != 1 || v.len() != c {
            return shape_err(format!(
                "broadcast_last of {:?} to {shape:?}",
                v.shape()
            ));
        }
        let d = v.data();
        let t = Tensor::from_fn(shape, |i| d[i % c]);
        self.push(Op::BroadcastLast, vec![a], t)
    }

    /// Sums over every axis except the last.
    pub fn sum_leading(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let c = *v.shape().last().unwrap_or(&1);
        let mut out = vec![0.0; c];
        for row in v.data().chunks(c) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        let t = Tensor::new(&[c], out)?;
        self.push(Op::SumLeading, vec![a], t)
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let bb = self.broadcast_last(b, &shape)?;
        self.add(x, bb)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshaped(shape)?;
        self.push(Op::Reshape, vec![a], t)
    }

    /// `[h, w, c] -> [h, w, c, 1]`: the channel axis becomes the third spatial axis.
    pub fn dim_expand(&mut self, a: Var) -> Result<Var> {
        let mut shape = self.shape(a).to_vec();
        if shape.len() != 3 {
            return shape_err(format!("dim_expand expects rank 3, got {shape:?}"));
        }
        shape.push(1);
        self.reshape(a, &shape)
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat of nothing");
        };
        let lead = {
            let s = self.shape(first);
            s[..s.len() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return shape_err(format!("concat of {:?} with {:?}", s, lead));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let t = Tensor::new(&shape, data)?;
        self.push(Op::ConcatLast(widths), parts.to_vec(), t)
    }

    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let Some(&c) = s.last() else {
            return shape_err("slice of a scalar");
        };
        if start + len > c {
            return shape_err(format!("slice {start}..{} of {c} channels", start + len));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = s;
        *shape.last_mut().unwrap() = len;
        let t = Tensor::new(&shape, data)?;
        self.push(Op::SliceLast { start }, vec![a], t)
    }

    /// Zero-pads the last axis to `total`, placing `a` at `start`.
    pub fn pad_last(&mut self, a: Var, start: usize, total: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let Some(&c) = s.last() else {
            return shape_err("pad of a scalar");
        };
        if start + c > total {
            return shape_err(format!("pad {c} channels at {start} into {total}"));
        }
        let rows = self.value(a).len() / c.max(1);
        let mut data = vec![0.0; rows * total];
        for (r, row) in self.value(a).data().chunks(c).enumerate() {
            data[r * total + start..r * total + start + c].copy_from_slice(row);
        }
        let mut shape = s;
        *shape.last_mut().unwrap() = total;
        let t = Tensor::new(&shape, data)?;
        self.push(Op::PadLast { start }, vec![a], t)
    }

    /// SAME-padded convolution; 2D for `x: [h, w, cin]`, 3D for `x: [d1, d2, d3, cin]`.
    pub fn conv(&mut self, x: Var, w: Var, stride: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(w), stride)?;
        let y = conv::conv_forward(self.value(x).data(), self.value(w).data(), &geom);
        let t = Tensor::new(&geom.output_shape(), y)?;
        self.push(Op::Conv(geom), vec![x, w], t)
    }

    fn check_shape(&self, v: Var, want: &[usize], what: &str) -> Result<()> {
        if self.shape(v) != want {
            return shape_err(format!(
                "{what}: expected {want:?}, got {:?}",
                self.shape(v)
            ));
        }
        Ok(())
    }

    pub fn conv_input_grad(&mut self, gy: Var, w: Var, geom: ConvGeom) -> Result<Var> {
        self.check_shape(gy, &geom.output_shape(), "conv_input_grad upstream")?;
        self.check_shape(w, &geom.weight_shape(), "conv_input_grad weight")?;
        let dx = conv::conv_input_grad(self.value(gy).data(), self.value(w).data(), &geom);
        let t = Tensor::new(&geom.input_shape(), dx)?;
        self.push(Op::ConvInputGrad(geom), vec![gy, w], t)
    }

    pub fn conv_weight_grad(&mut self, x: Var, gy: Var, geom: ConvGeom) -> Result<Var> {
        self.check_shape(x, &geom.input_shape(), "conv_weight_grad input")?;
        self.check_shape(gy, &geom.output_shape(), "conv_weight_grad upstream")?;
        let dw = conv::conv_weight_grad(self.value(x).data(), self.value(gy).data(), &geom);
        let t = Tensor::new(&geom.weight_shape(), dw)?;
        self.push(Op::ConvWeightGrad(geom), vec![x, gy], t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err(format!("matmul of {sa:?} and {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = da[i * k + p];
                for (o, &bv) in row.iter_mut().zip(&db[p * n..(p + 1) * n]) {
                    *o += av * bv;
                }
            }
        }
        let t = Tensor::new(&[m, n], out)?;
        self.push(Op::MatMul, vec![a, b], t)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return shape_err(format!("transpose of {s:?}"));
        }
        let (m, n) = (s[0], s[1]);
        let d = self.value(a).data();
        let t = Tensor::from_fn(&[n, m], |idx| {
            let (j, i) = (idx / m, idx % m);
            d[i * n + j]
        });
        self.push(Op::Transpose, vec![a], t)
    }

    /// Fully connected scalar node: `w · flatten(x) + b`, output shape `[1]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let n = self.value(x).len();
        if self.value(w).len() != n {
            return shape_err(format!(
                "dense weight has {} entries for {n} inputs",
                self.value(w).len()
            ));
        }
        self.check_shape(b, &[1], "dense bias")?;
        let xf = self.reshape(x, &[n])?;
        let wf = self.reshape(w, &[n])?;
        let p = self.mul(xf, wf)?;
        let s = self.sum(p)?;
        let s = self.reshape(s, &[1])?;
        self.add(s, b)
    }

    /// Gradients of scalar `root` with respect to `wrt`, as new graph nodes.
    ///
    /// Inputs that `root` does not depend on get a zero gradient.
    pub fn backward(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if self.value(root).len() != 1 {
            return Err(AutodiffError::NonScalarRoot(self.shape(root).to_vec()));
        }
        let n = root.0 + 1;
        let mut depends = vec![false; n];
        for w in wrt {
            if w.0 < n {
                depends[w.0] = true;
            }
        }
        for i in 0..n {
            if !depends[i] {
                depends[i] = self.nodes[i].inputs.iter().any(|v| depends[v.0]);
            }
        }

        let mut adj: Vec<Option<Var>> = vec![None; n];
        let seed = Tensor::filled(self.shape(root), 1.0);
        adj[root.0] = Some(self.constant(seed)?);

        for i in (0..n).rev() {
            if !depends[i] {
                continue;
            }
            let Some(u) = adj[i] else { continue };
            let inputs = self.nodes[i].inputs.clone();
            let need: Vec<bool> = inputs.iter().map(|v| depends[v.0]).collect();
            if !need.iter().any(|&b| b) {
                continue;
            }
            let grads = self.vjp(Var(i), u, &need)?;
            for ((inp, g), nd) in inputs.into_iter().zip(grads).zip(need) {
                let (Some(g), true) = (g, nd) else { continue };
                adj[inp.0] = Some(match adj[inp.0] {
                    None => g,
                    Some(prev) => self.add(prev, g)?,
                });
            }
        }

        wrt.iter()
            .map(|&w| match adj.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let z = Tensor::zeros(self.shape(w));
                    self.constant(z)
                }
            })
            .collect()
    }

    /// Vector-Jacobian products of node `y` for upstream adjoint `u`.
    fn vjp(&mut self, y: Var, u: Var, need: &[bool]) -> Result<Vec<Option<Var>>> {
        let node = &self.nodes[y.0];
        let op = node.op.clone();
        let inputs = node.inputs.clone();
        let out = match op {
            Op::Leaf | Op::Constant => vec![],
            Op::Add => vec![Some(u), Some(u)],
            Op::Sub => {
                let nu = if need[1] { Some(self.neg(u)?) } else { None };
                vec![Some(u), nu]
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let ga = if need[0] { Some(self.mul(u, b)?) } else { None };
                let gb = if need[1] { Some(self.mul(u, a)?) } else { None };
                vec![ga, gb]
            }
            Op::Scale(c) => vec![Some(self.scale(u, c)?)],
            Op::Square => {
                let p = self.mul(u, inputs[0])?;
                vec![Some(self.scale(p, 2.0)?)]
            }
            Op::Sqrt => {
                let r = self.recip(y)?;
                let r = self.scale(r, 0.5)?;
                vec![Some(self.mul(u, r)?)]
            }
            Op::Recip => {
                let y2 = self.square(y)?;
                let p = self.mul(u, y2)?;
                vec![Some(self.neg(p)?)]
            }
            Op::Relu => {
                let mask = self.value(inputs[0]).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let m = self.constant(mask)?;
                vec![Some(self.mul(u, m)?)]
            }
            Op::Sum => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![Some(self.broadcast_scalar(u, &shape)?)]
            }
            Op::BroadcastScalar => {
                let s = self.sum(u)?;
                let shape = self.shape(inputs[0]).to_vec();
                vec![Some(self.reshape(s, &shape)?)]
            }
            Op::BroadcastLast => vec![Some(self.sum_leading(u)?)],
            Op::SumLeading => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![Some(self.broadcast_last(u, &shape)?)]
            }
            Op::Reshape => {
                let shape = self.shape(inputs[0]).to_vec();
                vec![Some(self.reshape(u, &shape)?)]
            }
            Op::ConcatLast(widths) => {
                let mut grads = Vec::with_capacity(widths.len());
                let mut start = 0;
                for (w, &nd) in widths.iter().zip(need) {
                    grads.push(if nd {
                        Some(self.slice_last(u, start, *w)?)
                    } else {
                        None
                    });
                    start += w;
                }
                grads
            }
            Op::SliceLast { start } => {
                let total = *self.shape(inputs[0]).last().unwrap();
                vec![Some(self.pad_last(u, start, total)?)]
            }
            Op::PadLast { start } => {
                let len = *self.shape(inputs[0]).last().unwrap();
                vec![Some(self.slice_last(u, start, len)?)]
            }
            Op::Conv(geom) => {
                let (x, w) = (inputs[0], inputs[1]);
                let gx = if need[0] {
                    Some(self.conv_input_grad(u, w, geom)?)
                } else {
                    None
                };
                let gw = if need[1] {
                    Some(self.conv_weight_grad(x, u, geom)?)
                } else {
                    None
                };
                vec![gx, gw]
            }
            Op::ConvInputGrad(geom) => {
                let (gy, w) = (inputs[0], inputs[1]);
                let a = if need[0] {
                    Some(self.conv_with_geom(u, w, geom)?)
                } else {
                    None
                };
                let b = if need[1] {
                    Some(self.conv_weight_grad(u, gy, geom)?)
                } else {
                    None
                };
                vec![a, b]
            }
            Op::ConvWeightGrad(geom) => {
                let (x, gy) = (inputs[0], inputs[1]);
                let a = if need[0] {
                    Some(self.conv_input_grad(gy, u, geom)?)
                } else {
                    None
                };
                let b = if need[1] {
                    Some(self.conv_with_geom(x, u, geom)?)
                } else {
                    None
                };
                vec![a, b]
            }
            Op::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let ga = if need[0] {
                    let bt = self.transpose(b)?;
                    Some(self.matmul(u, bt)?)
                } else {
                    None
                };
                let gb = if need[1] {
                    let at = self.transpose(a)?;
                    Some(self.matmul(at, u)?)
                } else {
                    None
                };
                vec![ga, gb]
            }
            Op::Transpose => vec![Some(self.transpose(u)?)],
        };
        Ok(out)
    }

    fn conv_with_geom(&mut self, x: Var, w: Var, geom: ConvGeom) -> Result<Var> {
        self.check_shape(x, &geom.input_shape(), "conv input")?;
        self.check_shape(w, &geom.weight_shape(), "conv weight")?;
        let y = conv::conv_forward(self.value(x).data(), self.value(w).data(), &geom);
        let t = Tensor::new(&geom.output_shape(), y)?;
        self.push(Op::Conv(geom), vec![x, w], t)
    }
}
