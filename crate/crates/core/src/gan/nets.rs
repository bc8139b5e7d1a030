//! The generator, the P(·) projection, and the discriminator, with channel
//! counts scaled for desk-size runs.

use std::collections::BTreeMap;

use hg_autodiff::init::he_normal;
use hg_autodiff::{Graph, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HairError, Result};
use crate::mspace::{ModelSpace, FULL_IMG_RES, FULL_VOL_RES};

pub const INPUT_CHANNELS: usize = 4;
pub const K2: usize = 5;
pub const K3: usize = 3;
/// Discriminator feature layers: 0 is the volume, 1–5 the convolutions, 6 the score.
pub const N_FEATURE_LAYERS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub k: usize,
    pub chan_div: usize,
}

impl ScaleConfig {
    pub fn new(k: usize, chan_div: usize) -> Result<Self> {
        let s = Self { k, chan_div };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4, 8].contains(&self.k) {
            return Err(HairError::InvalidArgument(format!(
                "scale divisor must be one of 1, 2, 4, 8; got {}",
                self.k
            )));
        }
        if self.chan_div == 0 {
            return Err(HairError::InvalidArgument("chan_div must be >= 1".into()));
        }
        Ok(())
    }

    /// A full-size channel count divided down, never below one.
    pub fn ch(&self, c: usize) -> usize {
        (c / self.chan_div).max(1)
    }

    pub fn img_res(&self) -> usize {
        FULL_IMG_RES / self.k
    }

    /// `[rows, cols, depth]` of the output volume tensor.
    pub fn vol_shape(&self) -> [usize; 3] {
        let [nx, ny, nz] = FULL_VOL_RES.map(|n| n / self.k);
        [ny, nx, nz]
    }

    pub fn depth(&self) -> usize {
        FULL_VOL_RES[2] / self.k
    }

    pub fn model_space(&self) -> Result<ModelSpace> {
        ModelSpace::scaled(self.k)
    }
}

/// One convolution (or the dense score node) and its parameter names.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    /// Weight shape: `[k, k, cin, cout]`, `[k, k, k, cin, cout]`, or the
    /// dense weight's full input shape.
    pub weight: Vec<usize>,
    pub bias: usize,
    pub fan_in: usize,
}

fn conv2(name: &str, cin: usize, cout: usize) -> LayerSpec {
    LayerSpec {
        name: name.to_string(),
        weight: vec![K2, K2, cin, cout],
        bias: cout,
        fan_in: K2 * K2 * cin,
    }
}

fn conv3(name: &str, cin: usize, cout: usize) -> LayerSpec {
    LayerSpec {
        name: name.to_string(),
        weight: vec![K3, K3, K3, cin, cout],
        bias: cout,
        fan_in: K3 * K3 * K3 * cin,
    }
}

/// Encoder stages as `(cin, mid, cout)`; the third stage's shortcut is strided
/// like its residual path.
fn encoder_stages(s: &ScaleConfig) -> [(usize, usize, usize); 3] {
    [
        (INPUT_CHANNELS, s.ch(8), s.ch(16)),
        (s.ch(16), s.ch(32), s.ch(64)),
        (s.ch(64), s.ch(128), s.ch(256)),
    ]
}

pub fn generator_layers(s: &ScaleConfig) -> Vec<LayerSpec> {
    let mut v = Vec::new();
    for (i, (cin, mid, cout)) in encoder_stages(s).into_iter().enumerate() {
        v.push(conv2(&format!("enc{i}.short"), cin, cout));
        v.push(conv2(&format!("enc{i}.a"), cin, mid));
        v.push(conv2(&format!("enc{i}.b"), mid, cout));
    }
    let c = s.ch(256);
    v.push(conv2("enc3.a", c, c));
    v.push(conv2("enc3.b", c, c));
    for head in ["x", "y", "z"] {
        for r in 0..2 {
            v.push(conv2(&format!("{head}.res{r}.a"), c, c));
            v.push(conv2(&format!("{head}.res{r}.b"), c, c));
        }
        v.push(conv2(&format!("{head}.c1"), c, s.ch(128)));
        v.push(conv2(&format!("{head}.c2"), s.ch(128), s.depth()));
    }
    for r in 0..2 {
        v.push(conv3(&format!("out.res{r}.a"), 3, 3));
        v.push(conv3(&format!("out.res{r}.b"), 3, 3));
    }
    v
}

pub fn pnet_layers(s: &ScaleConfig) -> Vec<LayerSpec> {
    vec![
        conv2("p0", INPUT_CHANNELS, s.ch(32)),
        conv2("p1", s.ch(32), s.ch(64)),
        conv2("p2", s.ch(64), s.ch(128)),
        conv2("p3", s.ch(128), s.depth()),
    ]
}

pub const PNET_STRIDES: [usize; 4] = [2, 2, 2, 1];

/// Extents after `n` stride-2 SAME convolutions.
fn halved(shape: [usize; 3], n: usize) -> [usize; 3] {
    let mut s = shape;
    for _ in 0..n {
        s = s.map(|e| e.div_ceil(2));
    }
    s
}

pub fn disc_channels(s: &ScaleConfig) -> [usize; 5] {
    [32, 64, 128, 256, 512].map(|c| s.ch(c))
}

pub fn discriminator_layers(s: &ScaleConfig) -> Vec<LayerSpec> {
    let ch = disc_channels(s);
    let mut v = Vec::new();
    let mut cin = 4;
    for (i, &c) in ch.iter().enumerate() {
        v.push(conv3(&format!("d{i}"), cin, c));
        cin = c;
    }
    let last = halved(s.vol_shape(), 5);
    let n = last.iter().product::<usize>() * ch[4];
    v.push(LayerSpec {
        name: "zeta".into(),
        weight: vec![last[0], last[1], last[2], ch[4]],
        bias: 1,
        fan_in: n,
    });
    v
}

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    pub tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    /// He-normal weights and zero biases.
    pub fn init<R: Rng + ?Sized>(layers: &[LayerSpec], rng: &mut R) -> Self {
        let mut tensors = BTreeMap::new();
        for l in layers {
            tensors.insert(format!("{}.w", l.name), he_normal(&l.weight, l.fan_in, rng));
            tensors.insert(format!("{}.b", l.name), Tensor::zeros(&[l.bias]));
        }
        Self { tensors }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| HairError::Shape(format!("missing parameter {name}")))
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Checks names and shapes against a layer plan.
    pub fn check(&self, layers: &[LayerSpec]) -> Result<()> {
        let want = Self::shapes(layers);
        if want.len() != self.tensors.len() {
            return Err(HairError::Shape(format!(
                "parameter set has {} tensors, plan needs {}",
                self.tensors.len(),
                want.len()
            )));
        }
        for (name, shape) in want {
            let t = self.get(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(HairError::Shape(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    fn shapes(layers: &[LayerSpec]) -> Vec<(String, Vec<usize>)> {
        layers
            .iter()
            .flat_map(|l| {
                [
                    (format!("{}.w", l.name), l.weight.clone()),
                    (format!("{}.b", l.name), vec![l.bias]),
                ]
            })
            .collect()
    }

    /// Puts every tensor on the graph, as leaves or as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<Bound> {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.tensors {
            let v = if trainable {
                g.leaf(t.clone())?
            } else {
                g.constant(t.clone())?
            };
            vars.insert(name.clone(), v);
        }
        Ok(Bound { vars })
    }
}

/// Graph handles for a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: BTreeMap<String, Var>,
}

impl Bound {
    fn w(&self, layer: &str) -> Var {
        self.vars[&format!("{layer}.w")]
    }

    fn b(&self, layer: &str) -> Var {
        self.vars[&format!("{layer}.b")]
    }

    pub fn all(&self) -> Vec<Var> {
        self.vars.values().copied().collect()
    }
}

/// Convolution, bias, ReLU.
fn crelu(g: &mut Graph, p: &Bound, layer: &str, x: Var, stride: usize) -> Result<Var> {
    let y = g.conv(x, p.w(layer), stride)?;
    let y = g.add_bias(y, p.b(layer))?;
    Ok(g.relu(y)?)
}

/// `shortcut + [a, b]` where the shortcut is either the identity or a conv.
fn residual(
    g: &mut Graph,
    p: &Bound,
    prefix: &str,
    x: Var,
    stride: usize,
    conv_shortcut: bool,
) -> Result<Var> {
    let a = crelu(g, p, &format!("{prefix}.a"), x, stride)?;
    let b = crelu(g, p, &format!("{prefix}.b"), a, 1)?;
    let s = if conv_shortcut {
        crelu(g, p, &format!("{prefix}.short"), x, stride)?
    } else {
        x
    };
    Ok(g.add(s, b)?)
}

fn expect_shape(g: &Graph, v: Var, want: &[usize], what: &str) -> Result<()> {
    if g.shape(v) != want {
        return Err(HairError::Shape(format!(
            "{what}: expected {want:?}, got {:?}",
            g.shape(v)
        )));
    }
    Ok(())
}

/// `X: [R, R, 4] -> Ỹ: [R/8, R/8, D, 3]`, raw (unclamped) values.
pub fn generator_forward(g: &mut Graph, s: &ScaleConfig, p: &Bound, x: Var) -> Result<Var> {
    let mut v = generator_heads(g, s, p, x)?;
    for rr in 0..2 {
        v = residual(g, p, &format!("out.res{rr}"), v, 1, false)?;
    }
    let [a, b, c] = s.vol_shape();
    expect_shape(g, v, &[a, b, c, 3], "generator output")?;
    Ok(v)
}

/// Encoder and the three head blocks: the concatenated 3-channel volume
/// before the final 3D residual stage.
pub fn generator_heads(g: &mut Graph, s: &ScaleConfig, p: &Bound, x: Var) -> Result<Var> {
    let r = s.img_res();
    expect_shape(g, x, &[r, r, INPUT_CHANNELS], "generator input")?;
    let mut h = x;
    for i in 0..3 {
        h = residual(g, p, &format!("enc{i}"), h, 2, true)?;
    }
    h = residual(g, p, "enc3", h, 1, false)?;
    let mut vols = Vec::with_capacity(3);
    for head in ["x", "y", "z"] {
        let mut t = h;
        for rr in 0..2 {
            t = residual(g, p, &format!("{head}.res{rr}"), t, 1, false)?;
        }
        t = crelu(g, p, &format!("{head}.c1"), t, 1)?;
        t = crelu(g, p, &format!("{head}.c2"), t, 1)?;
        vols.push(g.dim_expand(t)?);
    }
    Ok(g.concat_last(&vols)?)
}

/// `X -> [R/8, R/8, D, 1]`.
pub fn pnet_forward(g: &mut Graph, s: &ScaleConfig, p: &Bound, x: Var) -> Result<Var> {
    let r = s.img_res();
    expect_shape(g, x, &[r, r, INPUT_CHANNELS], "P input")?;
    let mut h = x;
    for (i, st) in PNET_STRIDES.into_iter().enumerate() {
        h = crelu(g, p, &format!("p{i}"), h, st)?;
    }
    Ok(g.dim_expand(h)?)
}

/// Feature list `f⁰ … f⁵` followed by the score `f⁶` (shape `[1]`).
pub fn discriminator_features(
    g: &mut Graph,
    s: &ScaleConfig,
    p: &Bound,
    v: Var,
    px: Var,
) -> Result<Vec<Var>> {
    let [a, b, c] = s.vol_shape();
    expect_shape(g, v, &[a, b, c, 3], "discriminator volume")?;
    expect_shape(g, px, &[a, b, c, 1], "discriminator condition")?;
    let mut feats = vec![v];
    let mut h = g.concat_last(&[v, px])?;
    for i in 0..5 {
        h = crelu(g, p, &format!("d{i}"), h, 2)?;
        feats.push(h);
    }
    let score = g.dense(h, p.w("zeta"), p.b("zeta"))?;
    feats.push(score);
    Ok(feats)
}

pub fn discriminator_score(g: &mut Graph, s: &ScaleConfig, p: &Bound, v: Var, px: Var) -> Result<Var> {
    Ok(*discriminator_features(g, s, p, v, px)?.last().expect("score"))
}

/// Extents of features `f⁰ … f⁶` for one sample.
pub fn feature_shapes(s: &ScaleConfig) -> Vec<Vec<usize>> {
    let vol = s.vol_shape();
    let ch = disc_channels(s);
    let mut out = vec![vec![vol[0], vol[1], vol[2], 3]];
    for (i, &c) in ch.iter().enumerate() {
        let e = halved(vol, i + 1);
        out.push(vec![e[0], e[1], e[2], c]);
    }
    out.push(vec![1]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn channel_division_never_reaches_zero() {
        let s = ScaleConfig::new(8, 1024).unwrap();
        assert!(generator_layers(&s).iter().all(|l| l.bias >= 1));
        assert!(ScaleConfig::new(3, 1).is_err());
        assert!(ScaleConfig::new(8, 0).is_err());
    }

    #[test]
    fn zero_output_stage_passes_head_volumes() {
        let s = ScaleConfig::new(8, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamSet::init(&generator_layers(&s), &mut rng);
        for (name, t) in params.tensors.iter_mut() {
            if name.starts_with("out.") {
                *t = Tensor::zeros(t.shape());
            }
        }
        let x = Tensor::from_fn(&[128, 128, 4], |i| ((i * 7919) % 101) as f64 / 101.0);
        let mut g = Graph::new();
        let p = params.bind(&mut g, false).unwrap();
        let xv = g.constant(x).unwrap();
        let y = generator_forward(&mut g, &s, &p, xv).unwrap();
        let heads = generator_heads(&mut g, &s, &p, xv).unwrap();
        assert_eq!(g.shape(y), &[16, 16, 12, 3]);
        assert_eq!(g.value(y), g.value(heads));
    }
}
