//! Critic loss with gradient penalty, the baseline adversarial generator
//! loss, and the feature-space content and style losses.

use hg_autodiff::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::nets::{discriminator_features, pnet_forward, Bound, ScaleConfig};
use crate::error::{HairError, Result};

pub const CONTENT_LAYERS: [usize; 3] = [0, 3, 6];
pub const STYLE_LAYERS: [usize; 5] = [0, 1, 2, 3, 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub content_layers: Vec<usize>,
    pub style_layers: Vec<usize>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-2,
            beta: 5.0,
            lambda: 10.0,
            content_layers: CONTENT_LAYERS.to_vec(),
            style_layers: STYLE_LAYERS.to_vec(),
        }
    }
}

/// Generator objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `α·content + β·style` in critic feature space.
    FeatureMatch,
    /// `−E[D(Ỹ, P(X))]`.
    Wasserstein,
}

fn scalar(g: &mut Graph, v: Var) -> Result<Var> {
    Ok(g.reshape(v, &[])?)
}

/// `A = Fᵀ F` with `F: [M, N]` the feature map flattened over space.
pub fn gram(g: &mut Graph, f: Var) -> Result<Var> {
    let shape = g.shape(f).to_vec();
    let n = *shape.last().unwrap_or(&1);
    let m = shape.iter().product::<usize>() / n.max(1);
    let flat = g.reshape(f, &[m, n])?;
    let t = g.transpose(flat)?;
    Ok(g.matmul(t, flat)?)
}

fn check_layers(layers: &[usize], available: usize) -> Result<()> {
    if let Some(l) = layers.iter().find(|&&l| l >= available) {
        return Err(HairError::Shape(format!(
            "feature layer {l} out of range (have {available})"
        )));
    }
    Ok(())
}

/// `Σ_l ½ Σ (f^l(Y) − f^l(Ỹ))²`.
pub fn content_loss(g: &mut Graph, fy: &[Var], ft: &[Var], layers: &[usize]) -> Result<Var> {
    check_layers(layers, fy.len().min(ft.len()))?;
    let mut total = g.constant(Tensor::scalar(0.0))?;
    for &l in layers {
        let d = g.sub(fy[l], ft[l])?;
        let sq = g.square(d)?;
        let s = g.sum(sq)?;
        let s = g.scale(s, 0.5)?;
        total = g.add(total, s)?;
    }
    Ok(total)
}

/// `Σ_l (1 / 4N²M²) Σ_ij (A^l(Y) − A^l(Ỹ))²`.
pub fn style_loss(g: &mut Graph, fy: &[Var], ft: &[Var], layers: &[usize]) -> Result<Var> {
    check_layers(layers, fy.len().min(ft.len()))?;
    let mut total = g.constant(Tensor::scalar(0.0))?;
    for &l in layers {
        let shape = g.shape(fy[l]).to_vec();
        let n = *shape.last().unwrap_or(&1) as f64;
        let m = shape.iter().product::<usize>() as f64 / n;
        let a = gram(g, fy[l])?;
        let b = gram(g, ft[l])?;
        let d = g.sub(a, b)?;
        let sq = g.square(d)?;
        let s = g.sum(sq)?;
        let s = g.scale(s, 1.0 / (4.0 * n * n * m * m))?;
        total = g.add(total, s)?;
    }
    Ok(total)
}

/// One sample's critic loss `D(Ỹ) − D(Y) + λ(‖∇_Ŷ D(Ŷ)‖ − 1)²` with
/// `Ŷ = εY + (1−ε)Ỹ`. `fake` must not depend on the critic parameters.
#[allow(clippy::too_many_arguments)]
pub fn critic_loss(
    g: &mut Graph,
    s: &ScaleConfig,
    pd: &Bound,
    pp: &Bound,
    x: Var,
    real: Var,
    fake: Var,
    eps: f64,
    lambda: f64,
) -> Result<Var> {
    let px = pnet_forward(g, s, pp, x)?;
    let d_fake = critic_score(g, s, pd, fake, px)?;
    let d_real = critic_score(g, s, pd, real, px)?;
    let mixed = g
        .value(real)
        .zip_map(g.value(fake), |r, f| eps * r + (1.0 - eps) * f)?;
    let mixed = g.leaf(mixed)?;
    let d_mixed = critic_score(g, s, pd, mixed, px)?;
    let grad = g.backward(d_mixed, &[mixed])?[0];
    let sq = g.square(grad)?;
    let norm2 = g.sum(sq)?;
    let norm = g.sqrt(norm2)?;
    let one = g.constant(Tensor::scalar(1.0))?;
    let gap = g.sub(norm, one)?;
    let pen = g.square(gap)?;
    let pen = g.scale(pen, lambda)?;
    let wd = g.sub(d_fake, d_real)?;
    Ok(g.add(wd, pen)?)
}

fn critic_score(g: &mut Graph, s: &ScaleConfig, pd: &Bound, v: Var, px: Var) -> Result<Var> {
    let f = discriminator_features(g, s, pd, v, px)?;
    scalar(g, *f.last().expect("score"))
}

/// Parts of one sample's generator loss.
pub struct GeneratorTerms {
    pub total: Var,
    pub content: Var,
    pub style: Var,
    pub content0: Var,
}

/// Generator loss for one sample under `objective`; the content and style
/// terms are always built so they can be logged.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss(
    g: &mut Graph,
    s: &ScaleConfig,
    cfg: &LossConfig,
    objective: Objective,
    pd: &Bound,
    pp: &Bound,
    x: Var,
    real: Var,
    fake: Var,
) -> Result<GeneratorTerms> {
    let px = pnet_forward(g, s, pp, x)?;
    let fy = discriminator_features(g, s, pd, real, px)?;
    let ft = discriminator_features(g, s, pd, fake, px)?;
    let content = content_loss(g, &fy, &ft, &cfg.content_layers)?;
    let style = style_loss(g, &fy, &ft, &cfg.style_layers)?;
    let content0 = content_loss(g, &fy, &ft, &[0])?;
    let total = match objective {
        Objective::FeatureMatch => {
            let a = g.scale(content, cfg.alpha)?;
            let b = g.scale(style, cfg.beta)?;
            g.add(a, b)?
        }
        Objective::Wasserstein => {
            let sc = scalar(g, *ft.last().expect("score"))?;
            g.neg(sc)?
        }
    };
    Ok(GeneratorTerms {
        total,
        content,
        style,
        content0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_examples() {
        let mut g = Graph::new();
        // two feature maps over two positions: rows are positions
        let f = g.constant(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 2.0]).unwrap()).unwrap();
        let a = gram(&mut g, f).unwrap();
        assert_eq!(g.value(a).data(), &[1.0, 0.0, 0.0, 4.0]);
        let dup = g.constant(Tensor::new(&[3, 2], vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap()).unwrap();
        let a = gram(&mut g, dup).unwrap();
        let d = g.value(a).data();
        assert!(d.iter().all(|&v| v == d[0]));
    }

    #[test]
    fn content_and_style_examples() {
        let mut g = Graph::new();
        let y = Tensor::from_fn(&[4, 4, 3, 3], |i| (i as f64 * 0.37).sin());
        let yv = g.constant(y.clone()).unwrap();
        let shifted = g.constant(y.map(|v| v - 0.1)).unwrap();
        let c = content_loss(&mut g, &[yv], &[shifted], &[0]).unwrap();
        let m0 = 4.0 * 4.0 * 3.0;
        assert!((g.value(c).item() - 0.5 * 3.0 * m0 * 0.01).abs() < 1e-12);
        let same = content_loss(&mut g, &[yv], &[yv], &[0]).unwrap();
        assert_eq!(g.value(same).item(), 0.0);

        // permuting spatial positions keeps the Gram matrix
        let d = y.data();
        let n = d.len() / 3;
        let perm = Tensor::from_fn(&[4, 4, 3, 3], |i| {
            let (p, c) = (i / 3, i % 3);
            d[((p * 7) % n) * 3 + c]
        });
        let pv = g.constant(perm).unwrap();
        let st = style_loss(&mut g, &[yv], &[pv], &[0]).unwrap();
        assert!(g.value(st).item() < 1e-20);
        let ct = content_loss(&mut g, &[yv], &[pv], &[0]).unwrap();
        assert!(g.value(ct).item() > 0.0);
        assert!(style_loss(&mut g, &[yv], &[pv], &[1]).is_err());
    }

    use crate::gan::nets::{discriminator_layers, pnet_layers, ParamSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> ScaleConfig {
        ScaleConfig::new(8, 16).unwrap()
    }

    fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
    }

    fn inputs(s: &ScaleConfig, rng: &mut ChaCha8Rng) -> (Tensor, Tensor, Tensor) {
        let r = s.img_res();
        let [a, b, c] = s.vol_shape();
        (
            uniform(&[r, r, 4], 0.1, 0.9, rng),
            uniform(&[a, b, c, 3], 0.1, 0.9, rng),
            uniform(&[a, b, c, 3], 0.1, 0.9, rng),
        )
    }

    fn positive(p: &ParamSet) -> ParamSet {
        ParamSet {
            tensors: p.tensors.iter().map(|(k, t)| (k.clone(), t.map(f64::abs))).collect(),
        }
    }

    fn critic_value(s: &ScaleConfig, d: &ParamSet, p: &ParamSet, x: &Tensor, y: &Tensor, t: &Tensor, eps: f64) -> f64 {
        let mut g = Graph::new();
        let pd = d.bind(&mut g, true).unwrap();
        let pp = p.bind(&mut g, true).unwrap();
        let (xv, yv, tv) = (g.constant(x.clone()).unwrap(), g.constant(y.clone()).unwrap(), g.constant(t.clone()).unwrap());
        let l = critic_loss(&mut g, s, &pd, &pp, xv, yv, tv, eps, 10.0).unwrap();
        g.value(l).item()
    }

    #[test]
    fn zero_critic_pays_the_full_penalty() {
        let s = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y, t) = inputs(&s, &mut rng);
        let d = ParamSet::init(&discriminator_layers(&s), &mut rng).zeros_like();
        let p = ParamSet::init(&pnet_layers(&s), &mut rng);
        assert_eq!(critic_value(&s, &d, &p, &x, &y, &t, 0.3), 10.0);
    }

    #[test]
    fn unit_slope_linear_critic_on_equal_inputs_is_zero() {
        let s = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y, _) = inputs(&s, &mut rng);
        // positive weights on positive inputs keep every ReLU in its linear part
        let mut d = positive(&ParamSet::init(&discriminator_layers(&s), &mut rng));
        let p = positive(&ParamSet::init(&pnet_layers(&s), &mut rng));
        let mut g = Graph::new();
        let pd = d.bind(&mut g, false).unwrap();
        let pp = p.bind(&mut g, false).unwrap();
        let xv = g.constant(x.clone()).unwrap();
        let yv = g.leaf(y.clone()).unwrap();
        let px = pnet_forward(&mut g, &s, &pp, xv).unwrap();
        let score = critic_score(&mut g, &s, &pd, yv, px).unwrap();
        let grad = g.backward(score, &[yv]).unwrap()[0];
        let norm = g.value(grad).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0);
        for name in ["zeta.w", "zeta.b"] {
            let t = d.tensors[name].map(|v| v / norm);
            d.tensors.insert(name.into(), t);
        }
        let l = critic_value(&s, &d, &p, &x, &y, &y, 0.7);
        assert!(l.abs() < 1e-9, "L_D = {l}");
    }

    fn generator_value(s: &ScaleConfig, cfg: &LossConfig, obj: Objective, d: &ParamSet, p: &ParamSet, x: &Tensor, y: &Tensor, t: &Tensor) -> (f64, f64, f64) {
        let mut g = Graph::new();
        let pd = d.bind(&mut g, false).unwrap();
        let pp = p.bind(&mut g, false).unwrap();
        let (xv, yv, tv) = (g.constant(x.clone()).unwrap(), g.constant(y.clone()).unwrap(), g.constant(t.clone()).unwrap());
        let r = generator_loss(&mut g, s, cfg, obj, &pd, &pp, xv, yv, tv).unwrap();
        (g.value(r.total).item(), g.value(r.content).item(), g.value(r.style).item())
    }

    #[test]
    fn constant_critic_gives_negated_score() {
        let s = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y, t) = inputs(&s, &mut rng);
        let mut d = ParamSet::init(&discriminator_layers(&s), &mut rng).zeros_like();
        d.tensors.insert("zeta.b".into(), Tensor::new(&[1], vec![2.5]).unwrap());
        let p = ParamSet::init(&pnet_layers(&s), &mut rng);
        let (l, _, _) = generator_value(&s, &LossConfig::default(), Objective::Wasserstein, &d, &p, &x, &y, &t);
        assert_eq!(l, -2.5);
    }

    #[test]
    fn feature_match_examples() {
        let s = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, y, t) = inputs(&s, &mut rng);
        let d = ParamSet::init(&discriminator_layers(&s), &mut rng);
        let p = ParamSet::init(&pnet_layers(&s), &mut rng);
        let cfg = LossConfig::default();
        assert_eq!((cfg.alpha, cfg.beta, cfg.lambda), (1e-2, 5.0, 10.0));
        let (same, c0, s0) = generator_value(&s, &cfg, Objective::FeatureMatch, &d, &p, &x, &y, &y);
        assert_eq!((same, c0, s0), (0.0, 0.0, 0.0));
        let (full, content, style) = generator_value(&s, &cfg, Objective::FeatureMatch, &d, &p, &x, &y, &t);
        assert!(content > 0.0 && style > 0.0);
        assert!((full - (cfg.alpha * content + cfg.beta * style)).abs() <= 1e-12 * full);
        let no_alpha = LossConfig { alpha: 0.0, ..cfg.clone() };
        let (l, _, st) = generator_value(&s, &no_alpha, Objective::FeatureMatch, &d, &p, &x, &y, &t);
        assert_eq!(l, cfg.beta * st);
    }
}
