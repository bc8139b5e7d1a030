//! Bias-corrected ADAM.

use std::collections::BTreeMap;

use hg_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use super::nets::ParamSet;
use crate::error::{HairError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// One update of a single tensor at step `t ≥ 1`; returns `(param, m, v)`.
pub fn adam_step(
    p: &Tensor,
    g: &Tensor,
    m: &Tensor,
    v: &Tensor,
    t: u64,
    cfg: &AdamConfig,
) -> Result<(Tensor, Tensor, Tensor)> {
    if g.shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape() {
        return Err(HairError::Shape(format!(
            "adam shapes differ: param {:?}, grad {:?}",
            p.shape(),
            g.shape()
        )));
    }
    let t = t.max(1) as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let n = p.len();
    let (mut po, mut mo, mut vo) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let gi = g.data()[i];
        let mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
        let vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
        let step = cfg.lr * (mi / c1) / ((vi / c2).sqrt() + cfg.eps);
        po.push(p.data()[i] - step);
        mo.push(mi);
        vo.push(vi);
    }
    let s = p.shape();
    Ok((Tensor::new(s, po)?, Tensor::new(s, mo)?, Tensor::new(s, vo)?))
}

/// Optimizer state for one or more parameter sets sharing a step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Starts a new step; call once before updating the sets it covers.
    pub fn advance(&mut self) {
        self.t += 1;
    }

    /// Updates every tensor of `params` whose gradient is in `grads`; moment
    /// keys are `prefix` + parameter name.
    pub fn update(
        &mut self,
        prefix: &str,
        params: &mut ParamSet,
        grads: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        for (name, p) in params.tensors.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let key = format!("{prefix}{name}");
            let zeros = || Tensor::zeros(p.shape());
            let m = self.m.get(&key).cloned().unwrap_or_else(zeros);
            let v = self.v.get(&key).cloned().unwrap_or_else(zeros);
            let (np, nm, nv) = adam_step(p, g, &m, &v, self.t, &self.cfg)?;
            *p = np;
            self.m.insert(key.clone(), nm);
            self.v.insert(key, nv);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let cfg = AdamConfig::with_lr(0.1);
        let p = Tensor::filled(&[3], 2.0);
        let z = Tensor::zeros(&[3]);
        let (np, _, _) = adam_step(&p, &z, &z, &z, 1, &cfg).unwrap();
        assert_eq!(np, p);
        let (np, m, v) = adam_step(&p, &Tensor::filled(&[3], 1.0), &z, &z, 1, &cfg).unwrap();
        // β1 = 0: the first moment is the gradient itself; v̂ = 1
        let oracle = 2.0 - 0.1 * 1.0 / (1.0f64.sqrt() + 1e-8);
        assert!(np.data().iter().all(|&x| (x - oracle).abs() < 1e-15));
        assert!(np.data().iter().all(|&x| (x - 1.9).abs() < 1e-8));
        assert_eq!(m.data(), &[1.0; 3]);
        assert!((v.data()[0] - 0.1).abs() < 1e-15);
        assert!(adam_step(&p, &Tensor::zeros(&[2]), &z, &z, 1, &cfg).is_err());
    }

    #[test]
    fn identical_runs_match() {
        let run = || {
            let mut ps = ParamSet::default();
            ps.tensors.insert("w".into(), Tensor::from_fn(&[4], |i| i as f64));
            let mut opt = Adam::new(AdamConfig::with_lr(1e-2));
            for k in 0..5 {
                let g = BTreeMap::from([(
                    "w".to_string(),
                    Tensor::from_fn(&[4], |i| ((i + k) as f64).sin()),
                )]);
                opt.advance();
                opt.update("", &mut ps, &g).unwrap();
            }
            ps
        };
        assert_eq!(run(), run());
    }
}
