//! AdamW with decoupled weight decay.
//!
//! ```text
//! m = b1 m + (1 - b1) g        v = b2 v + (1 - b2) g^2
//! p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
//! p -= lr * wd * p             (decayed parameters only, before the Adam step)
//! ```

use mmsense_tensor::{Float, Gradients, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    /// Global-norm clip; 0 disables.
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            weight_decay: 0.1,
            eps: 1e-8,
            clip_norm: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |b: f64| b > 0.0 && b < 1.0;
        if !open(self.beta1) || !open(self.beta2) {
            return Err(TrainError::Config(format!(
                "betas ({}, {}) must lie in (0, 1)",
                self.beta1, self.beta2
            )));
        }
        if self.weight_decay < 0.0 || self.eps <= 0.0 || self.clip_norm < 0.0 {
            return Err(TrainError::Config(
                "weight_decay, eps and clip_norm must be nonnegative (eps positive)".into(),
            ));
        }
        Ok(())
    }
}

/// Biases and normalisation parameters are never decayed.
pub fn is_decayed(name: &str) -> bool {
    !(name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta"))
}

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub cfg: OptimizerConfig,
    m: Vec<Option<Tensor<T>>>,
    v: Vec<Option<Tensor<T>>>,
    t: u64,
}

impl<T: Float> AdamW<T> {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. Frozen parameters and parameters without a gradient are
    /// left untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(TrainError::Config(format!("learning rate {lr}")));
        }
        let n = store.len();
        self.m.resize(n, None);
        self.v.resize(n, None);
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let clip = match self.cfg.clip_norm {
            c if c > 0.0 => {
                let norm = grads.global_norm();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            _ => 1.0,
        };
        let ids: Vec<_> = grads.iter().map(|(id, _)| id).collect();
        for id in ids {
            if store.is_frozen(id) {
                continue;
            }
            let g = grads.get(id).expect("listed gradient");
            let decay = is_decayed(&store.get(id).name);
            let p = store.value_mut(id);
            if p.shape() != g.shape() {
                return Err(TrainError::Config(format!(
                    "gradient shape {:?} vs parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self.m[id.0].get_or_insert_with(|| Tensor::zeros(p.shape().to_vec()).expect("shape"));
            let v = self.v[id.0].get_or_insert_with(|| Tensor::zeros(p.shape().to_vec()).expect("shape"));
            let wd = if decay { lr * self.cfg.weight_decay } else { 0.0 };
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gf = gi.as_f64() * clip;
                let mf = b1 * mi.as_f64() + (1.0 - b1) * gf;
                let vf = b2 * vi.as_f64() + (1.0 - b2) * gf * gf;
                *mi = T::lit(mf);
                *vi = T::lit(vf);
                let mut x = pi.as_f64();
                x -= wd * x;
                x -= lr * (mf / c1) / ((vf / c2).sqrt() + self.cfg.eps);
                *pi = T::lit(x);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmsense_tensor::Graph;

    #[test]
    fn decay_exclusions() {
        assert!(is_decayed("decoder.lm_head.weight"));
        assert!(!is_decayed("decoder.lm_head.bias"));
        assert!(!is_decayed("projector.block0.ln_self.gamma"));
        assert!(!is_decayed("projector.block0.ln_self.beta"));
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a.weight", Tensor::from_f64([2], &[1.0, -1.0]).unwrap());
        let b = store.add("b.weight", Tensor::from_f64([2], &[1.0, -1.0]).unwrap());
        store.set_frozen(b, true);
        let mut g = Graph::with_params(&store);
        let (va, vb) = (g.param(a), g.param(b));
        let s = g.add(va, vb).unwrap();
        let loss = g.sum(s);
        let grads = g.backward(loss).unwrap();
        let before = store.value(b).clone();
        let mut opt = AdamW::new(OptimizerConfig::default()).unwrap();
        opt.step(&mut store, &grads, 0.1).unwrap();
        assert_eq!(store.value(b), &before);
        assert_ne!(store.value(a).data(), before.data());
    }

    #[test]
    fn bad_betas_rejected() {
        let cfg = OptimizerConfig {
            beta1: 1.0,
            ..Default::default()
        };
        assert!(AdamW::<f32>::new(cfg).is_err());
    }
}
