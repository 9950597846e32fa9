use autograd::{Gradients, Tensor};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Bound, ParamSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    /// Epochs between learning-rate drops.
    pub step_size: usize,
    /// Fraction of the rate removed at each drop.
    pub descending_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn validate(&self, prefix: &str, min_batch: usize) -> Result<()> {
        let key = |k: &str| format!("{prefix}.{k}");
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(
                key("lr"),
                format!("learning rate must be positive, got {}", self.lr),
            ));
        }
        if !(self.descending_rate > 0.0 && self.descending_rate < 1.0) {
            return Err(Error::config(
                key("descending_rate"),
                format!("{} is not in (0, 1)", self.descending_rate),
            ));
        }
        if self.step_size == 0 {
            return Err(Error::config(
                key("step_size"),
                "step size must be positive",
            ));
        }
        if self.batch_size < min_batch {
            return Err(Error::config(
                key("batch_size"),
                format!("batch size must be at least {min_batch}"),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::config(key("epochs"), "epoch count must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(key("momentum"), "momentum must be in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config(
                key("weight_decay"),
                "weight decay must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        step_lr(self.lr, self.step_size, self.descending_rate, epoch)
    }
}

/// `initial_lr · (1 − descending_rate)^⌊epoch / step_size⌋`.
pub fn step_lr(initial_lr: f64, step_size: usize, descending_rate: f64, epoch: usize) -> f64 {
    let drops = (epoch / step_size.max(1)) as i32;
    initial_lr * (1.0 - descending_rate).powi(drops)
}

/// Stochastic gradient descent with optional heavy-ball momentum and L2
/// weight decay.
#[derive(Clone, Debug, Default)]
pub struct Sgd {
    momentum: f32,
    weight_decay: f32,
    velocity: IndexMap<String, Tensor<f32>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum: momentum as f32,
            weight_decay: weight_decay as f32,
            velocity: IndexMap::new(),
        }
    }

    /// Applies one update to every parameter of `params` that received a
    /// gradient. With no momentum and no decay this is exactly
    /// `p ← p − lr·g`.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        bound: &Bound<'_>,
        grads: &Gradients<f32>,
        lr: f64,
    ) -> Result<()> {
        let lr = lr as f32;
        for (name, var) in bound.iter() {
            let Some(g) = grads.get(var) else { continue };
            let p = params.get_mut(name).ok_or_else(|| {
                Error::invalid(format!("gradient for unknown parameter `{name}`"))
            })?;
            if self.momentum == 0.0 && self.weight_decay == 0.0 {
                for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                    *w -= lr * d;
                }
                continue;
            }
            let v = self
                .velocity
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            for ((w, vel), &d) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                let d = d + self.weight_decay * *w;
                *vel = self.momentum * *vel + d;
                *w -= lr * *vel;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use autograd::Graph;

    #[test]
    fn schedule_examples() {
        assert_eq!(step_lr(5e-4, 6, 0.5, 5), 5e-4);
        assert_eq!(step_lr(5e-4, 6, 0.5, 6), 2.5e-4);
        assert_eq!(step_lr(0.3, 400, 0.8, 399), 0.3);
        assert!((step_lr(0.3, 400, 0.8, 400) - 0.06).abs() < 1e-15);
        assert_eq!(step_lr(0.1, 3, 0.0, 100), 0.1);
    }

    #[test]
    fn plain_step_is_exact() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        let before = params.clone();
        let g = Graph::new();
        let bound = params.bind(&g, true);
        let w = bound.get("w").unwrap();
        let c = g.constant(Tensor::new(vec![3], vec![0.3, 0.7, -1.1]).unwrap());
        let grads = g.backward(w.mul(c).unwrap().sum()).unwrap();
        Sgd::new(0.0, 0.0)
            .step(&mut params, &bound, &grads, 0.1)
            .unwrap();
        let gw = grads.get(w).unwrap();
        for i in 0..3 {
            let want = before.get("w").unwrap().data()[i] - 0.1f32 * gw.data()[i];
            assert_eq!(params.get("w").unwrap().data()[i], want);
        }
    }

    #[test]
    fn zero_rate_leaves_parameters() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::new(vec![2], vec![1.5, -0.25]).unwrap());
        let before = params.clone();
        let g = Graph::new();
        let bound = params.bind(&g, true);
        let grads = g.backward(bound.get("w").unwrap().exp().sum()).unwrap();
        Sgd::new(0.9, 0.1)
            .step(&mut params, &bound, &grads, 0.0)
            .unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn validation_names_keys() {
        let ok = SgdConfig {
            lr: 0.1,
            step_size: 2,
            descending_rate: 0.5,
            batch_size: 4,
            epochs: 3,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        assert!(ok.validate("pretrain.sgd", 2).is_ok());
        let bad = SgdConfig {
            lr: 0.0,
            ..ok.clone()
        };
        assert!(
            matches!(bad.validate("pretrain.sgd", 2), Err(Error::Config { key, .. }) if key == "pretrain.sgd.lr")
        );
        let bad = SgdConfig {
            descending_rate: 1.0,
            ..ok.clone()
        };
        assert!(bad.validate("p", 2).is_err());
        let bad = SgdConfig {
            batch_size: 1,
            ..ok
        };
        assert!(bad.validate("p", 2).is_err());
    }
}
