use autograd::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::params::{kaiming_uniform, Bound, ParamSet};
use crate::error::{Error, Result};

/// `z = W₂·relu(W₁·f + b₁) + b₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionConfig {
    pub hidden: usize,
    pub proj_dim: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ProjectionConfig {
    pub fn desk() -> Self {
        Self {
            hidden: 128,
            proj_dim: 64,
        }
    }

    pub fn paper() -> Self {
        Self {
            hidden: 2048,
            proj_dim: 64,
        }
    }

    pub fn validate(&self, prefix: &str, feature_dim: usize) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config(
                format!("{prefix}.hidden"),
                "hidden width must be positive",
            ));
        }
        if self.proj_dim == 0 || self.proj_dim >= feature_dim {
            return Err(Error::config(
                format!("{prefix}.proj_dim"),
                format!(
                    "{} must be in 1..{feature_dim} (the head compresses)",
                    self.proj_dim
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead {
    pub config: ProjectionConfig,
    pub feature_dim: usize,
    pub params: ParamSet,
}

impl ProjectionHead {
    pub fn init(config: &ProjectionConfig, feature_dim: usize, seed: u64) -> Self {
        let mut params = ParamSet::new();
        params.insert(
            "proj.w1",
            kaiming_uniform(&[feature_dim, config.hidden], feature_dim, seed, "proj.w1"),
        );
        params.insert("proj.b1", Tensor::zeros(&[config.hidden]));
        params.insert(
            "proj.w2",
            kaiming_uniform(
                &[config.hidden, config.proj_dim],
                config.hidden,
                seed,
                "proj.w2",
            ),
        );
        params.insert("proj.b2", Tensor::zeros(&[config.proj_dim]));
        Self {
            config: config.clone(),
            feature_dim,
            params,
        }
    }

    pub fn forward<'g>(bound: &Bound<'g>, f: Var<'g, f32>) -> Result<Var<'g, f32>> {
        let h = f
            .matmul(bound.get("proj.w1")?)?
            .add(bound.get("proj.b1")?)?
            .relu();
        Ok(h.matmul(bound.get("proj.w2")?)?
            .add(bound.get("proj.b2")?)?)
    }

    pub fn project(&self, features: &Tensor<f32>) -> Result<Tensor<f32>> {
        let g = Graph::new();
        let bound = self.params.bind(&g, false);
        let z = Self::forward(&bound, g.constant(features.clone()))?;
        Ok((*z.value()).clone())
    }
}

/// A ladder of fully connected layers, one leaky ReLU after the last of
/// them, then a 2-way output layer and softmax.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub widths: Vec<usize>,
    pub negative_slope: f32,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ClassifierConfig {
    pub const CLASSES: usize = 2;

    /// Paper widths divided by 16.
    pub fn desk() -> Self {
        Self {
            widths: vec![128, 256, 128, 16],
            negative_slope: 0.4,
        }
    }

    pub fn paper() -> Self {
        Self {
            widths: vec![2048, 4096, 2048, 256],
            negative_slope: 0.4,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::config(
                format!("{prefix}.widths"),
                "need at least one non-zero layer width",
            ));
        }
        if self.negative_slope != 0.4 {
            return Err(Error::config(
                format!("{prefix}.negative_slope"),
                "the leaky-relu slope is fixed at 0.4",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub input_dim: usize,
    pub params: ParamSet,
}

impl Classifier {
    pub fn init(config: &ClassifierConfig, input_dim: usize, seed: u64) -> Self {
        let mut params = ParamSet::new();
        let mut fan_in = input_dim;
        for (i, &w) in config.widths.iter().enumerate() {
            let name = format!("fc{i}.w");
            params.insert(&name, kaiming_uniform(&[fan_in, w], fan_in, seed, &name));
            params.insert(format!("fc{i}.b"), Tensor::zeros(&[w]));
            fan_in = w;
        }
        params.insert(
            "out.w",
            kaiming_uniform(&[fan_in, ClassifierConfig::CLASSES], fan_in, seed, "out.w"),
        );
        params.insert("out.b", Tensor::zeros(&[ClassifierConfig::CLASSES]));
        Self {
            config: config.clone(),
            input_dim,
            params,
        }
    }

    /// Pre-softmax scores `[B, 2]`.
    pub fn logits<'g>(&self, bound: &Bound<'g>, f: Var<'g, f32>) -> Result<Var<'g, f32>> {
        let shape = f.shape();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::invalid(format!(
                "classifier expects [B,{}] features, got {shape:?}",
                self.input_dim
            )));
        }
        let mut h = f;
        for i in 0..self.config.widths.len() {
            h = h
                .matmul(bound.get(&format!("fc{i}.w"))?)?
                .add(bound.get(&format!("fc{i}.b"))?)?;
        }
        h = h.leaky_relu(self.config.negative_slope);
        Ok(h.matmul(bound.get("out.w")?)?.add(bound.get("out.b")?)?)
    }

    /// Class probabilities `[B, 2]`; column 1 is the fake probability.
    pub fn forward<'g>(&self, bound: &Bound<'g>, f: Var<'g, f32>) -> Result<Var<'g, f32>> {
        Ok(self.logits(bound, f)?.softmax()?)
    }

    pub fn predict(&self, features: &Tensor<f32>) -> Result<Tensor<f32>> {
        let g = Graph::new();
        let bound = self.params.bind(&g, false);
        let p = self.forward(&bound, g.constant(features.clone()))?;
        Ok((*p.value()).clone())
    }
}
