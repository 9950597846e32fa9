use autograd::{BatchNormMode, Graph, RunningStats, Tensor, Var};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::params::{kaiming_uniform, Bound, ParamSet};
use crate::error::{Error, Result};
use crate::image::Image;

/// Running batch-norm statistics keyed by layer name.
pub type BnState = IndexMap<String, RunningStats<f32>>;

/// Stem convolution followed by depthwise-separable blocks, each
/// `sepconv → BN → ReLU → 2×2 max-pool`, then global average pooling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub input_size: usize,
    pub stem_channels: usize,
    pub stem_stride: usize,
    /// Output channels of each separable block.
    pub widths: Vec<usize>,
    pub feature_dim: usize,
    pub bn_momentum: f32,
    pub bn_eps: f32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl EncoderConfig {
    pub fn desk() -> Self {
        Self {
            input_size: 32,
            stem_channels: 16,
            stem_stride: 1,
            widths: vec![32, 64, 128],
            feature_dim: 128,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    /// 2048-wide features; expressible, not meant for CPU training.
    pub fn paper() -> Self {
        Self {
            input_size: 256,
            stem_channels: 32,
            stem_stride: 2,
            widths: vec![64, 128, 256, 728, 2048],
            feature_dim: 2048,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    pub fn blocks(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        let key = |k: &str| format!("{prefix}.{k}");
        if self.widths.is_empty() || self.widths.contains(&0) || self.stem_channels == 0 {
            return Err(Error::config(
                key("widths"),
                "need at least one block and non-zero widths",
            ));
        }
        if self.widths.last() != Some(&self.feature_dim) {
            return Err(Error::config(
                key("feature_dim"),
                format!(
                    "{} must equal the last block width {:?}",
                    self.feature_dim,
                    self.widths.last()
                ),
            ));
        }
        if self.stem_stride == 0 {
            return Err(Error::config(key("stem_stride"), "stride must be positive"));
        }
        let mut side = self.input_size;
        if side == 0 || !side.is_multiple_of(self.stem_stride) {
            return Err(Error::config(
                key("input_size"),
                "input size must be a positive multiple of the stem stride",
            ));
        }
        side /= self.stem_stride;
        for _ in 0..self.blocks() {
            if side < 2 || !side.is_multiple_of(2) {
                return Err(Error::config(
                    key("input_size"),
                    format!(
                        "{} px does not survive {} halvings",
                        self.input_size,
                        self.blocks()
                    ),
                ));
            }
            side /= 2;
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) || self.bn_eps <= 0.0 {
            return Err(Error::config(
                key("bn_momentum"),
                "momentum must be in (0, 1] and eps positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: ParamSet,
    pub bn: BnState,
}

fn bn_names(config: &EncoderConfig) -> Vec<(String, usize)> {
    std::iter::once(("stem.bn".to_string(), config.stem_channels))
        .chain(
            config
                .widths
                .iter()
                .enumerate()
                .map(|(i, &w)| (format!("block{i}.bn"), w)),
        )
        .collect()
}

impl Encoder {
    pub fn init(config: &EncoderConfig, seed: u64) -> Self {
        let mut params = ParamSet::new();
        let c0 = config.stem_channels;
        params.insert(
            "stem.conv",
            kaiming_uniform(&[c0, 3, 3, 3], 27, seed, "stem.conv"),
        );
        params.insert("stem.bn.gamma", Tensor::ones(&[c0]));
        params.insert("stem.bn.beta", Tensor::zeros(&[c0]));
        let mut cin = c0;
        for (i, &w) in config.widths.iter().enumerate() {
            let dw = format!("block{i}.dw");
            let pw = format!("block{i}.pw");
            params.insert(&dw, kaiming_uniform(&[cin, 1, 3, 3], 9, seed, &dw));
            params.insert(&pw, kaiming_uniform(&[w, cin, 1, 1], cin, seed, &pw));
            params.insert(format!("block{i}.bn.gamma"), Tensor::ones(&[w]));
            params.insert(format!("block{i}.bn.beta"), Tensor::zeros(&[w]));
            cin = w;
        }
        let bn = bn_names(config)
            .into_iter()
            .map(|(name, c)| (name, RunningStats::new(c)))
            .collect();
        Self {
            config: config.clone(),
            params,
            bn,
        }
    }

    /// `[B,3,S,S] → [B, feature_dim]`. Train mode updates the running
    /// statistics in `bn`.
    pub fn forward_with<'g>(
        config: &EncoderConfig,
        bound: &Bound<'g>,
        bn: &mut BnState,
        x: Var<'g, f32>,
        mode: BatchNormMode,
    ) -> Result<Var<'g, f32>> {
        let shape = x.shape();
        let s = config.input_size;
        if shape.len() != 4 || shape[1] != 3 {
            return Err(Error::invalid(format!(
                "encoder expects [B,3,{s},{s}] input, got {shape:?}"
            )));
        }
        if shape[2] != s || shape[3] != s {
            return Err(Error::invalid(format!(
                "encoder expects {s}×{s} input, got {}×{}",
                shape[2], shape[3]
            )));
        }
        let norm = |h: Var<'g, f32>, name: &str, bn: &mut BnState| -> Result<Var<'g, f32>> {
            let stats = bn
                .get_mut(name)
                .ok_or_else(|| Error::invalid(format!("missing running statistics `{name}`")))?;
            Ok(h.batch_norm2d(
                bound.get(&format!("{name}.gamma"))?,
                bound.get(&format!("{name}.beta"))?,
                stats,
                mode,
                config.bn_momentum,
                config.bn_eps,
            )?)
        };
        let mut h = x.conv2d(bound.get("stem.conv")?, config.stem_stride, 1)?;
        h = norm(h, "stem.bn", bn)?.relu();
        for i in 0..config.blocks() {
            h = h.depthwise_separable_conv2d(
                bound.get(&format!("block{i}.dw"))?,
                bound.get(&format!("block{i}.pw"))?,
                1,
                1,
            )?;
            h = norm(h, &format!("block{i}.bn"), bn)?
                .relu()
                .max_pool2d(2, 2)?;
        }
        Ok(h.global_avg_pool2d()?)
    }

    pub fn forward_train<'g>(
        &mut self,
        bound: &Bound<'g>,
        x: Var<'g, f32>,
    ) -> Result<Var<'g, f32>> {
        Self::forward_with(&self.config, bound, &mut self.bn, x, BatchNormMode::Train)
    }

    /// Eval-mode forward; a pure function of the input and parameters.
    pub fn forward_eval<'g>(&self, bound: &Bound<'g>, x: Var<'g, f32>) -> Result<Var<'g, f32>> {
        let mut bn = self.bn.clone();
        Self::forward_with(&self.config, bound, &mut bn, x, BatchNormMode::Eval)
    }

    /// Eval-mode features of a batch of images, without gradient tracking.
    pub fn features(&self, images: &[Image]) -> Result<Tensor<f32>> {
        let g = Graph::new();
        let bound = self.params.bind(&g, false);
        let x = g.constant(images_to_tensor(images)?);
        let f = self.forward_eval(&bound, x)?;
        Ok((*f.value()).clone())
    }

    /// True once every batch-norm layer has running statistics.
    pub fn is_calibrated(&self) -> bool {
        self.bn.values().all(|s| s.updates > 0)
    }
}

/// Stacks equally sized RGB images into `[B,3,H,W]`.
pub fn images_to_tensor(images: &[Image]) -> Result<Tensor<f32>> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("empty image batch"))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if img.channels() != 3 || img.height() != h || img.width() != w {
            return Err(Error::invalid(format!(
                "batch mixes image shapes: 3×{h}×{w} and {}×{}×{}",
                img.channels(),
                img.height(),
                img.width()
            )));
        }
        data.extend_from_slice(img.data());
    }
    Ok(Tensor::new(vec![images.len(), 3, h, w], data)?)
}
