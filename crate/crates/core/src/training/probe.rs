use std::time::Instant;

use autograd::{Graph, Tensor};
use serde::{Deserialize, Serialize};

use super::pretrain::batched;
use super::report::{EpochRecord, TrainReport};
use super::sgd::{Sgd, SgdConfig};
use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Classifier, ClassifierConfig, Encoder, ProjectionHead};
use crate::rng::{self, derive_seed, label_key};

const EXTRACT_CHUNK: usize = 128;

/// Which representation the probe is trained on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    /// Encoder output `f`.
    #[default]
    Encoder,
    /// Projection head output `z`.
    ProjectionHead,
}

impl FeatureSource {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSource::Encoder => "encoder",
            FeatureSource::ProjectionHead => "projection_head",
        }
    }

    pub fn dim(self, encoder: &Encoder, head: &ProjectionHead) -> usize {
        match self {
            FeatureSource::Encoder => encoder.config.feature_dim,
            FeatureSource::ProjectionHead => head.config.proj_dim,
        }
    }
}

/// Eval-mode features of un-augmented model inputs, `[M, dim]`.
pub fn extract_features(
    encoder: &Encoder,
    head: &ProjectionHead,
    source: FeatureSource,
    images: &[Image],
) -> Result<Tensor<f32>> {
    if images.is_empty() {
        return Ok(Tensor::new(vec![0, source.dim(encoder, head)], Vec::new())?);
    }
    batched(images, EXTRACT_CHUNK, source.dim(encoder, head), |chunk| {
        let f = encoder.features(chunk)?;
        match source {
            FeatureSource::Encoder => Ok(f),
            FeatureSource::ProjectionHead => head.project(&f),
        }
    })
}

/// Per-feature affine map `(x − mean)·inv_std` applied before the
/// classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
}

impl Standardizer {
    /// Column statistics of `[M, d]` features. Constant columns keep unit
    /// scale.
    pub fn fit(features: &Tensor<f32>) -> Result<Self> {
        let [m, d] = *features.shape() else {
            return Err(Error::invalid(format!(
                "feature table must be [M, d], got {:?}",
                features.shape()
            )));
        };
        if m == 0 {
            return Err(Error::invalid("cannot standardize an empty feature table"));
        }
        let mut mean = vec![0.0f64; d];
        let mut var = vec![0.0f64; d];
        for row in features.data().chunks(d) {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc += v as f64;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        for row in features.data().chunks(d) {
            for ((acc, &v), mu) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v as f64 - mu).powi(2);
            }
        }
        let inv_std = var
            .iter()
            .map(|&v| {
                let sd = (v / m as f64).sqrt();
                if sd > 1e-12 {
                    (1.0 / sd) as f32
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            mean: mean.into_iter().map(|v| v as f32).collect(),
            inv_std,
        })
    }

    pub fn apply(&self, features: &Tensor<f32>) -> Result<Tensor<f32>> {
        let d = self.mean.len();
        if features.shape().len() != 2 || features.shape()[1] != d {
            return Err(Error::invalid(format!(
                "standardizer expects [M, {d}] features, got {:?}",
                features.shape()
            )));
        }
        let data = features
            .data()
            .chunks(d)
            .flat_map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&self.inv_std)
                    .map(|((&v, &m), &s)| (v - m) * s)
            })
            .collect();
        Ok(Tensor::new(features.shape().to_vec(), data)?)
    }
}

/// A trained probe together with what it needs at inference time.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    pub classifier: Classifier,
    pub standardizer: Option<Standardizer>,
    pub feature_source: FeatureSource,
    /// SHA-256 of the encoder checkpoint the probe was trained on.
    pub encoder_hash: String,
}

impl ProbeModel {
    /// Fake-class probability per feature row.
    pub fn scores(&self, features: &Tensor<f32>) -> Result<Vec<f64>> {
        match &self.standardizer {
            Some(s) => predict_scores(&self.classifier, &s.apply(features)?),
            None => predict_scores(&self.classifier, features),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Probe {
    pub classifier: Classifier,
    pub report: TrainReport,
}

fn rows(features: &Tensor<f32>, idx: &[usize]) -> Tensor<f32> {
    let d = features.shape()[1];
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(&features.data()[i * d..(i + 1) * d]);
    }
    Tensor::new(vec![idx.len(), d], data).expect("row gather")
}

/// Fake-class probability per row.
pub fn predict_scores(classifier: &Classifier, features: &Tensor<f32>) -> Result<Vec<f64>> {
    if features.shape()[0] == 0 {
        return Ok(Vec::new());
    }
    let p = classifier.predict(features)?;
    Ok(p.data().chunks(2).map(|r| r[1] as f64).collect())
}

/// Trains the classifier on frozen features with 2-class cross-entropy.
pub fn train_probe(
    features: &Tensor<f32>,
    labels: &[Label],
    config: &ClassifierConfig,
    sgd_config: &SgdConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Probe> {
    let [m, d] = *features.shape() else {
        return Err(Error::invalid(format!(
            "feature table must be [M, d], got {:?}",
            features.shape()
        )));
    };
    if m != labels.len() {
        return Err(Error::invalid(format!(
            "{m} feature rows but {} labels",
            labels.len()
        )));
    }
    for class in [Label::Real, Label::Fake] {
        if !labels.contains(&class) {
            return Err(Error::invalid(format!(
                "class `{}` absent from training labels",
                class.as_str()
            )));
        }
    }
    if sgd_config.batch_size == 0 {
        return Err(Error::invalid("probe batch size must be positive"));
    }
    let start = Instant::now();
    let mut classifier = Classifier::init(config, d, derive_seed(seed, &[label_key("classifier")]));
    let mut sgd = Sgd::new(sgd_config.momentum, sgd_config.weight_decay);
    let mut records = Vec::with_capacity(sgd_config.epochs);
    let mut order: Vec<usize> = (0..m).collect();

    for epoch in 0..sgd_config.epochs {
        let lr = sgd_config.lr_at(epoch);
        order.sort_unstable();
        rng::shuffle(
            &mut rng::stream(seed, &[label_key("probe-order"), epoch as u64]),
            &mut order,
        );
        let mut total = 0.0;
        for chunk in order.chunks(sgd_config.batch_size) {
            let b = chunk.len();
            let mut onehot = vec![0.0f32; b * 2];
            for (r, &i) in chunk.iter().enumerate() {
                onehot[r * 2 + labels[i].index()] = 1.0;
            }
            let g = Graph::new();
            let bound = classifier.params.bind(&g, true);
            let logits = classifier.logits(&bound, g.constant(rows(features, chunk)))?;
            let loss = logits
                .log_softmax()?
                .mul(g.constant(Tensor::new(vec![b, 2], onehot)?))?
                .sum()
                .mul_scalar(-1.0 / b as f32);
            let value = loss.value().item().unwrap_or(f32::NAN) as f64;
            if !value.is_finite() {
                return Err(Error::invalid(format!(
                    "probe training diverged at epoch {epoch} (loss {value})"
                )));
            }
            let grads = g.backward(loss)?;
            sgd.step(&mut classifier.params, &bound, &grads, lr)?;
            total += value * b as f64;
        }
        let record = EpochRecord {
            epoch,
            loss: total / m as f64,
            lr,
        };
        on_epoch(&record);
        records.push(record);
    }
    let scores = predict_scores(&classifier, features)?;
    let mut report = TrainReport::new("probe", seed, records, start.elapsed().as_secs_f64());
    report.train_accuracy = Some(crate::metrics::accuracy(&scores, labels, 0.5)?);
    Ok(Probe { classifier, report })
}
