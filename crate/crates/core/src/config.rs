//! Run configuration: one JSON document per experiment.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augmentation::AugmentationPolicy;
use crate::contrastive::Denominator;
use crate::dataset::{ArtifactKind, DomainSpec, SplitSpec};
use crate::error::{Error, Result};
use crate::model::{ClassifierConfig, EncoderConfig, ProjectionConfig};
use crate::training::{FeatureSource, PretrainSpec, SgdConfig};

/// A dataset directory (manifest + images) used as a named domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Synthetic domains produced by `gen-data`.
    #[serde(default)]
    pub domains: Vec<DomainSpec>,
    /// Existing datasets on disk.
    #[serde(default)]
    pub datasets: Vec<DatasetSource>,
    /// Domain whose training split feeds pretraining and the probe.
    /// Defaults to the first domain.
    #[serde(default)]
    pub train_domain: String,
    #[serde(default)]
    pub split: SplitSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub sgd: SgdConfig,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub denominator: Denominator,
    #[serde(default)]
    pub projection: ProjectionConfig,
}

fn default_tau() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub sgd: SgdConfig,
    #[serde(default)]
    pub feature_source: FeatureSource,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    /// Standardize each feature with training-set mean and deviation.
    #[serde(default)]
    pub standardize: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Domains evaluated by `eval`; empty means every configured domain.
    pub test_domains: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    /// Seeds each grid cell is repeated with; empty means the run seed.
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub augmentation: AugmentationPolicy,
    #[serde(default)]
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
    pub probe: ProbeConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub ablate: AblateConfig,
}

impl RunConfig {
    /// Three 32 px synthetic domains, mini encoder, CPU-sized schedules.
    pub fn desk() -> Self {
        Self {
            seed: 0,
            data: DataConfig {
                domains: vec![
                    DomainSpec::reference(),
                    DomainSpec::new("synthB", ArtifactKind::BoundarySeam, 0.15, 600, 600, 43),
                    DomainSpec::new("synthC", ArtifactKind::LowpassPatch, 0.5, 600, 600, 44),
                ],
                datasets: Vec::new(),
                train_domain: "synthA".into(),
                split: SplitSpec {
                    test_fraction: 1.0 / 6.0,
                    seed: 0,
                },
            },
            augmentation: AugmentationPolicy::default(),
            encoder: EncoderConfig::desk(),
            pretrain: PretrainConfig {
                sgd: SgdConfig {
                    lr: 5e-4,
                    step_size: 6,
                    descending_rate: 0.5,
                    batch_size: 40,
                    epochs: 20,
                    momentum: 0.0,
                    weight_decay: 0.0,
                },
                tau: 0.5,
                denominator: Denominator::ExcludeSelf,
                projection: ProjectionConfig::desk(),
            },
            probe: ProbeConfig {
                sgd: SgdConfig {
                    lr: 0.03,
                    step_size: 400,
                    descending_rate: 0.8,
                    batch_size: 256,
                    epochs: 500,
                    momentum: 0.0,
                    weight_decay: 0.0,
                },
                feature_source: FeatureSource::Encoder,
                classifier: ClassifierConfig::desk(),
                standardize: true,
            },
            eval: EvalConfig::default(),
            ablate: AblateConfig::default(),
        }
    }

    /// Full-size encoder and heads with the published schedules.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        for d in &mut c.data.domains {
            d.image_size = 256;
        }
        c.data.split.test_fraction = 0.15;
        c.augmentation = AugmentationPolicy::default().with_output_size(256);
        c.encoder = EncoderConfig::paper();
        c.pretrain.projection = ProjectionConfig::paper();
        c.pretrain.sgd.lr = 5e-4;
        c.probe.sgd = SgdConfig {
            lr: 0.3,
            step_size: 400,
            descending_rate: 0.8,
            batch_size: 6000,
            epochs: 5000,
            momentum: 0.0,
            weight_decay: 0.0,
        };
        c.probe.classifier = ClassifierConfig::paper();
        c.probe.standardize = false;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (expected desk or paper)"),
            )),
        }
    }

    /// Parses and validates; missing optional fields take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." {
                "<root>".to_string()
            } else {
                path
            };
            Error::config(key, e.into_inner().to_string())
        })?;
        if config.data.train_domain.is_empty() {
            if let Some(first) = config.domain_names().first() {
                config.data.train_domain = first.clone();
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Pretty JSON with every default written out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }

    /// Synthetic domains first, then datasets, in configuration order.
    pub fn domain_names(&self) -> Vec<String> {
        self.data
            .domains
            .iter()
            .map(|d| d.name.clone())
            .chain(self.data.datasets.iter().map(|d| d.name.clone()))
            .collect()
    }

    pub fn test_domains(&self) -> Vec<String> {
        if self.eval.test_domains.is_empty() {
            self.domain_names()
        } else {
            self.eval.test_domains.clone()
        }
    }

    pub fn ablation_seeds(&self) -> Vec<u64> {
        if self.ablate.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.ablate.seeds.clone()
        }
    }

    pub fn pretrain_spec(&self) -> PretrainSpec {
        PretrainSpec {
            policy: self.augmentation.clone(),
            encoder: self.encoder.clone(),
            projection: self.pretrain.projection.clone(),
            sgd: self.pretrain.sgd.clone(),
            tau: self.pretrain.tau,
            denominator: self.pretrain.denominator,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let names = self.domain_names();
        if names.is_empty() {
            return Err(Error::config(
                "data.domains",
                "at least one domain or dataset must be configured",
            ));
        }
        for (i, d) in self.data.domains.iter().enumerate() {
            d.validate(&format!("data.domains[{i}]"))?;
        }
        for (i, d) in self.data.datasets.iter().enumerate() {
            if d.name.is_empty()
                || !d
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::config(
                    format!("data.datasets[{i}].name"),
                    format!("`{}` is not a valid domain name", d.name),
                ));
            }
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::config(
                "data.domains",
                format!("domain `{dup}` is configured twice"),
            ));
        }
        if !names.contains(&self.data.train_domain) {
            return Err(Error::config(
                "data.train_domain",
                format!("`{}` is not a configured domain", self.data.train_domain),
            ));
        }
        self.data.split.validate("data.split")?;
        self.augmentation.validate("augmentation")?;
        self.encoder.validate("encoder")?;
        if self.augmentation.crop.output_size != self.encoder.input_size {
            return Err(Error::config(
                "augmentation.crop.output_size",
                format!(
                    "must equal encoder.input_size ({})",
                    self.encoder.input_size
                ),
            ));
        }
        self.pretrain.sgd.validate("pretrain.sgd", 2)?;
        if !(self.pretrain.tau > 0.0 && self.pretrain.tau.is_finite()) {
            return Err(Error::config(
                "pretrain.tau",
                format!("temperature must be positive, got {}", self.pretrain.tau),
            ));
        }
        self.pretrain
            .projection
            .validate("pretrain.projection", self.encoder.feature_dim)?;
        self.probe.sgd.validate("probe.sgd", 1)?;
        self.probe.classifier.validate("probe.classifier")?;
        for (i, t) in self.eval.test_domains.iter().enumerate() {
            if !names.contains(t) {
                return Err(Error::config(
                    format!("eval.test_domains[{i}]"),
                    format!("`{t}` is not a configured domain"),
                ));
            }
        }
        Ok(())
    }
}
