//! Binary model checkpoints.
//!
//! Layout: the magic `UCL1`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the JSON header, then the raw
//! little-endian `f32` data of every tensor, contiguous and row-major, in
//! header order.

use std::collections::BTreeMap;
use std::path::Path;

use autograd::{RunningStats, Tensor};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    Classifier, ClassifierConfig, Encoder, EncoderConfig, ParamSet, ProjectionConfig,
    ProjectionHead,
};
use crate::training::{FeatureSource, ProbeModel, Standardizer};

pub const MAGIC: &[u8; 4] = b"UCL1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
    bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: String,
    config_hash: String,
    seed: u64,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Named `f32` tensors plus a JSON metadata blob.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub meta: serde_json::Value,
    pub tensors: IndexMap<String, Tensor<f32>>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let bytes = 4 * t.numel() as u64;
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                    bytes,
                };
                offset += bytes;
                e
            })
            .collect();
        let header = Header {
            kind: self.kind.clone(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            meta: self.meta.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.tensors.values() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// `origin` only labels errors.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |message: String| Error::Checkpoint {
            path: origin.to_path_buf(),
            message,
        };
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a UCL1 checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let payload_start = 16usize
            .checked_add(
                usize::try_from(header_len).map_err(|_| bad("header length overflows".into()))?,
            )
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| bad(format!("header length {header_len} exceeds file size")))?;
        let header: Header = serde_json::from_slice(&bytes[16..payload_start])
            .map_err(|e| bad(format!("bad header: {e}")))?;
        let payload = &bytes[payload_start..];
        let mut expected = 0u64;
        let mut tensors = IndexMap::new();
        for e in header.tensors {
            let numel: usize = e.shape.iter().product();
            if e.offset != expected || e.bytes != 4 * numel as u64 {
                return Err(bad(format!("tensor `{}` has inconsistent offsets", e.name)));
            }
            expected += e.bytes;
            let raw = payload
                .get(e.offset as usize..expected as usize)
                .ok_or_else(|| bad(format!("tensor `{}` runs past the end of the file", e.name)))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(e.shape, data).map_err(|err| bad(err.to_string()))?;
            if tensors.insert(e.name.clone(), t).is_some() {
                return Err(bad(format!("duplicate tensor `{}`", e.name)));
            }
        }
        if expected != payload.len() as u64 {
            return Err(bad(format!(
                "payload is {} bytes, header describes {expected}",
                payload.len()
            )));
        }
        Ok(Self {
            kind: header.kind,
            config_hash: header.config_hash,
            seed: header.seed,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    fn expect_kind(&self, kind: &str, origin: &Path) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Checkpoint {
                path: origin.to_path_buf(),
                message: format!("expected a `{kind}` checkpoint, found `{}`", self.kind),
            })
        }
    }

    fn meta_field<T: for<'de> Deserialize<'de>>(&self, key: &str, origin: &Path) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .cloned()
            .unwrap_or(serde_json::Value::Null);
        serde_json::from_value(v).map_err(|e| Error::Checkpoint {
            path: origin.to_path_buf(),
            message: format!("metadata `{key}`: {e}"),
        })
    }

    fn take_params(
        &mut self,
        names: impl IntoIterator<Item = String>,
        origin: &Path,
    ) -> Result<ParamSet> {
        let mut params = ParamSet::new();
        for name in names {
            let t = self
                .tensors
                .shift_remove(&name)
                .ok_or_else(|| Error::Checkpoint {
                    path: origin.to_path_buf(),
                    message: format!("missing tensor `{name}`"),
                })?;
            params.insert(name, t);
        }
        Ok(params)
    }
}

/// Lowercase hex SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn check_shapes(reference: &ParamSet, loaded: &ParamSet, origin: &Path) -> Result<()> {
    for (name, t) in reference.iter() {
        let got = loaded.get(name)?;
        if got.shape() != t.shape() {
            return Err(Error::Checkpoint {
                path: origin.to_path_buf(),
                message: format!(
                    "tensor `{name}` has shape {:?}, config implies {:?}",
                    got.shape(),
                    t.shape()
                ),
            });
        }
    }
    Ok(())
}

/// Encoder weights, running statistics and projection head.
pub fn encoder_checkpoint(
    encoder: &Encoder,
    head: &ProjectionHead,
    config_hash: &str,
    seed: u64,
) -> Checkpoint {
    let mut tensors = IndexMap::new();
    for (name, t) in encoder.params.iter().chain(head.params.iter()) {
        tensors.insert(name.to_string(), t.clone());
    }
    let mut updates = BTreeMap::new();
    for (layer, stats) in &encoder.bn {
        let c = stats.channels();
        tensors.insert(
            format!("{layer}.running_mean"),
            Tensor::new(vec![c], stats.mean.clone()).expect("stats"),
        );
        tensors.insert(
            format!("{layer}.running_var"),
            Tensor::new(vec![c], stats.var.clone()).expect("stats"),
        );
        updates.insert(layer.clone(), stats.updates);
    }
    Checkpoint {
        kind: "encoder".into(),
        config_hash: config_hash.into(),
        seed,
        meta: serde_json::json!({
            "encoder": encoder.config,
            "projection": head.config,
            "bn_updates": updates,
        }),
        tensors,
    }
}

pub fn load_encoder(path: &Path) -> Result<(Encoder, ProjectionHead, Checkpoint)> {
    let mut ckpt = Checkpoint::load(path)?;
    ckpt.expect_kind("encoder", path)?;
    let enc_cfg: EncoderConfig = ckpt.meta_field("encoder", path)?;
    let proj_cfg: ProjectionConfig = ckpt.meta_field("projection", path)?;
    let updates: BTreeMap<String, u64> = ckpt.meta_field("bn_updates", path)?;
    enc_cfg.validate("encoder").map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut encoder = Encoder::init(&enc_cfg, 0);
    let mut head = ProjectionHead::init(&proj_cfg, enc_cfg.feature_dim, 0);
    let enc_params = ckpt.take_params(
        encoder
            .params
            .iter()
            .map(|(n, _)| n.to_string())
            .collect::<Vec<_>>(),
        path,
    )?;
    let head_params = ckpt.take_params(
        head.params
            .iter()
            .map(|(n, _)| n.to_string())
            .collect::<Vec<_>>(),
        path,
    )?;
    check_shapes(&encoder.params, &enc_params, path)?;
    check_shapes(&head.params, &head_params, path)?;
    encoder.params = enc_params;
    head.params = head_params;
    let layers: Vec<String> = encoder.bn.keys().cloned().collect();
    for layer in layers {
        let take = |ckpt: &mut Checkpoint, suffix: &str| {
            ckpt.tensors
                .shift_remove(&format!("{layer}.{suffix}"))
                .ok_or_else(|| Error::Checkpoint {
                    path: path.to_path_buf(),
                    message: format!("missing tensor `{layer}.{suffix}`"),
                })
        };
        let mean = take(&mut ckpt, "running_mean")?;
        let var = take(&mut ckpt, "running_var")?;
        let stats = encoder.bn.get_mut(&layer).expect("layer exists");
        if mean.numel() != stats.channels() || var.numel() != stats.channels() {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                message: format!("running statistics of `{layer}` have the wrong length"),
            });
        }
        *stats = RunningStats {
            mean: mean.data().to_vec(),
            var: var.data().to_vec(),
            updates: updates.get(&layer).copied().unwrap_or(0),
        };
    }
    if let Some(extra) = ckpt.tensors.keys().next() {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!("unexpected tensor `{extra}`"),
        });
    }
    Ok((encoder, head, ckpt))
}

pub fn probe_checkpoint(model: &ProbeModel, config_hash: &str, seed: u64) -> Checkpoint {
    let mut tensors: IndexMap<String, Tensor<f32>> = model
        .classifier
        .params
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    if let Some(s) = &model.standardizer {
        let d = s.mean.len();
        tensors.insert(
            "input.mean".into(),
            Tensor::new(vec![d], s.mean.clone()).expect("stats"),
        );
        tensors.insert(
            "input.inv_std".into(),
            Tensor::new(vec![d], s.inv_std.clone()).expect("stats"),
        );
    }
    Checkpoint {
        kind: "probe".into(),
        config_hash: config_hash.into(),
        seed,
        meta: serde_json::json!({
            "classifier": model.classifier.config,
            "input_dim": model.classifier.input_dim,
            "feature_source": model.feature_source,
            "encoder_hash": model.encoder_hash,
        }),
        tensors,
    }
}

pub fn load_probe(path: &Path) -> Result<(ProbeModel, Checkpoint)> {
    let mut ckpt = Checkpoint::load(path)?;
    ckpt.expect_kind("probe", path)?;
    let config: ClassifierConfig = ckpt.meta_field("classifier", path)?;
    let input_dim: usize = ckpt.meta_field("input_dim", path)?;
    let feature_source: FeatureSource = ckpt.meta_field("feature_source", path)?;
    let encoder_hash: String = ckpt.meta_field("encoder_hash", path)?;
    let mut classifier = Classifier::init(&config, input_dim, 0);
    let params = ckpt.take_params(
        classifier
            .params
            .iter()
            .map(|(n, _)| n.to_string())
            .collect::<Vec<_>>(),
        path,
    )?;
    check_shapes(&classifier.params, &params, path)?;
    classifier.params = params;
    let standardizer = match (
        ckpt.tensors.shift_remove("input.mean"),
        ckpt.tensors.shift_remove("input.inv_std"),
    ) {
        (Some(m), Some(s)) if m.numel() == input_dim && s.numel() == input_dim => {
            Some(Standardizer {
                mean: m.data().to_vec(),
                inv_std: s.data().to_vec(),
            })
        }
        (None, None) => None,
        _ => {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                message: "incomplete or mis-sized input standardization".into(),
            })
        }
    };
    if let Some(extra) = ckpt.tensors.keys().next() {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: format!("unexpected tensor `{extra}`"),
        });
    }
    Ok((
        ProbeModel {
            classifier,
            standardizer,
            feature_source,
            encoder_hash,
        },
        ckpt,
    ))
}
