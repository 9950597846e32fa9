//! Contrastive pretraining and the frozen-feature probe.

mod pretrain;
mod probe;
mod report;
mod sgd;

pub use pretrain::{calibrate_batch_norm, init_models, pretrain, PretrainSpec, Pretrained};
pub use probe::{
    extract_features, predict_scores, train_probe, FeatureSource, Probe, ProbeModel, Standardizer,
};
pub use report::{EpochRecord, TrainReport};
pub use sgd::{step_lr, Sgd, SgdConfig};
