use std::time::Instant;

use autograd::{BatchNormMode, Graph, Tensor};
use rayon::prelude::*;

use super::report::{EpochRecord, TrainReport};
use super::sgd::{Sgd, SgdConfig};
use crate::augmentation::{make_view_pair, AugmentationPolicy};
use crate::contrastive::{nt_xent_loss, Denominator};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{images_to_tensor, Encoder, EncoderConfig, ProjectionConfig, ProjectionHead};
use crate::rng::{self, derive_seed, label_key};

/// Everything the contrastive stage depends on besides the images.
#[derive(Clone, Debug)]
pub struct PretrainSpec {
    pub policy: AugmentationPolicy,
    pub encoder: EncoderConfig,
    pub projection: ProjectionConfig,
    pub sgd: SgdConfig,
    pub tau: f64,
    pub denominator: Denominator,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Pretrained {
    pub encoder: Encoder,
    pub head: ProjectionHead,
    pub report: TrainReport,
}

/// Initial encoder and head for `seed`; pretraining starts from these.
pub fn init_models(spec: &PretrainSpec) -> (Encoder, ProjectionHead) {
    let encoder = Encoder::init(
        &spec.encoder,
        derive_seed(spec.seed, &[label_key("encoder")]),
    );
    let head = ProjectionHead::init(
        &spec.projection,
        spec.encoder.feature_dim,
        derive_seed(spec.seed, &[label_key("projection")]),
    );
    (encoder, head)
}

/// The per-epoch visiting order.
fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(
        &mut rng::stream(seed, &[label_key("pretrain-order"), epoch as u64]),
        &mut order,
    );
    order
}

/// Contrastive pretraining of encoder and projection head. Takes bare
/// images: labels never reach this stage. The last partial batch of each
/// epoch is dropped.
pub fn pretrain(
    images: &[Image],
    spec: &PretrainSpec,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Pretrained> {
    let batch = spec.sgd.batch_size;
    if batch < 2 {
        return Err(Error::invalid(format!(
            "pretraining batch size must be at least 2, got {batch}"
        )));
    }
    if images.is_empty() {
        return Err(Error::invalid("pretraining needs a non-empty dataset"));
    }
    if images.len() < batch {
        return Err(Error::invalid(format!(
            "dataset of {} images cannot fill one batch of {batch}",
            images.len()
        )));
    }
    if spec.policy.crop.output_size != spec.encoder.input_size {
        return Err(Error::invalid(format!(
            "augmentation output {} px differs from encoder input {} px",
            spec.policy.crop.output_size, spec.encoder.input_size
        )));
    }
    let start = Instant::now();
    let (mut encoder, mut head) = init_models(spec);
    let aug_seed = derive_seed(spec.seed, &[label_key("augment")]);
    let mut sgd = Sgd::new(spec.sgd.momentum, spec.sgd.weight_decay);
    let n = images.len();
    let mut records = Vec::with_capacity(spec.sgd.epochs);

    for epoch in 0..spec.sgd.epochs {
        let lr = spec.sgd.lr_at(epoch);
        let order = epoch_order(n, spec.seed, epoch);
        let mut total = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks_exact(batch) {
            // views are generated in parallel and collected in batch order
            let pairs: Vec<(Image, Image)> = chunk
                .par_iter()
                .map(|&i| {
                    make_view_pair(&images[i], &spec.policy, aug_seed, (epoch * n + i) as u64)
                })
                .collect::<Result<_>>()?;
            let views: Vec<Image> = pairs.into_iter().flat_map(|(a, b)| [a, b]).collect();
            let x = images_to_tensor(&views)?;

            let g = Graph::new();
            let enc_bound = encoder.params.bind(&g, true);
            let head_bound = head.params.bind(&g, true);
            let f = encoder.forward_train(&enc_bound, g.constant(x))?;
            let z = ProjectionHead::forward(&head_bound, f)?;
            let loss = nt_xent_loss(z, spec.tau, spec.denominator)?;
            let value = loss.value().item().unwrap_or(f32::NAN) as f64;
            if !value.is_finite() {
                return Err(Error::invalid(format!(
                    "pretraining diverged at epoch {epoch} (loss {value})"
                )));
            }
            let grads = g.backward(loss)?;
            sgd.step(&mut encoder.params, &enc_bound, &grads, lr)?;
            sgd.step(&mut head.params, &head_bound, &grads, lr)?;
            total += value;
            steps += 1;
        }
        let record = EpochRecord {
            epoch,
            loss: total / steps as f64,
            lr,
        };
        on_epoch(&record);
        records.push(record);
    }
    Ok(Pretrained {
        encoder,
        head,
        report: TrainReport::new(
            "pretrain",
            spec.seed,
            records,
            start.elapsed().as_secs_f64(),
        ),
    })
}

/// Fills the running batch-norm statistics of an untrained encoder from
/// train-mode passes over `images`, leaving the weights untouched. Batch `k`
/// enters with weight `1/(k+1)`, so the result is the plain average over
/// batches.
pub fn calibrate_batch_norm(
    encoder: &mut Encoder,
    images: &[Image],
    batch_size: usize,
) -> Result<()> {
    if images.is_empty() {
        return Err(Error::invalid(
            "cannot calibrate batch norm on an empty dataset",
        ));
    }
    for stats in encoder.bn.values_mut() {
        *stats = autograd::RunningStats::new(stats.channels());
    }
    let mut config = encoder.config.clone();
    for (k, chunk) in images.chunks(batch_size.max(2)).enumerate() {
        config.bn_momentum = 1.0 / (k as f32 + 1.0);
        let g = Graph::new();
        let bound = encoder.params.bind(&g, false);
        let x = g.constant(images_to_tensor(chunk)?);
        Encoder::forward_with(&config, &bound, &mut encoder.bn, x, BatchNormMode::Train)?;
    }
    Ok(())
}

/// Eval-mode features in chunks, as one `[M, dim]` table.
pub(crate) fn batched<F>(images: &[Image], chunk: usize, width: usize, f: F) -> Result<Tensor<f32>>
where
    F: Fn(&[Image]) -> Result<Tensor<f32>> + Sync,
{
    let parts: Vec<Tensor<f32>> = images
        .par_chunks(chunk.max(1))
        .map(&f)
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(images.len() * width);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Ok(Tensor::new(vec![images.len(), width], data)?)
}
