//! Per-channel batch normalization for `[B,C,H,W]` activations.

use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::ops::Op;
use crate::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Normalize with batch statistics and update the running estimates.
    Train,
    /// Normalize with the running estimates.
    Eval,
}

/// Running mean and (unbiased) variance per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Number of train-mode batches folded into the estimates.
    pub updates: u64,
}

impl<T: Element> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            updates: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

pub(crate) struct SavedBatchStats<T> {
    channels: usize,
    plane: usize,
    mean: Vec<T>,
    inv_std: Vec<T>,
    /// Normalized input, kept in train mode only.
    xhat: Vec<T>,
}

pub(crate) fn train_backward<T: Element>(
    saved: &SavedBatchStats<T>,
    grad: &Tensor<T>,
    gamma: &Tensor<T>,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let c = saved.channels;
    let p = saved.plane;
    let g = grad.data();
    let mut sum_g = vec![T::zero(); c];
    let mut sum_g_xhat = vec![T::zero(); c];
    for (k, (gp, xp)) in g.chunks(p).zip(saved.xhat.chunks(p)).enumerate() {
        let ch = k % c;
        let (mut s1, mut s2) = (T::zero(), T::zero());
        for (&gi, &xh) in gp.iter().zip(xp) {
            s1 += gi;
            s2 += gi * xh;
        }
        sum_g[ch] += s1;
        sum_g_xhat[ch] += s2;
    }
    let count = T::from_usize(g.len() / c).unwrap();
    let gx = needs[0].then(|| {
        let mut data = Vec::with_capacity(g.len());
        for (k, (gp, xp)) in g.chunks(p).zip(saved.xhat.chunks(p)).enumerate() {
            let ch = k % c;
            let scale = gamma.data()[ch] * saved.inv_std[ch] / count;
            let (sg, sgx) = (sum_g[ch], sum_g_xhat[ch]);
            data.extend(
                gp.iter()
                    .zip(xp)
                    .map(|(&gi, &xh)| scale * (count * gi - sg - xh * sgx)),
            );
        }
        Tensor::from_parts(grad.shape().to_vec(), data)
    });
    vec![
        gx,
        needs[1].then(|| Tensor::from_parts(vec![c], sum_g_xhat)),
        needs[2].then(|| Tensor::from_parts(vec![c], sum_g)),
    ]
}

pub(crate) fn eval_backward<T: Element>(
    saved: &SavedBatchStats<T>,
    grad: &Tensor<T>,
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let c = saved.channels;
    let p = saved.plane;
    let g = grad.data();
    let mut sum_g = vec![T::zero(); c];
    let mut sum_g_xhat = vec![T::zero(); c];
    for (k, (gp, xp)) in g.chunks(p).zip(x.data().chunks(p)).enumerate() {
        let ch = k % c;
        let (m, is) = (saved.mean[ch], saved.inv_std[ch]);
        for (&gi, &xi) in gp.iter().zip(xp) {
            sum_g[ch] += gi;
            sum_g_xhat[ch] += gi * (xi - m) * is;
        }
    }
    let gx = needs[0].then(|| {
        let mut data = Vec::with_capacity(g.len());
        for (k, gp) in g.chunks(p).enumerate() {
            let scale = gamma.data()[k % c] * saved.inv_std[k % c];
            data.extend(gp.iter().map(|&gi| gi * scale));
        }
        Tensor::from_parts(grad.shape().to_vec(), data)
    });
    vec![
        gx,
        needs[1].then(|| Tensor::from_parts(vec![c], sum_g_xhat)),
        needs[2].then(|| Tensor::from_parts(vec![c], sum_g)),
    ]
}

impl<'g, T: Element> Var<'g, T> {
    /// Batch normalization over `[B,C,H,W]` with affine parameters
    /// `gamma`, `beta` of shape `[C]`.
    ///
    /// Train mode normalizes with the biased batch variance and folds the
    /// batch mean and unbiased variance into `stats` with weight `momentum`.
    /// Eval mode requires at least one prior update.
    pub fn batch_norm2d(
        self,
        gamma: Var<'g, T>,
        beta: Var<'g, T>,
        stats: &mut RunningStats<T>,
        mode: BatchNormMode,
        momentum: T,
        eps: T,
    ) -> Result<Var<'g, T>> {
        self.graph.check_same(gamma.graph)?;
        self.graph.check_same(beta.graph)?;
        let x = self.value();
        let [batch, channels, h, w] = *x.shape() else {
            return Err(TensorError::Invalid(format!(
                "batch_norm2d: expected a [B,C,H,W] input, got {:?}",
                x.shape()
            )));
        };
        for (t, name) in [(gamma.shape(), "gamma"), (beta.shape(), "beta")] {
            if t != [channels] {
                return Err(TensorError::ChannelMismatch {
                    op: if name == "gamma" {
                        "batch_norm2d(gamma)"
                    } else {
                        "batch_norm2d(beta)"
                    },
                    expected: channels,
                    actual: t.first().copied().unwrap_or(0),
                });
            }
        }
        if stats.channels() != channels {
            return Err(TensorError::ChannelMismatch {
                op: "batch_norm2d(running stats)",
                expected: channels,
                actual: stats.channels(),
            });
        }
        let plane = h * w;
        let count = batch * plane;
        let (gv, bv) = (gamma.value(), beta.value());
        let xd = x.data();

        let (mean, inv_std, xhat, op_is_train) = match mode {
            BatchNormMode::Train => {
                if count < 2 {
                    return Err(TensorError::Invalid(format!(
                        "batch_norm2d: train mode needs B·H·W ≥ 2, got {count}"
                    )));
                }
                let n = T::from_usize(count).unwrap();
                let mut mean = vec![T::zero(); channels];
                let mut var = vec![T::zero(); channels];
                for (k, xp) in xd.chunks(plane).enumerate() {
                    mean[k % channels] += xp.iter().fold(T::zero(), |a, &v| a + v);
                }
                mean.iter_mut().for_each(|m| *m = *m / n);
                for (k, xp) in xd.chunks(plane).enumerate() {
                    let m = mean[k % channels];
                    var[k % channels] += xp.iter().fold(T::zero(), |a, &v| a + (v - m) * (v - m));
                }
                var.iter_mut().for_each(|v| *v = *v / n);
                let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                let mut xhat = Vec::with_capacity(xd.len());
                for (k, xp) in xd.chunks(plane).enumerate() {
                    let (m, is) = (mean[k % channels], inv_std[k % channels]);
                    xhat.extend(xp.iter().map(|&v| (v - m) * is));
                }
                let unbias = n / (n - T::one());
                for ch in 0..channels {
                    stats.mean[ch] = (T::one() - momentum) * stats.mean[ch] + momentum * mean[ch];
                    stats.var[ch] =
                        (T::one() - momentum) * stats.var[ch] + momentum * var[ch] * unbias;
                }
                stats.updates += 1;
                (mean, inv_std, xhat, true)
            }
            BatchNormMode::Eval => {
                if stats.updates == 0 {
                    return Err(TensorError::MissingRunningStats);
                }
                let inv_std = stats
                    .var
                    .iter()
                    .map(|&v| T::one() / (v + eps).sqrt())
                    .collect();
                (stats.mean.clone(), inv_std, Vec::new(), false)
            }
        };

        let mut out = Vec::with_capacity(xd.len());
        for (k, xp) in xd.chunks(plane).enumerate() {
            let ch = k % channels;
            let (gm, bt) = (gv.data()[ch], bv.data()[ch]);
            if op_is_train {
                out.extend(
                    xhat[k * plane..(k + 1) * plane]
                        .iter()
                        .map(|&h| gm * h + bt),
                );
            } else {
                let (m, is) = (mean[ch], inv_std[ch]);
                out.extend(xp.iter().map(|&v| gm * ((v - m) * is) + bt));
            }
        }
        let saved = SavedBatchStats {
            channels,
            plane,
            mean,
            inv_std,
            xhat,
        };
        let op = if op_is_train {
            Op::BatchNormTrain(saved)
        } else {
            Op::BatchNormEval(saved)
        };
        Ok(self.graph.record(
            Tensor::from_parts(x.shape().to_vec(), out),
            &[self, gamma, beta],
            op,
        ))
    }
}
