use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::kernels;
use crate::ops::Op;
use crate::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeometry {
    fn new(
        op: &'static str,
        input: &[usize],
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let [batch, channels, height, width] = *input else {
            return Err(TensorError::Invalid(format!(
                "{op}: expected a [B,C,H,W] input, got {input:?}"
            )));
        };
        if stride == 0 {
            return Err(TensorError::Invalid(format!(
                "{op}: stride must be positive"
            )));
        }
        let (ph, pw) = (height + 2 * pad, width + 2 * pad);
        if kh > ph || kw > pw {
            return Err(TensorError::KernelTooLarge {
                op,
                kernel: [kh, kw],
                padded: [ph, pw],
            });
        }
        Ok(Self {
            batch,
            channels,
            height,
            width,
            kh,
            kw,
            stride,
            pad,
            out_h: (ph - kh) / stride + 1,
            out_w: (pw - kw) / stride + 1,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn in_plane(&self) -> usize {
        self.height * self.width
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate for output position `o` and kernel offset `k`, or
    /// `None` when it lands in the zero padding.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// Output positions `lo..hi` whose source for offset `k` lies inside
    /// the input.
    fn valid_outputs(&self, k: usize, extent: usize, out: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(k).div_ceil(self.stride);
        let hi = if extent + self.pad > k {
            ((extent + self.pad - 1 - k) / self.stride + 1).min(out)
        } else {
            0
        };
        (lo.min(hi), hi)
    }
}

/// Unfolds one image `[C,H,W]` into `[C·kh·kw, H'·W']`.
fn im2col<T: Element>(g: &ConvGeometry, image: &[T], cols: &mut [T]) {
    let plane = g.out_plane();
    let mut row = 0;
    for c in 0..g.channels {
        let chan = &image[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let iy = g.source(oy, ki, g.height);
                    for ox in 0..g.out_w {
                        dst[oy * g.out_w + ox] = match (iy, g.source(ox, kj, g.width)) {
                            (Some(y), Some(x)) => chan[y * g.width + x],
                            _ => T::zero(),
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `[C·kh·kw, H'·W']` back onto `[C,H,W]`.
fn col2im<T: Element>(g: &ConvGeometry, cols: &[T], image: &mut [T]) {
    let plane = g.out_plane();
    let mut row = 0;
    for c in 0..g.channels {
        let chan = &mut image[c * g.in_plane()..(c + 1) * g.in_plane()];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..g.out_h {
                    let Some(y) = g.source(oy, ki, g.height) else {
                        continue;
                    };
                    for ox in 0..g.out_w {
                        if let Some(x) = g.source(ox, kj, g.width) {
                            chan[y * g.width + x] += src[oy * g.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn conv2d_forward<T: Element>(g: &ConvGeometry, x: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    let filters = w.shape()[0];
    let depth = g.channels * g.kh * g.kw;
    let plane = g.out_plane();
    let mut out = vec![T::zero(); g.batch * filters * plane];
    let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { depth * plane }];
    for b in 0..g.batch {
        let image = &x.data()[b * g.channels * g.in_plane()..(b + 1) * g.channels * g.in_plane()];
        let cols: &[T] = if g.is_pointwise() {
            image
        } else {
            im2col(g, image, &mut cols);
            &cols
        };
        let dst = &mut out[b * filters * plane..(b + 1) * filters * plane];
        kernels::gemm_nn(filters, depth, plane, w.data(), cols, dst);
    }
    Tensor::from_parts(vec![g.batch, filters, g.out_h, g.out_w], out)
}

pub(crate) fn conv2d_backward<T: Element>(
    g: &ConvGeometry,
    grad: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let filters = w.shape()[0];
    let depth = g.channels * g.kh * g.kw;
    let plane = g.out_plane();
    let image_len = g.channels * g.in_plane();
    let mut gx = needs[0].then(|| vec![T::zero(); x.numel()]);
    let mut gw = needs[1].then(|| vec![T::zero(); w.numel()]);
    let mut cols = vec![T::zero(); depth * plane];
    let mut dcols = vec![T::zero(); depth * plane];
    for b in 0..g.batch {
        let dout = &grad.data()[b * filters * plane..(b + 1) * filters * plane];
        let image = &x.data()[b * image_len..(b + 1) * image_len];
        if let Some(gw) = gw.as_mut() {
            let cols: &[T] = if g.is_pointwise() {
                image
            } else {
                im2col(g, image, &mut cols);
                &cols
            };
            kernels::gemm_nt(filters, plane, depth, dout, cols, gw);
        }
        if let Some(gx) = gx.as_mut() {
            let dst = &mut gx[b * image_len..(b + 1) * image_len];
            if g.is_pointwise() {
                kernels::gemm_tn(depth, filters, plane, w.data(), dout, dst);
            } else {
                dcols.iter_mut().for_each(|v| *v = T::zero());
                kernels::gemm_tn(depth, filters, plane, w.data(), dout, &mut dcols);
                col2im(g, &dcols, dst);
            }
        }
    }
    vec![
        gx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
        gw.map(|d| Tensor::from_parts(w.shape().to_vec(), d)),
    ]
}

fn depthwise_forward<T: Element>(g: &ConvGeometry, x: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    let ksize = g.kh * g.kw;
    let mut out = vec![T::zero(); g.batch * g.channels * g.out_plane()];
    for b in 0..g.batch {
        for c in 0..g.channels {
            let bc = b * g.channels + c;
            let chan = &x.data()[bc * g.in_plane()..(bc + 1) * g.in_plane()];
            let kernel = &w.data()[c * ksize..(c + 1) * ksize];
            let dst = &mut out[bc * g.out_plane()..(bc + 1) * g.out_plane()];
            for oy in 0..g.out_h {
                for ki in 0..g.kh {
                    let Some(y) = g.source(oy, ki, g.height) else {
                        continue;
                    };
                    let src = &chan[y * g.width..(y + 1) * g.width];
                    let row = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    for kj in 0..g.kw {
                        let wv = kernel[ki * g.kw + kj];
                        let (lo, hi) = g.valid_outputs(kj, g.width, g.out_w);
                        for ox in lo..hi {
                            row[ox] += wv * src[ox * g.stride + kj - g.pad];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![g.batch, g.channels, g.out_h, g.out_w], out)
}

pub(crate) fn depthwise_backward<T: Element>(
    g: &ConvGeometry,
    grad: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    needs: &[bool],
) -> Vec<Option<Tensor<T>>> {
    let ksize = g.kh * g.kw;
    let mut gx = needs[0].then(|| vec![T::zero(); x.numel()]);
    let mut gw = needs[1].then(|| vec![T::zero(); w.numel()]);
    for b in 0..g.batch {
        for c in 0..g.channels {
            let bc = b * g.channels + c;
            let in_range = bc * g.in_plane()..(bc + 1) * g.in_plane();
            let chan = &x.data()[in_range.clone()];
            let kernel = &w.data()[c * ksize..(c + 1) * ksize];
            let dout = &grad.data()[bc * g.out_plane()..(bc + 1) * g.out_plane()];
            for oy in 0..g.out_h {
                for ki in 0..g.kh {
                    let Some(y) = g.source(oy, ki, g.height) else {
                        continue;
                    };
                    let src = &chan[y * g.width..(y + 1) * g.width];
                    let drow = &dout[oy * g.out_w..(oy + 1) * g.out_w];
                    for kj in 0..g.kw {
                        let k = ki * g.kw + kj;
                        let (lo, hi) = g.valid_outputs(kj, g.width, g.out_w);
                        let mut acc = T::zero();
                        for ox in lo..hi {
                            acc += drow[ox] * src[ox * g.stride + kj - g.pad];
                        }
                        if let Some(gx) = gx.as_mut() {
                            let row = &mut gx
                                [in_range.start + y * g.width..in_range.start + (y + 1) * g.width];
                            let wk = kernel[k];
                            for ox in lo..hi {
                                row[ox * g.stride + kj - g.pad] += drow[ox] * wk;
                            }
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw[c * ksize + k] += acc;
                        }
                    }
                }
            }
        }
    }
    vec![
        gx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
        gw.map(|d| Tensor::from_parts(w.shape().to_vec(), d)),
    ]
}

impl<'g, T: Element> Var<'g, T> {
    /// Cross-correlation of `[B,C,H,W]` with kernels `[F,C,kh,kw]`,
    /// producing `[B,F,H',W']` with `H' = (H + 2·pad − kh)/stride + 1`.
    pub fn conv2d(self, kernels: Var<'g, T>, stride: usize, pad: usize) -> Result<Var<'g, T>> {
        self.graph.check_same(kernels.graph)?;
        let (x, w) = (self.value(), kernels.value());
        let [_, wc, kh, kw] = *w.shape() else {
            return Err(TensorError::Invalid(format!(
                "conv2d: expected [F,C,kh,kw] kernels, got {:?}",
                w.shape()
            )));
        };
        let geom = ConvGeometry::new("conv2d", x.shape(), kh, kw, stride, pad)?;
        if wc != geom.channels {
            return Err(TensorError::ChannelMismatch {
                op: "conv2d",
                expected: geom.channels,
                actual: wc,
            });
        }
        let out = conv2d_forward(&geom, &x, &w);
        Ok(self.graph.record(out, &[self, kernels], Op::Conv2d(geom)))
    }

    /// Per-channel spatial convolution with kernels `[C,1,kh,kw]`.
    pub fn depthwise_conv2d(
        self,
        kernels: Var<'g, T>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'g, T>> {
        self.graph.check_same(kernels.graph)?;
        let (x, w) = (self.value(), kernels.value());
        let [wc, one, kh, kw] = *w.shape() else {
            return Err(TensorError::Invalid(format!(
                "depthwise_conv2d: expected [C,1,kh,kw] kernels, got {:?}",
                w.shape()
            )));
        };
        let geom = ConvGeometry::new("depthwise_conv2d", x.shape(), kh, kw, stride, pad)?;
        if wc != geom.channels || one != 1 {
            return Err(TensorError::ChannelMismatch {
                op: "depthwise_conv2d",
                expected: geom.channels,
                actual: wc,
            });
        }
        let out = depthwise_forward(&geom, &x, &w);
        Ok(self
            .graph
            .record(out, &[self, kernels], Op::DepthwiseConv2d(geom)))
    }

    /// Depthwise convolution followed by a 1×1 pointwise convolution with
    /// kernels `[F,C,1,1]`.
    pub fn depthwise_separable_conv2d(
        self,
        depthwise: Var<'g, T>,
        pointwise: Var<'g, T>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'g, T>> {
        let pw_shape = pointwise.shape();
        let channels = depthwise.shape()[0];
        if pw_shape.len() != 4 || pw_shape[2] != 1 || pw_shape[3] != 1 {
            return Err(TensorError::Invalid(format!(
                "depthwise_separable_conv2d: expected [F,C,1,1] pointwise kernels, got {pw_shape:?}"
            )));
        }
        if pw_shape[1] != channels {
            return Err(TensorError::ChannelMismatch {
                op: "depthwise_separable_conv2d",
                expected: channels,
                actual: pw_shape[1],
            });
        }
        self.depthwise_conv2d(depthwise, stride, pad)?
            .conv2d(pointwise, 1, 0)
    }
}
