use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::ops::Op;
use crate::{Element, Tensor};

fn dims4(op: &'static str, shape: &[usize]) -> Result<[usize; 4]> {
    match *shape {
        [b, c, h, w] => Ok([b, c, h, w]),
        _ => Err(TensorError::Invalid(format!(
            "{op}: expected a [B,C,H,W] input, got {shape:?}"
        ))),
    }
}

pub(crate) fn max_pool_backward<T: Element>(
    grad: &Tensor<T>,
    in_shape: &[usize],
    argmax: &[usize],
) -> Tensor<T> {
    let mut out = Tensor::zeros(in_shape);
    let d = out.data_mut();
    for (&src, &g) in argmax.iter().zip(grad.data()) {
        d[src] += g;
    }
    out
}

pub(crate) fn global_avg_backward<T: Element>(grad: &Tensor<T>, in_shape: &[usize]) -> Tensor<T> {
    let plane = in_shape[2] * in_shape[3];
    let inv = T::one() / T::from_usize(plane).unwrap();
    let data = grad
        .data()
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g * inv, plane))
        .collect();
    Tensor::from_parts(in_shape.to_vec(), data)
}

impl<'g, T: Element> Var<'g, T> {
    /// Max pooling over `k×k` windows with the given stride, no padding.
    /// Ties resolve to the first maximal element in row-major order.
    pub fn max_pool2d(self, k: usize, stride: usize) -> Result<Var<'g, T>> {
        let x = self.value();
        let [b, c, h, w] = dims4("max_pool2d", x.shape())?;
        if k == 0 || stride == 0 || k > h || k > w {
            return Err(TensorError::Invalid(format!(
                "max_pool2d: window {k} stride {stride} invalid for {h}×{w} input"
            )));
        }
        let (oh, ow) = ((h - k) / stride + 1, (w - k) / stride + 1);
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut argmax = Vec::with_capacity(b * c * oh * ow);
        let xd = x.data();
        for bc in 0..b * c {
            let base = bc * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for ky in 0..k {
                        for kx in 0..k {
                            let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        let out = Tensor::from_parts(vec![b, c, oh, ow], out);
        Ok(self.graph.record(out, &[self], Op::MaxPool2d { argmax }))
    }

    /// Mean over the spatial axes: `[B,C,H,W] → [B,C]`.
    pub fn global_avg_pool2d(self) -> Result<Var<'g, T>> {
        let x = self.value();
        let [b, c, h, w] = dims4("global_avg_pool2d", x.shape())?;
        let plane = h * w;
        let inv = T::one() / T::from_usize(plane).unwrap();
        let data = x
            .data()
            .chunks_exact(plane)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        let out = Tensor::from_parts(vec![b, c], data);
        Ok(self.graph.record(out, &[self], Op::GlobalAvgPool))
    }
}
