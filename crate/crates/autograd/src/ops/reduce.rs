use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::ops::Op;
use crate::{Element, Tensor};

/// Splits `shape` around `axis` into (outer, extent, inner) strides.
fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn sum_axis_backward<T: Element>(
    grad: &Tensor<T>,
    in_shape: &[usize],
    axis: usize,
) -> Tensor<T> {
    let (outer, extent, inner) = split(in_shape, axis);
    let g = grad.data();
    let mut out = vec![T::zero(); outer * extent * inner];
    for o in 0..outer {
        for e in 0..extent {
            let dst = &mut out[(o * extent + e) * inner..(o * extent + e + 1) * inner];
            dst.copy_from_slice(&g[o * inner..(o + 1) * inner]);
        }
    }
    Tensor::from_parts(in_shape.to_vec(), out)
}

impl<'g, T: Element> Var<'g, T> {
    /// Sum of all elements as a scalar.
    pub fn sum(self) -> Var<'g, T> {
        let s = self.value().sum_all();
        self.graph.record(Tensor::scalar(s), &[self], Op::SumAll)
    }

    pub fn mean(self) -> Var<'g, T> {
        let v = self.value();
        let s = v.sum_all() / T::from_usize(v.numel()).unwrap();
        self.graph.record(Tensor::scalar(s), &[self], Op::MeanAll)
    }

    /// Sums over one axis, keeping it as extent 1 when `keepdim` is set.
    pub fn sum_axis(self, axis: usize, keepdim: bool) -> Result<Var<'g, T>> {
        let v = self.value();
        if axis >= v.rank() {
            return Err(TensorError::Invalid(format!(
                "sum_axis: axis {axis} out of range for shape {:?}",
                v.shape()
            )));
        }
        let (outer, extent, inner) = split(v.shape(), axis);
        let d = v.data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for e in 0..extent {
                let src = &d[(o * extent + e) * inner..(o * extent + e + 1) * inner];
                for (acc, &x) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += x;
                }
            }
        }
        let mut shape = v.shape().to_vec();
        if keepdim {
            shape[axis] = 1;
        } else {
            shape.remove(axis);
        }
        let out = if shape.is_empty() {
            Tensor::scalar(out[0])
        } else {
            Tensor::from_parts(shape, out)
        };
        // keepdim does not change the flat layout of the gradient
        Ok(self.graph.record(out, &[self], Op::SumAxis { axis }))
    }
}
