pub(crate) mod conv;
pub(crate) mod elementwise;
pub(crate) mod linalg;
pub mod norm;
pub(crate) mod pool;
pub(crate) mod reduce;
pub(crate) mod softmax;

use crate::error::Result;
use crate::{Element, Tensor};

use elementwise::BinaryKind;

/// Saved state for one recorded operation.
pub(crate) enum Op<T: Element> {
    Binary(BinaryKind),
    Neg,
    AddScalar,
    MulScalar(T),
    Exp,
    Log,
    Sqrt,
    Pow(T),
    Relu,
    LeakyRelu(T),
    ClampMin(T),
    MatMul,
    Transpose,
    Reshape,
    SumAll,
    MeanAll,
    SumAxis { axis: usize },
    Conv2d(conv::ConvGeometry),
    DepthwiseConv2d(conv::ConvGeometry),
    BatchNormTrain(norm::SavedBatchStats<T>),
    BatchNormEval(norm::SavedBatchStats<T>),
    MaxPool2d { argmax: Vec<usize> },
    GlobalAvgPool,
    Softmax,
    LogSoftmax,
}

impl<T: Element> Op<T> {
    /// Maps the output gradient to one optional gradient per input.
    /// `needs[i]` is false when input `i` is untracked, in which case the
    /// corresponding entry may be skipped.
    pub(crate) fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor<T>>>> {
        use elementwise as ew;
        Ok(match self {
            Op::Binary(kind) => ew::binary_backward(*kind, grad, inputs[0], inputs[1], needs),
            Op::Neg => vec![Some(grad.map(|g| -g))],
            Op::AddScalar => vec![Some(grad.clone())],
            Op::MulScalar(c) => vec![Some(grad.map(|g| g * *c))],
            Op::Exp => vec![Some(ew::zip(grad, output, |g, y| g * y))],
            Op::Log => vec![Some(ew::zip(grad, inputs[0], |g, x| g / x))],
            Op::Sqrt => {
                let two = T::one() + T::one();
                vec![Some(ew::zip(grad, output, |g, y| g / (two * y)))]
            }
            Op::Pow(p) => {
                let p = *p;
                vec![Some(ew::zip(grad, inputs[0], |g, x| {
                    g * p * x.powf(p - T::one())
                }))]
            }
            Op::Relu => vec![Some(ew::zip(grad, inputs[0], |g, x| {
                if x > T::zero() {
                    g
                } else {
                    T::zero()
                }
            }))],
            Op::LeakyRelu(slope) => {
                let s = *slope;
                vec![Some(ew::zip(grad, inputs[0], |g, x| {
                    if x > T::zero() {
                        g
                    } else {
                        g * s
                    }
                }))]
            }
            Op::ClampMin(c) => {
                let c = *c;
                vec![Some(ew::zip(grad, inputs[0], |g, x| {
                    if x > c {
                        g
                    } else {
                        T::zero()
                    }
                }))]
            }
            Op::MatMul => linalg::matmul_backward(grad, inputs[0], inputs[1], needs),
            Op::Transpose => vec![Some(linalg::transpose2(grad))],
            Op::Reshape => vec![Some(Tensor::from_parts(
                inputs[0].shape().to_vec(),
                grad.data().to_vec(),
            ))],
            Op::SumAll => {
                let g = grad.data()[0];
                vec![Some(Tensor::full(inputs[0].shape(), g))]
            }
            Op::MeanAll => {
                let n = T::from_usize(inputs[0].numel()).unwrap();
                let g = grad.data()[0] / n;
                vec![Some(Tensor::full(inputs[0].shape(), g))]
            }
            Op::SumAxis { axis } => vec![Some(reduce::sum_axis_backward(
                grad,
                inputs[0].shape(),
                *axis,
            ))],
            Op::Conv2d(geom) => conv::conv2d_backward(geom, grad, inputs[0], inputs[1], needs),
            Op::DepthwiseConv2d(geom) => {
                conv::depthwise_backward(geom, grad, inputs[0], inputs[1], needs)
            }
            Op::BatchNormTrain(saved) => norm::train_backward(saved, grad, inputs[1], needs),
            Op::BatchNormEval(saved) => {
                norm::eval_backward(saved, grad, inputs[0], inputs[1], needs)
            }
            Op::MaxPool2d { argmax } => vec![Some(pool::max_pool_backward(
                grad,
                inputs[0].shape(),
                argmax,
            ))],
            Op::GlobalAvgPool => vec![Some(pool::global_avg_backward(grad, inputs[0].shape()))],
            Op::Softmax => vec![Some(softmax::softmax_backward(grad, output))],
            Op::LogSoftmax => vec![Some(softmax::log_softmax_backward(grad, output))],
        })
    }
}
