use crate::error::{Result, TensorError};
use crate::graph::Var;
use crate::ops::Op;
use crate::{Element, Tensor};

fn rows<T: Element>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(TensorError::Invalid(format!(
            "{op}: expected a matrix, got {:?}",
            t.shape()
        ))),
    }
}

pub(crate) fn softmax_backward<T: Element>(grad: &Tensor<T>, out: &Tensor<T>) -> Tensor<T> {
    let cols = out.shape()[1];
    let mut data = Vec::with_capacity(out.numel());
    for (g, s) in grad
        .data()
        .chunks_exact(cols)
        .zip(out.data().chunks_exact(cols))
    {
        let inner: T = g.iter().zip(s).map(|(&a, &b)| a * b).sum();
        data.extend(g.iter().zip(s).map(|(&gi, &si)| si * (gi - inner)));
    }
    Tensor::from_parts(out.shape().to_vec(), data)
}

pub(crate) fn log_softmax_backward<T: Element>(grad: &Tensor<T>, out: &Tensor<T>) -> Tensor<T> {
    let cols = out.shape()[1];
    let mut data = Vec::with_capacity(out.numel());
    for (g, ls) in grad
        .data()
        .chunks_exact(cols)
        .zip(out.data().chunks_exact(cols))
    {
        let total: T = g.iter().copied().sum();
        data.extend(g.iter().zip(ls).map(|(&gi, &l)| gi - l.exp() * total));
    }
    Tensor::from_parts(out.shape().to_vec(), data)
}

fn softmax_rows<T: Element>(x: &Tensor<T>, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks_exact(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&v| (v - max).exp()));
        let total: T = out[start..].iter().copied().sum();
        out[start..].iter_mut().for_each(|v| *v = *v / total);
    }
    out
}

fn log_softmax_rows<T: Element>(x: &Tensor<T>, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks_exact(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        out.extend(row.iter().map(|&v| v - lse));
    }
    out
}

impl<'g, T: Element> Var<'g, T> {
    /// Row-wise softmax of a matrix.
    pub fn softmax(self) -> Result<Var<'g, T>> {
        let x = self.value();
        let (_, cols) = rows("softmax", &x)?;
        let data = softmax_rows(&x, cols);
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        Ok(self.graph.record(out, &[self], Op::Softmax))
    }

    /// Row-wise log-softmax of a matrix, computed with the max shift.
    pub fn log_softmax(self) -> Result<Var<'g, T>> {
        let x = self.value();
        let (_, cols) = rows("log_softmax", &x)?;
        let out = Tensor::from_parts(x.shape().to_vec(), log_softmax_rows(&x, cols));
        Ok(self.graph.record(out, &[self], Op::LogSoftmax))
    }
}
