//! Finite-difference verification of recorded gradients.

use crate::error::{Result, TensorError};
use crate::{Element, Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest `|a − n| / max(|a|, |n|, 1e-8)` over all coordinates.
    pub max_rel_error: f64,
    /// Flat index where the maximum occurred.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Compares the gradient of the scalar function `f` at `point` against
/// central differences `(f(x + eps·eᵢ) − f(x − eps·eᵢ)) / (2·eps)`.
pub fn grad_check<T, F>(f: F, point: &Tensor<T>, eps: T) -> Result<GradCheck>
where
    T: Element,
    F: for<'g> Fn(Var<'g, T>) -> Result<Var<'g, T>>,
{
    let graph = Graph::new();
    let x = graph.param(point.clone());
    let loss = f(x)?;
    let grads = graph.backward(loss)?;
    let analytic: Vec<f64> = match grads.get(x) {
        Some(g) => g.data().iter().map(|v| v.as_f64()).collect(),
        None => vec![0.0; point.numel()],
    };

    let eval = |p: Tensor<T>| -> Result<f64> {
        let graph = Graph::new();
        let out = f(graph.constant(p))?;
        out.value()
            .item()
            .map(Element::as_f64)
            .ok_or_else(|| TensorError::NonScalarLoss(out.shape()))
    };
    let mut numeric = Vec::with_capacity(point.numel());
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        numeric.push((eval(plus)? - eval(minus)?) / (2.0 * eps.as_f64()));
    }

    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .enumerate()
        .fold(
            (0, 0.0),
            |best, (i, e)| if e > best.1 { (i, e) } else { best },
        );
    Ok(GradCheck {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    })
}
