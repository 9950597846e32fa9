use autograd::{Graph, Tensor, Var};
use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::rng::{self, label_key};

/// Named parameter tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: IndexMap<String, Tensor<f32>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::invalid(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<f32>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Places every tensor on `graph`, as tracked leaves when `trainable`.
    pub fn bind<'g>(&self, graph: &'g Graph<f32>, trainable: bool) -> Bound<'g> {
        let vars = self
            .tensors
            .iter()
            .map(|(k, t)| {
                let v = if trainable {
                    graph.param(t.clone())
                } else {
                    graph.constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    /// Sets every tensor to zero.
    pub fn zero(&mut self) {
        for t in self.tensors.values_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// A [`ParamSet`] placed on a graph.
pub struct Bound<'g> {
    vars: IndexMap<String, Var<'g, f32>>,
}

impl<'g> Bound<'g> {
    pub fn get(&self, name: &str) -> Result<Var<'g, f32>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var<'g, f32>)> + '_ {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Kaiming-uniform weights, `U(−b, b)` with `b = sqrt(6 / fan_in)`, drawn
/// from a stream keyed by the parameter name.
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, seed: u64, name: &str) -> Tensor<f32> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let mut rng = rng::stream(seed, &[label_key("init"), label_key(name)]);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| rng::uniform(&mut rng, -bound, bound) as f32)
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}
