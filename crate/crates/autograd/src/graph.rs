use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::ops::Op;
use crate::{Element, Tensor};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(0);

pub(crate) struct Node<T: Element> {
    pub(crate) value: Rc<Tensor<T>>,
    pub(crate) requires_grad: bool,
    pub(crate) parents: Vec<usize>,
    pub(crate) op: Option<Op<T>>,
}

/// An append-only computation record.
///
/// Nodes are pushed in execution order, so every node's inputs precede it and
/// a single reverse sweep visits each node once. The record is confined to
/// one thread; only the [`Tensor`] values it produces may leave it.
pub struct Graph<T: Element> {
    id: u64,
    nodes: RefCell<Vec<Node<T>>>,
    consumed: Cell<bool>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, T: Element> {
    pub(crate) graph: &'g Graph<T>,
    pub(crate) id: usize,
}

impl<T: Element> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("graph", &self.graph.id)
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    /// Registers a leaf that receives a gradient.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub fn scalar(&self, value: T) -> Var<'_, T> {
        self.constant(Tensor::scalar(value))
    }

    fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            requires_grad,
            parents: Vec::new(),
            op: None,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends an operation result. The backward state is kept only when at
    /// least one input is tracked.
    pub(crate) fn record(&self, value: Tensor<T>, inputs: &[Var<'_, T>], op: Op<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|v| nodes[v.id].requires_grad);
        nodes.push(Node {
            value: Rc::new(value),
            requires_grad,
            parents: if requires_grad {
                inputs.iter().map(|v| v.id).collect()
            } else {
                Vec::new()
            },
            op: requires_grad.then_some(op),
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    pub(crate) fn value_of(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn check_same(&self, other: &Graph<T>) -> Result<()> {
        if self.id == other.id {
            Ok(())
        } else {
            Err(TensorError::ForeignVar)
        }
    }

    /// Propagates gradients from a scalar `loss` to every tracked leaf it
    /// depends on. A record can be replayed once; a second call fails.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        self.check_same(loss.graph)?;
        if self.consumed.get() {
            return Err(TensorError::BackwardConsumed);
        }
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        if !root.requires_grad {
            return Err(TensorError::Detached);
        }
        self.consumed.set(true);

        let mut pending: Vec<Option<Tensor<T>>> = vec![None; loss.id + 1];
        let mut leaves: Vec<Option<Tensor<T>>> = vec![None; nodes.len()];
        pending[loss.id] = Some(Tensor::ones(root.value.shape()));

        for id in (0..=loss.id).rev() {
            let Some(grad) = pending[id].take() else {
                continue;
            };
            let node = &nodes[id];
            let Some(op) = &node.op else {
                if node.requires_grad {
                    leaves[id] = Some(grad);
                }
                continue;
            };
            let inputs: Vec<&Tensor<T>> = node.parents.iter().map(|&p| &*nodes[p].value).collect();
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| nodes[p].requires_grad)
                .collect();
            let input_grads = op.backward(&grad, &inputs, &node.value, &needs)?;
            debug_assert_eq!(input_grads.len(), node.parents.len());
            for ((&parent, g), need) in node.parents.iter().zip(input_grads).zip(needs) {
                let Some(g) = g else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(g.shape(), nodes[parent].value.shape());
                match &mut pending[parent] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(Gradients {
            graph_id: self.id,
            grads: leaves,
        })
    }
}

/// Gradients of tracked leaves, produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    graph_id: u64,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient for a leaf, or `None` if it was not an ancestor of the loss
    /// or is not tracked.
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        if var.graph.id != self.graph_id {
            return None;
        }
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_, T>) -> Option<Tensor<T>> {
        if var.graph.id != self.graph_id {
            return None;
        }
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl<'g, T: Element> Var<'g, T> {
    pub fn value(&self) -> Rc<Tensor<T>> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    /// Clones the current value into a fresh untracked leaf.
    pub fn detach(self) -> Var<'g, T> {
        self.graph.constant((*self.value()).clone())
    }
}
