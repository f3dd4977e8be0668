use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use super::array::{Float, Tensor};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Computes input gradients from the output gradient.
///
/// Arguments are the upstream gradient, the input values and the output value.
/// One entry per input; `None` means no gradient flows to that input.
pub(crate) type BackwardFn = Box<dyn Fn(&Tensor, &[Arc<Tensor>], &Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    op: &'static str,
    value: Arc<Tensor>,
    inputs: Vec<usize>,
    requires_grad: bool,
    backward: Option<BackwardFn>,
    grad: Option<Tensor>,
    /// Unrounded value of scalar reductions.
    precise: Option<f64>,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    params: HashMap<(u64, usize), usize>,
    /// Running hash of the discrete choices made by piecewise ops.
    branches: u64,
}

/// Append-only record of the operations of one forward pass.
///
/// Nodes are stored in creation order, which is a topological order of the
/// graph. A tape is single-writer; build a fresh one per forward pass.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone)]
pub struct Var {
    tape: Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> Var {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(node);
        Var {
            tape: self.clone(),
            id: inner.nodes.len() - 1,
        }
    }

    /// Folds the discrete choices of a piecewise op (ReLU signs, pooling
    /// argmaxes, clamp regions) into the tape's branch signature.
    pub(crate) fn note_branches(&self, choices: impl Iterator<Item = u64>) {
        let mut inner = self.inner.borrow_mut();
        let mut h = inner.branches ^ 0xcbf2_9ce4_8422_2325;
        for c in choices {
            h = (h ^ c).wrapping_mul(0x0100_0000_01b3);
        }
        inner.branches = h;
    }

    /// Two forward passes of the same graph with equal signatures made the
    /// same choice at every kink, so the function is smooth between them.
    pub fn branch_signature(&self) -> u64 {
        self.inner.borrow().branches
    }

    /// Records a leaf value.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        self.leaf_arc(Arc::new(value), requires_grad)
    }

    pub(crate) fn leaf_arc(&self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        self.push(Node {
            op: "leaf",
            value,
            inputs: Vec::new(),
            requires_grad,
            backward: None,
            grad: None,
            precise: None,
        })
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Binds parameter `index` of `store` to a leaf on this tape.
    ///
    /// Repeated calls return the same node, so gradients from every use
    /// accumulate in one slot.
    pub fn param(&self, store: &ParamStore, index: usize) -> Var {
        let key = (store.id(), index);
        if let Some(&id) = self.inner.borrow().params.get(&key) {
            return Var {
                tape: self.clone(),
                id,
            };
        }
        let p = store.get(index);
        let var = self.leaf_arc(p.value_arc(), p.trainable());
        self.inner.borrow_mut().params.insert(key, var.id);
        var
    }

    /// Node ids of parameters of `store` bound on this tape.
    pub(crate) fn bound_params(&self, store: &ParamStore) -> Vec<(usize, usize)> {
        let inner = self.inner.borrow();
        inner
            .params
            .iter()
            .filter(|((sid, _), _)| *sid == store.id())
            .map(|(&(_, idx), &node)| (idx, node))
            .collect()
    }

    pub(crate) fn record(
        &self,
        op: &'static str,
        value: Tensor,
        inputs: &[&Var],
        backward: BackwardFn,
    ) -> Var {
        self.record_precise(op, value, None, inputs, backward)
    }

    /// Like [`Tape::record`], keeping a double-precision copy of a scalar result.
    pub(crate) fn record_precise(
        &self,
        op: &'static str,
        value: Tensor,
        precise: Option<f64>,
        inputs: &[&Var],
        backward: BackwardFn,
    ) -> Var {
        debug_assert!(inputs.iter().all(|v| Rc::ptr_eq(&v.tape.inner, &self.inner)));
        let requires_grad = {
            let inner = self.inner.borrow();
            inputs.iter().any(|v| inner.nodes[v.id].requires_grad)
        };
        self.push(Node {
            op,
            value: Arc::new(value),
            inputs: inputs.iter().map(|v| v.id).collect(),
            requires_grad,
            backward: if requires_grad { Some(backward) } else { None },
            grad: None,
            precise,
        })
    }

    /// Reverse pass from a scalar loss.
    ///
    /// Every node that requires a gradient and is reachable from `loss`
    /// receives dLoss/dNode in its gradient slot. Calling backward again
    /// overwrites the slots.
    pub fn backward(&self, loss: &Var) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        let lid = loss.id;
        if inner.nodes[lid].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                inner.nodes[lid].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=lid).map(|_| None).collect();
        grads[lid] = Some(Tensor::ones(inner.nodes[lid].value.shape()));
        for id in (0..=lid).rev() {
            let node = &inner.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].as_ref() else { continue };
            let Some(bw) = node.backward.as_ref() else { continue };
            let inputs: Vec<Arc<Tensor>> = node
                .inputs
                .iter()
                .map(|&i| inner.nodes[i].value.clone())
                .collect();
            let input_grads = bw(g, &inputs, &node.value);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (&inp, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !inner.nodes[inp].requires_grad {
                    continue;
                }
                debug_assert_eq!(
                    ig.shape(),
                    inner.nodes[inp].value.shape(),
                    "gradient shape from op {}",
                    node.op
                );
                match &mut grads[inp] {
                    Some(acc) => acc.add_assign(&ig),
                    slot => *slot = Some(ig),
                }
            }
        }
        for (node, g) in inner.nodes.iter_mut().zip(grads) {
            if node.requires_grad {
                node.grad = g;
            }
        }
        Ok(())
    }

    pub(crate) fn value_of(&self, id: usize) -> Arc<Tensor> {
        self.inner.borrow().nodes[id].value.clone()
    }

    pub(crate) fn grad_of(&self, id: usize) -> Option<Tensor> {
        self.inner.borrow().nodes[id].grad.clone()
    }

    /// Op names in record order.
    pub fn ops(&self) -> Vec<&'static str> {
        self.inner.borrow().nodes.iter().map(|n| n.op).collect()
    }
}

impl Var {
    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.inner.borrow().nodes[self.id].requires_grad
    }

    /// Gradient written by the last [`Tape::backward`], if any reached this node.
    pub fn grad(&self) -> Option<Tensor> {
        self.tape.grad_of(self.id)
    }

    pub fn item(&self) -> Float {
        self.value().item()
    }

    /// Scalar value in double precision; exact for reductions that track it.
    pub fn item_f64(&self) -> f64 {
        let inner = self.tape.inner.borrow();
        let node = &inner.nodes[self.id];
        node.precise.unwrap_or_else(|| node.value.item() as f64)
    }

    pub fn backward(&self) -> Result<()> {
        self.tape.backward(self)
    }
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}
