use std::cell::RefCell;

use super::ops::{forward, vjp, OpKind};
use super::{NumericsError, Result, Tensor};

/// One recorded node: the computed value plus provenance for backward.
struct Node {
    value: Tensor,
    op: Option<OpKind>,
    inputs: Vec<usize>,
    requires_grad: bool,
}

/// Records a computation graph. Nodes are appended in topological order,
/// so a single reverse sweep suffices for backward. A tape is cheap to
/// create; training builds one per loss evaluation.
///
/// Not `Sync`: one tape belongs to one thread. Independent tapes (one per
/// batch element) can run in parallel since they share nothing mutable.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    pub(crate) id: usize,
}

/// Gradients of one scalar loss with respect to every grad-requiring node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf, or zeros of its shape when the loss does not
    /// depend on it.
    pub fn wrt_or_zeros(&self, v: Var<'_>) -> Tensor {
        self.wrt(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(v.value().shape().to_vec()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Insert a differentiable leaf (a trainable parameter).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        let id = self.push(Node {
            value,
            op: None,
            inputs: vec![],
            requires_grad: true,
        });
        Var { tape: self, id }
    }

    /// Insert a non-differentiable constant.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        let id = self.push(Node {
            value,
            op: None,
            inputs: vec![],
            requires_grad: false,
        });
        Var { tape: self, id }
    }

    pub fn scalar(&self, v: f64) -> Result<Var<'_>> {
        Ok(self.constant(Tensor::scalar(v)?))
    }

    /// Apply an op to operands already on this tape.
    pub fn apply(&self, kind: OpKind, operands: &[Var<'_>]) -> Result<Var<'_>> {
        let (value, requires_grad) = {
            let nodes = self.nodes.borrow();
            let tensors: Vec<&Tensor> = operands.iter().map(|v| &nodes[v.id].value).collect();
            let value = forward(&kind, &tensors)?;
            let rg = operands.iter().any(|v| nodes[v.id].requires_grad);
            (value, rg)
        };
        let id = self.push(Node {
            value,
            op: Some(kind),
            inputs: operands.iter().map(|v| v.id).collect(),
            requires_grad,
        });
        Ok(Var { tape: self, id })
    }

    /// Reverse sweep from a scalar loss. The tape itself is not mutated;
    /// gradients accumulate additively over fan-out.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if !loss_node.value.is_scalar() {
            return Err(NumericsError::NonScalarLoss(
                loss_node.value.shape().to_vec(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::ones(loss_node.value.shape().to_vec()));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[id].clone() else { continue };
            let Some(op) = &node.op else { continue };
            let input_tensors: Vec<&Tensor> =
                node.inputs.iter().map(|&i| &nodes[i].value).collect();
            for (arg, &input_id) in node.inputs.iter().enumerate() {
                if !nodes[input_id].requires_grad {
                    continue;
                }
                let contribution = vjp(op, &grad, &input_tensors, &node.value, arg)?;
                grads[input_id] = Some(match grads[input_id].take() {
                    None => contribution,
                    Some(acc) => forward(&OpKind::Add, &[&acc, &contribution])?,
                });
            }
        }
        Ok(Gradients { grads })
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn add(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Add, &[*self, rhs])
    }

    pub fn sub(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Sub, &[*self, rhs])
    }

    pub fn mul(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Mul, &[*self, rhs])
    }

    pub fn div(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Div, &[*self, rhs])
    }

    pub fn matmul(&self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Matmul, &[*self, rhs])
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Transpose, &[*self])
    }

    pub fn concat(&self, others: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let mut all = vec![*self];
        all.extend_from_slice(others);
        self.tape.apply(OpKind::Concat { axis }, &all)
    }

    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Slice { axis, start, end }, &[*self])
    }

    pub fn sum(&self) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Sum { axis: None }, &[*self])
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Sum { axis: Some(axis) }, &[*self])
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Mean { axis: None }, &[*self])
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Mean { axis: Some(axis) }, &[*self])
    }

    pub fn tanh(&self) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Tanh, &[*self])
    }

    pub fn artanh(&self) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Artanh, &[*self])
    }

    pub fn sigmoid(&self) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Sigmoid, &[*self])
    }

    pub fn softmax(&self, axis: usize) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Softmax { axis }, &[*self])
    }

    pub fn norm(&self) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Norm { axis: None }, &[*self])
    }

    pub fn norm_axis(&self, axis: usize) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Norm { axis: Some(axis) }, &[*self])
    }

    pub fn sqrt(&self) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Sqrt, &[*self])
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Exp, &[*self])
    }

    pub fn log(&self) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Log, &[*self])
    }

    pub fn broadcast(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        self.tape.apply(OpKind::Broadcast { shape }, &[*self])
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Var<'t>> {
        self.tape.apply(OpKind::LeakyRelu { slope }, &[*self])
    }

    pub fn mul_scalar(&self, s: f64) -> Result<Var<'t>> {
        let c = self.tape.scalar(s)?;
        self.mul(c)
    }

    pub fn add_scalar(&self, s: f64) -> Result<Var<'t>> {
        let c = self.tape.scalar(s)?;
        self.add(c)
    }

    pub fn neg(&self) -> Result<Var<'t>> {
        self.mul_scalar(-1.0)
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }
}
