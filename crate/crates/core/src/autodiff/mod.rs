//! Reverse-mode differentiation over a dynamically recorded tape.
//!
//! A [`Tape`] owns every intermediate buffer of one forward pass. Operations
//! append nodes in execution order, so node indices are already a topological
//! order and [`Tape::backward`] is a single reverse sweep. Tapes are consumed
//! by `backward`; build a fresh one per forward pass.

mod backward;
pub mod gradcheck;
mod ops;

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub use backward::Gradients;
pub use gradcheck::{check_gradients, GradCheckOptions, GradCheckReport};
pub use ops::{DeformLayout, DeformLevel};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnGeom {
    pub nq: usize,
    pub nk: usize,
    pub d: usize,
    pub heads: usize,
}

#[derive(Debug)]
pub(crate) enum Op<R> {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Transpose { a: Var, m: usize, n: usize },
    Reshape { a: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    AddRow { a: Var, bias: Var, n: usize },
    AddChannel { a: Var, bias: Var, plane: usize },
    Scale { a: Var, s: R },
    GradScale { a: Var, s: R },
    Relu { a: Var },
    Sigmoid { a: Var },
    Softmax { a: Var, outer: usize, len: usize, inner: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, n: usize, xhat: Vec<R>, rstd: Vec<R> },
    Conv2d { x: Var, k: Var, geom: ConvGeom },
    Attention { q: Var, k: Var, v: Var, geom: AttnGeom, probs: Vec<R> },
    Bilinear { map: Var, channels: usize, plane: usize, taps: Vec<[(usize, R); 4]> },
    Deform { value: Var, offsets: Var, weights: Var, layout: Arc<DeformLayout<R>> },
    ConcatRows { parts: Vec<Var> },
    SliceRows { a: Var, offset: usize },
    Sum { a: Var },
    Mean { a: Var },
    Focal { p: Var, target: Vec<R>, gamma: R, alpha: R, positives: usize },
    Bce { p: Var, label: R },
}

#[derive(Debug)]
pub(crate) struct Node<R> {
    pub value: Vec<R>,
    pub shape: Vec<usize>,
    pub op: Op<R>,
    pub needs_grad: bool,
}

/// Recording of one forward pass.
#[derive(Debug)]
pub struct Tape<R: Real> {
    pub(crate) nodes: Vec<Node<R>>,
    scopes: Vec<(String, u64)>,
    scope: usize,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            scopes: alloc::vec![(String::new(), 0)],
            scope: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Only leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, tensor: Tensor<R>, requires_grad: bool) -> Var {
        let shape = tensor.shape().to_vec();
        self.nodes.push(Node {
            value: tensor.into_data(),
            shape,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, tensor: Tensor<R>) -> Var {
        self.leaf(tensor, false)
    }

    pub fn value(&self, v: Var) -> &[R] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn tensor(&self, v: Var) -> Tensor<R> {
        let node = &self.nodes[v.0];
        Tensor::new(&node.shape, node.value.clone()).expect("tape node shapes are valid")
    }

    /// Every node of the tape in recording order: `(inputs, output)`.
    pub fn edges(&self) -> Vec<(Vec<Var>, Var)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.op.inputs(), Var(i)))
            .collect()
    }

    /// Subsequent operations charge their FLOPs to `name`.
    pub fn set_scope(&mut self, name: &str) {
        if let Some(pos) = self.scopes.iter().position(|(s, _)| s == name) {
            self.scope = pos;
        } else {
            self.scopes.push((name.to_string(), 0));
            self.scope = self.scopes.len() - 1;
        }
    }

    /// FLOPs recorded per scope, in first-use order; the unnamed scope is omitted when empty.
    pub fn flops_by_scope(&self) -> Vec<(String, u64)> {
        self.scopes
            .iter()
            .filter(|(name, f)| !(name.is_empty() && *f == 0))
            .cloned()
            .collect()
    }

    pub fn total_flops(&self) -> u64 {
        self.scopes.iter().map(|(_, f)| f).sum()
    }

    pub(crate) fn charge(&mut self, flops: u64) {
        self.scopes[self.scope].1 += flops;
    }

    pub(crate) fn push(&mut self, value: Vec<R>, shape: Vec<usize>, op: Op<R>) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        let needs_grad = op.inputs().iter().any(|v| self.nodes[v.0].needs_grad);
        // Nodes outside the gradient path drop their saved buffers.
        let op = if needs_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            shape,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn check_scalar(&self, v: Var) -> Result<()> {
        if self.nodes[v.0].value.len() != 1 {
            return Err(Error::Usage(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[v.0].shape
            )));
        }
        Ok(())
    }
}

impl<R> Op<R> {
    pub(crate) fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => Vec::new(),
            MatMul { a, b, .. } | Add { a, b } | Sub { a, b } | Mul { a, b } => alloc::vec![*a, *b],
            AddRow { a, bias, .. } | AddChannel { a, bias, .. } => alloc::vec![*a, *bias],
            Transpose { a, .. }
            | Reshape { a }
            | Scale { a, .. }
            | GradScale { a, .. }
            | Relu { a }
            | Sigmoid { a }
            | Softmax { a, .. }
            | SliceRows { a, .. }
            | Sum { a }
            | Mean { a } => alloc::vec![*a],
            LayerNorm { x, gain, bias, .. } => alloc::vec![*x, *gain, *bias],
            Conv2d { x, k, .. } => alloc::vec![*x, *k],
            Attention { q, k, v, .. } => alloc::vec![*q, *k, *v],
            Bilinear { map, .. } => alloc::vec![*map],
            Deform {
                value,
                offsets,
                weights,
                ..
            } => alloc::vec![*value, *offsets, *weights],
            ConcatRows { parts } => parts.clone(),
            Focal { p, .. } | Bce { p, .. } => alloc::vec![*p],
        }
    }
}
