//! Parameter storage and the dense building blocks shared by every module.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::Partition;
use crate::real::Real;
use crate::tensor::Tensor;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param<R> {
    pub name: String,
    pub partition: Partition,
    pub value: Tensor<R>,
}

/// Named, partitioned parameter tensors in creation order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<R> {
    params: Vec<Param<R>>,
    index: BTreeMap<String, ParamId>,
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: String, partition: Partition, value: Tensor<R>) -> ParamId {
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.params.len());
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            partition,
            value,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<R> {
        &self.params[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<R>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Number of scalars in parameters matching `filter`.
    pub fn count(&self, filter: impl Fn(Partition) -> bool) -> usize {
        self.params
            .iter()
            .filter(|p| filter(p.partition))
            .map(|p| p.value.numel())
            .sum()
    }

    /// Replaces a parameter's values, checking the shape.
    pub fn assign(&mut self, name: &str, value: Tensor<R>) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::Load(alloc::format!("unknown tensor {name}")))?;
        let slot = &mut self.params[id.0].value;
        if slot.shape() != value.shape() {
            return Err(Error::Load(alloc::format!(
                "tensor {name}: expected shape {:?}, found {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }
}

/// Deterministic initializers drawing from one stream.
pub struct Init<'a, R> {
    pub store: &'a mut ParamStore<R>,
    pub rng: ChaCha8Rng,
}

impl<R: Real> Init<'_, R> {
    pub fn uniform(&mut self, name: String, part: Partition, shape: &[usize], bound: f64) -> ParamId {
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| R::of(rng.gen_range(-bound..=bound)));
        self.store.add(name, part, t)
    }

    pub fn constant(&mut self, name: String, part: Partition, shape: &[usize], value: f64) -> ParamId {
        self.store.add(name, part, Tensor::full(shape, R::of(value)))
    }

    pub fn xavier(&mut self, name: String, part: Partition, fan_in: usize, fan_out: usize, shape: &[usize]) -> ParamId {
        let bound = libm_sqrt(6.0 / (fan_in + fan_out) as f64);
        self.uniform(name, part, shape, bound)
    }
}

fn libm_sqrt(x: f64) -> f64 {
    num_traits::Float::sqrt(x)
}

/// Forward-pass context: a tape plus lazily bound parameter leaves.
pub struct Ctx<'m, R: Real> {
    pub tape: Tape<R>,
    store: &'m ParamStore<R>,
    trainable: Option<&'m [bool]>,
    bound: Vec<Option<Var>>,
}

impl<'m, R: Real> Ctx<'m, R> {
    /// Inference context: no parameter records gradients.
    pub fn frozen(store: &'m ParamStore<R>) -> Self {
        Self::with_mask(store, None)
    }

    /// Training context: parameter `i` records gradients iff `mask[i]`.
    pub fn training(store: &'m ParamStore<R>, mask: &'m [bool]) -> Self {
        Self::with_mask(store, Some(mask))
    }

    /// Context over an existing tape whose leaves `vars[i]` stand in for
    /// parameter `i`; used to drive finite-difference checks through a model.
    pub fn preset(tape: Tape<R>, store: &'m ParamStore<R>, vars: &[Var]) -> Self {
        assert_eq!(vars.len(), store.len(), "one leaf per parameter");
        Ctx {
            tape,
            store,
            trainable: None,
            bound: vars.iter().copied().map(Some).collect(),
        }
    }

    fn with_mask(store: &'m ParamStore<R>, trainable: Option<&'m [bool]>) -> Self {
        Ctx {
            tape: Tape::new(),
            store,
            trainable,
            bound: vec![None; store.len()],
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let grad = self.trainable.is_some_and(|m| m[id.0]);
        let v = self.tape.leaf(self.store.get(id).value.clone(), grad);
        self.bound[id.0] = Some(v);
        v
    }

    /// Parameters that were used in this pass, with their tape leaves.
    pub fn bindings(&self) -> Vec<(ParamId, Var)> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
            .collect()
    }

    pub fn store(&self) -> &'m ParamStore<R> {
        self.store
    }

    pub fn into_tape(self) -> Tape<R> {
        self.tape
    }
}

/// `y = x W + b` with `W[d_in, d_out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Real>(init: &mut Init<'_, R>, name: &str, part: Partition, d_in: usize, d_out: usize) -> Self {
        let weight = init.xavier(alloc::format!("{name}.weight"), part, d_in, d_out, &[d_in, d_out]);
        let bias = init.constant(alloc::format!("{name}.bias"), part, &[d_out], 0.0);
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn zeroed<R: Real>(init: &mut Init<'_, R>, name: &str, part: Partition, d_in: usize, d_out: usize) -> Self {
        let weight = init.constant(alloc::format!("{name}.weight"), part, &[d_in, d_out], 0.0);
        let bias = init.constant(alloc::format!("{name}.bias"), part, &[d_out], 0.0);
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn forward<R: Real>(&self, ctx: &mut Ctx<'_, R>, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = ctx.param(self.bias);
        let y = ctx.tape.matmul(x, w)?;
        ctx.tape.add_row_bias(y, b)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<R: Real>(init: &mut Init<'_, R>, name: &str, part: Partition, d: usize) -> Self {
        LayerNorm {
            gain: init.constant(alloc::format!("{name}.gain"), part, &[d], 1.0),
            bias: init.constant(alloc::format!("{name}.bias"), part, &[d], 0.0),
        }
    }

    pub fn forward<R: Real>(&self, ctx: &mut Ctx<'_, R>, x: Var) -> Result<Var> {
        let g = ctx.param(self.gain);
        let b = ctx.param(self.bias);
        ctx.tape.layer_norm(x, g, b, R::of(LN_EPS))
    }
}

/// Two-layer ReLU feed-forward block.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<R: Real>(init: &mut Init<'_, R>, name: &str, part: Partition, d: usize, hidden: usize) -> Self {
        FeedForward {
            up: Linear::new(init, &alloc::format!("{name}.up"), part, d, hidden),
            down: Linear::new(init, &alloc::format!("{name}.down"), part, hidden, d),
        }
    }

    pub fn forward<R: Real>(&self, ctx: &mut Ctx<'_, R>, x: Var) -> Result<Var> {
        let h = self.up.forward(ctx, x)?;
        let h = ctx.tape.relu(h);
        self.down.forward(ctx, h)
    }
}

/// Multi-head attention with input and output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Real>(init: &mut Init<'_, R>, name: &str, part: Partition, d: usize, heads: usize) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(alloc::format!(
                "{name}: width {d} is not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            query: Linear::new(init, &alloc::format!("{name}.query"), part, d, d),
            key: Linear::new(init, &alloc::format!("{name}.key"), part, d, d),
            value: Linear::new(init, &alloc::format!("{name}.value"), part, d, d),
            out: Linear::new(init, &alloc::format!("{name}.out"), part, d, d),
            heads,
        })
    }

    pub fn forward<R: Real>(&self, ctx: &mut Ctx<'_, R>, queries: Var, keys: Var, values: Var) -> Result<Var> {
        let q = self.query.forward(ctx, queries)?;
        let k = self.key.forward(ctx, keys)?;
        let v = self.value.forward(ctx, values)?;
        let a = ctx.tape.attention(q, k, v, self.heads)?;
        self.out.forward(ctx, a)
    }
}
