//! Transformer blocks of the pixel decoder, memory and aggregation modules.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::autodiff::{DeformLayout, Var};
use crate::error::Result;
use crate::model::Partition;
use crate::nn::{Ctx, FeedForward, Init, LayerNorm, Linear, MultiHeadAttention};
use crate::real::Real;

/// Pre-norm multi-scale sampling attention layer.
///
/// Every token predicts `points` offsets per head and level around its own
/// reference point, samples the value tokens there and mixes the samples
/// with softmax weights. With `out` and the feed-forward `down` projection
/// zeroed the layer is the identity.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub norm1: LayerNorm,
    pub value: Linear,
    pub offsets: Linear,
    pub weights: Linear,
    pub out: Linear,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub heads: usize,
    pub levels: usize,
    pub points: usize,
}

impl DecoderLayer {
    pub fn new<R: Real>(
        init: &mut Init<'_, R>,
        name: &str,
        part: Partition,
        d: usize,
        heads: usize,
        levels: usize,
        points: usize,
        hidden: usize,
    ) -> Self {
        let f = |s: &str| alloc::format!("{name}.{s}");
        let norm1 = LayerNorm::new(init, &f("norm1"), part, d);
        let value = Linear::new(init, &f("value"), part, d, d);
        let offsets = Linear::zeroed(init, &f("offsets"), part, d, heads * levels * points * 2);
        // Initial offsets fan out radially, one direction per head. The phase
        // keeps directions off the axes so samples avoid the integer grid where
        // bilinear interpolation is not differentiable.
        let bias = init.store.value_mut(offsets.bias);
        for h in 0..heads {
            let theta = 2.0 * core::f64::consts::PI * h as f64 / heads as f64 + core::f64::consts::PI / 8.0;
            let (s, c) = (libm_sin(theta), libm_cos(theta));
            for l in 0..levels {
                for p in 0..points {
                    let i = ((h * levels + l) * points + p) * 2;
                    let radius = p as f64 + 0.75;
                    bias.data_mut()[i] = R::of(c * radius);
                    bias.data_mut()[i + 1] = R::of(s * radius);
                }
            }
        }
        let weights = Linear::zeroed(init, &f("weights"), part, d, heads * levels * points);
        let out = Linear::new(init, &f("out"), part, d, d);
        let norm2 = LayerNorm::new(init, &f("norm2"), part, d);
        let ffn = FeedForward::new(init, &f("ffn"), part, d, hidden);
        DecoderLayer {
            norm1,
            value,
            offsets,
            weights,
            out,
            norm2,
            ffn,
            heads,
            levels,
            points,
        }
    }

    pub fn forward<R: Real>(&self, ctx: &mut Ctx<'_, R>, x: Var, layout: &Arc<DeformLayout<R>>) -> Result<Var> {
        let n = ctx.tape.shape(x)[0];
        let xn = self.norm1.forward(ctx, x)?;
        let v = self.value.forward(ctx, xn)?;
        let off = self.offsets.forward(ctx, xn)?;
        let logits = self.weights.forward(ctx, xn)?;
        let logits = ctx.tape.reshape(logits, &[n * self.heads, self.levels * self.points])?;
        let w = ctx.tape.softmax(logits, 1)?;
        let w = ctx.tape.reshape(w, &[n, self.heads * self.levels * self.points])?;
        let sampled = ctx.tape.deform_sample(v, off, w, layout.clone())?;
        let y = self.out.forward(ctx, sampled)?;
        let x = ctx.tape.add(x, y)?;
        let xn = self.norm2.forward(ctx, x)?;
        let y = self.ffn.forward(ctx, xn)?;
        ctx.tape.add(x, y)
    }

    /// Parameters of the two residual output projections.
    pub fn residual_outputs(&self) -> Vec<crate::nn::ParamId> {
        let mut v = Vec::new();
        v.extend(self.out.params());
        v.extend(self.ffn.down.params());
        v
    }
}

fn libm_sin(x: f64) -> f64 {
    num_traits::Float::sin(x)
}

fn libm_cos(x: f64) -> f64 {
    num_traits::Float::cos(x)
}

/// Post-norm transformer encoder layer.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new<R: Real>(init: &mut Init<'_, R>, name: &str, part: Partition, d: usize, heads: usize, hidden: usize) -> Result<Self> {
        let f = |s: &str| alloc::format!("{name}.{s}");
        Ok(EncoderLayer {
            attn: MultiHeadAttention::new(init, &f("attn"), part, d, heads)?,
            norm1: LayerNorm::new(init, &f("norm1"), part, d),
            ffn: FeedForward::new(init, &f("ffn"), part, d, hidden),
            norm2: LayerNorm::new(init, &f("norm2"), part, d),
        })
    }

    pub fn forward<R: Real>(&self, ctx: &mut Ctx<'_, R>, x: Var) -> Result<Var> {
        let a = self.attn.forward(ctx, x, x, x)?;
        let x = ctx.tape.add(x, a)?;
        let x = self.norm1.forward(ctx, x)?;
        let y = self.ffn.forward(ctx, x)?;
        let x = ctx.tape.add(x, y)?;
        self.norm2.forward(ctx, x)
    }
}

/// Post-norm transformer decoder layer: query self-attention, cross-attention to memory, feed-forward.
#[derive(Debug, Clone)]
pub struct QueryLayer {
    pub self_attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub norm3: LayerNorm,
}

impl QueryLayer {
    pub fn new<R: Real>(init: &mut Init<'_, R>, name: &str, part: Partition, d: usize, heads: usize, hidden: usize) -> Result<Self> {
        let f = |s: &str| alloc::format!("{name}.{s}");
        Ok(QueryLayer {
            self_attn: MultiHeadAttention::new(init, &f("self_attn"), part, d, heads)?,
            norm1: LayerNorm::new(init, &f("norm1"), part, d),
            cross_attn: MultiHeadAttention::new(init, &f("cross_attn"), part, d, heads)?,
            norm2: LayerNorm::new(init, &f("norm2"), part, d),
            ffn: FeedForward::new(init, &f("ffn"), part, d, hidden),
            norm3: LayerNorm::new(init, &f("norm3"), part, d),
        })
    }

    pub fn forward<R: Real>(&self, ctx: &mut Ctx<'_, R>, q: Var, memory: Var) -> Result<Var> {
        let a = self.self_attn.forward(ctx, q, q, q)?;
        let q = ctx.tape.add(q, a)?;
        let q = self.norm1.forward(ctx, q)?;
        let c = self.cross_attn.forward(ctx, q, memory, memory)?;
        let q = ctx.tape.add(q, c)?;
        let q = self.norm2.forward(ctx, q)?;
        let y = self.ffn.forward(ctx, q)?;
        let q = ctx.tape.add(q, y)?;
        self.norm3.forward(ctx, q)
    }
}
