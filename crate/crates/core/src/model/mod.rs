//! Dual-branch scanpath model.
//!
//! Pixel encoder → pixel decoder (shared prefix, then per-branch suffix) →
//! foveation → memory encoder → query aggregation → heatmap and termination
//! heads. The free-viewing (FV) and visual-search (VS) branches own separate
//! copies of everything after the shared decoder prefix.

mod config;
mod layers;
mod rollout;

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{DeformLayout, DeformLevel, Var};
use crate::data::{Fixation, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::{Ctx, Init, Linear, ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

pub use config::{Branch, ModelConfig, Partition, SplitConfig, PYRAMID_STRIDES};
pub use layers::{DecoderLayer, EncoderLayer, QueryLayer};
pub use rollout::{argmax, sample_index, SelectMode, TERMINATION_THRESHOLD};

/// Strided 3x3 convolution stages; stage `i` halves the resolution.
#[derive(Debug, Clone)]
pub struct Encoder {
    stages: Vec<(ParamId, ParamId)>,
}

/// Per-level projection to the model width plus level and position embeddings.
#[derive(Debug, Clone)]
pub struct InputProjection {
    levels: Vec<Linear>,
    level_embed: ParamId,
    pos: Linear,
}

#[derive(Debug, Clone)]
pub struct Foveation {
    pos: Linear,
    foveal_type: ParamId,
    peripheral_type: ParamId,
    /// Row `k` is added to the fixation `k` steps before the latest one.
    recency: ParamId,
}

#[derive(Debug, Clone)]
pub struct Heads {
    mlp1: Linear,
    mlp2: Linear,
    termination: Linear,
}

#[derive(Debug, Clone)]
pub struct BranchModules {
    pub foveation: Foveation,
    pub memory: Vec<EncoderLayer>,
    pub queries: ParamId,
    pub aggregation: Vec<QueryLayer>,
    pub heads: Heads,
}

#[derive(Debug, Clone)]
pub struct Model<R> {
    pub config: ModelConfig,
    pub split: SplitConfig,
    pub store: ParamStore<R>,
    encoder: Encoder,
    input_proj: InputProjection,
    shared: Vec<DecoderLayer>,
    suffix: [Vec<DecoderLayer>; 2],
    branches: [BranchModules; 2],
}

/// Four decoder output maps `[D, h, w]` on a tape, coarse to fine.
#[derive(Debug, Clone, Copy)]
pub struct FeaturePyramid {
    pub maps: [Var; 4],
    pub sizes: [(usize, usize); 4],
}

impl FeaturePyramid {
    pub fn finest(&self) -> Var {
        self.maps[3]
    }

    pub fn coarsest(&self) -> Var {
        self.maps[0]
    }
}

/// Detached pyramid values.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidValues<R> {
    pub maps: [Tensor<R>; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct FoveatedTokens {
    /// `[t, D]` raw samples of the finest map at the prefix fixations.
    pub foveal_samples: Var,
    /// `[t, D]` samples plus position, type and recency embeddings.
    pub foveal: Var,
    /// `[h32 * w32, D]` coarsest-map tokens plus position and type embeddings.
    pub peripheral: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct HeatmapVars {
    /// `[1, h4 * w4]`
    pub logits: Var,
    /// `[1, h4 * w4]`, softmax of `logits`
    pub prob: Var,
    /// `[1, 1]`
    pub termination: Var,
}

/// Next-fixation distribution over the finest grid plus stop probability.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapPrediction<R> {
    /// `[h4, w4]`
    pub logits: Tensor<R>,
    /// `[h4, w4]`, sums to one
    pub prob: Tensor<R>,
    pub termination: R,
}

/// How much of the feature pipeline is precomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureCut {
    Image,
    /// Encoder outputs.
    Base,
    /// Decoder tokens after the input projection and this many path layers.
    Tokens(usize),
}

/// Detached intermediate of the feature pipeline, see [`FeatureCut`].
#[derive(Debug, Clone)]
pub enum FeatureState<R> {
    Image(Tensor<R>),
    Base(Vec<Tensor<R>>),
    Tokens {
        tokens: Tensor<R>,
        done: usize,
        sizes: [(usize, usize); 4],
    },
}

/// Pyramid level sizes `(h, w)` for an `height x width` input, coarse to fine.
pub fn level_sizes(height: usize, width: usize) -> Result<[(usize, usize); 4]> {
    if height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0 {
        return Err(Error::Input(alloc::format!(
            "image size {width}x{height} is not divisible by 32"
        )));
    }
    Ok(PYRAMID_STRIDES.map(|s| (height / s, width / s)))
}

/// Sinusoidal features `[n, 4 * octaves]` of normalized points.
pub fn position_features<R: Real>(points: &[(f64, f64)], octaves: usize) -> Tensor<R> {
    let width = 4 * octaves;
    let mut data = Vec::with_capacity(points.len() * width);
    for &(x, y) in points {
        for k in 0..octaves {
            let f = core::f64::consts::PI * (1u64 << k) as f64;
            let (sx, cx) = num_traits::Float::sin_cos(f * x);
            let (sy, cy) = num_traits::Float::sin_cos(f * y);
            data.extend([sx, cx, sy, cy].map(R::of));
        }
    }
    Tensor::new(&[points.len(), width], data).expect("position feature shape")
}

fn cell_centers(h: usize, w: usize) -> Vec<(f64, f64)> {
    (0..h * w)
        .map(|i| ((i % w) as f64 + 0.5) / w as f64)
        .zip((0..h * w).map(|i| ((i / w) as f64 + 0.5) / h as f64))
        .collect()
}

impl<R: Real> Model<R> {
    /// Deterministic initialization from `seed`.
    pub fn build(config: &ModelConfig, split: SplitConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let split = SplitConfig::new(split.shared_layers, config.decoder_layers)?;
        let mut store = ParamStore::new();
        let mut init = Init {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let d = config.feature_dim;
        let hidden = d * config.ffn_multiplier;
        let pos_in = 4 * config.pos_frequencies;

        let mut stages = Vec::new();
        let mut c_in = 3;
        for (i, &c_out) in config.encoder_channels.iter().enumerate() {
            let fan_in = c_in * 9;
            let k = init.xavier(
                alloc::format!("encoder.stage{i}.kernel"),
                Partition::Encoder,
                fan_in,
                c_out * 9,
                &[c_out, c_in, 3, 3],
            );
            let b = init.constant(alloc::format!("encoder.stage{i}.bias"), Partition::Encoder, &[c_out], 0.0);
            stages.push((k, b));
            c_in = c_out;
        }
        let encoder = Encoder { stages };

        // encoder channels per pyramid level, coarse to fine
        let ch = &config.encoder_channels;
        let level_channels = [ch[4], ch[3], ch[2], ch[1]];
        let part = Partition::SharedDecoder;
        let input_proj = InputProjection {
            levels: level_channels
                .iter()
                .enumerate()
                .map(|(l, &c)| Linear::new(&mut init, &alloc::format!("decoder.input_proj.level{l}"), part, c, d))
                .collect(),
            level_embed: init.uniform("decoder.input_proj.level_embed".into(), part, &[4, d], 0.1),
            pos: Linear::new(&mut init, "decoder.input_proj.pos", part, pos_in, d),
        };

        let layer = |init: &mut Init<'_, R>, name: &str, part| {
            DecoderLayer::new(init, name, part, d, config.decoder_heads, 4, config.decoder_points, hidden)
        };
        let shared = (0..split.shared_layers)
            .map(|i| layer(&mut init, &alloc::format!("decoder.layer{i}"), part))
            .collect();
        let suffix = Branch::ALL.map(|b| {
            (split.shared_layers..config.decoder_layers)
                .map(|i| {
                    layer(
                        &mut init,
                        &alloc::format!("decoder.{}.layer{i}", b.tag()),
                        Partition::DecoderSuffix(b),
                    )
                })
                .collect()
        });

        let max_len = config.max_len_fv.max(config.max_len_vs);
        let mut branches = Vec::with_capacity(2);
        for b in Branch::ALL {
            let t = b.tag();
            let fp = Partition::Foveation(b);
            let foveation = Foveation {
                pos: Linear::new(&mut init, &alloc::format!("foveation.{t}.pos"), fp, pos_in, d),
                foveal_type: init.uniform(alloc::format!("foveation.{t}.foveal_type"), fp, &[1, d], 0.1),
                peripheral_type: init.uniform(alloc::format!("foveation.{t}.peripheral_type"), fp, &[1, d], 0.1),
                recency: init.uniform(alloc::format!("foveation.{t}.recency"), fp, &[max_len, d], 0.1),
            };
            let memory = (0..config.memory_layers)
                .map(|i| {
                    EncoderLayer::new(
                        &mut init,
                        &alloc::format!("memory.{t}.layer{i}"),
                        Partition::Memory(b),
                        d,
                        config.memory_heads,
                        hidden,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let ap = Partition::Aggregation(b);
            let queries = init.uniform(alloc::format!("aggregation.{t}.queries"), ap, &[config.queries(b), d], 1.0);
            let aggregation = (0..config.aggregation_layers)
                .map(|i| {
                    QueryLayer::new(
                        &mut init,
                        &alloc::format!("aggregation.{t}.layer{i}"),
                        ap,
                        d,
                        config.aggregation_heads,
                        hidden,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let hp = Partition::Heads(b);
            let heads = Heads {
                mlp1: Linear::new(&mut init, &alloc::format!("heads.{t}.mlp1"), hp, d, d),
                mlp2: Linear::new(&mut init, &alloc::format!("heads.{t}.mlp2"), hp, d, d),
                termination: Linear::new(&mut init, &alloc::format!("heads.{t}.termination"), hp, d, 1),
            };
            branches.push(BranchModules {
                foveation,
                memory,
                queries,
                aggregation,
                heads,
            });
        }
        let branches: [BranchModules; 2] = branches.try_into().map_err(|_| Error::Config("branch count".into()))?;

        Ok(Model {
            config: config.clone(),
            split,
            store,
            encoder,
            input_proj,
            shared,
            suffix,
            branches,
        })
    }

    /// Zeroes the residual output projections of every task-specific decoder
    /// layer so each starts as the identity.
    pub fn zero_init_task_layers(&mut self) {
        for layer in self.suffix.iter().flatten() {
            for id in layer.residual_outputs() {
                self.store.value_mut(id).data_mut().fill(R::zero());
            }
        }
    }

    pub fn parameter_count(&self, filter: impl Fn(Partition) -> bool) -> usize {
        self.store.count(filter)
    }

    /// One flag per parameter, true where `filter` selects its partition.
    pub fn mask(&self, filter: impl Fn(Partition) -> bool) -> Vec<bool> {
        self.store.iter().map(|(_, p)| filter(p.partition)).collect()
    }

    /// The decoder layers a branch runs through, with their scope names.
    pub fn path_layers(&self, branch: Branch) -> Vec<(String, &DecoderLayer)> {
        let shared = self
            .shared
            .iter()
            .enumerate()
            .map(|(i, l)| (alloc::format!("decoder.layer{i}"), l));
        let k = self.split.shared_layers;
        let own = self.suffix[branch.index()]
            .iter()
            .enumerate()
            .map(move |(i, l)| (alloc::format!("decoder.{}.layer{}", branch.tag(), k + i), l));
        shared.chain(own).collect()
    }

    pub fn branch(&self, branch: Branch) -> &BranchModules {
        &self.branches[branch.index()]
    }

    pub fn task_layers(&self, branch: Branch) -> &[DecoderLayer] {
        &self.suffix[branch.index()]
    }

    /// Encoder feature maps `[C_l, h_l, w_l]`, coarse to fine.
    pub fn encode_pixels(&self, ctx: &mut Ctx<'_, R>, image: Var) -> Result<[Var; 4]> {
        let s = ctx.tape.shape(image).to_vec();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::Input(alloc::format!("expected a [3, H, W] image, got {s:?}")));
        }
        level_sizes(s[1], s[2])?;
        ctx.tape.set_scope("encoder");
        let mut x = image;
        let mut outs = Vec::new();
        for &(k, b) in &self.encoder.stages {
            let kv = ctx.param(k);
            let bv = ctx.param(b);
            let y = ctx.tape.conv2d(x, kv, 2, 1)?;
            let y = ctx.tape.add_channel_bias(y, bv)?;
            x = ctx.tape.relu(y);
            outs.push(x);
        }
        Ok([outs[4], outs[3], outs[2], outs[1]])
    }

    fn layout(&self, sizes: &[(usize, usize); 4]) -> Arc<DeformLayout<R>> {
        let mut levels = Vec::new();
        let mut refs = Vec::new();
        let mut start = 0;
        for &(h, w) in sizes {
            levels.push(DeformLevel { h, w, start });
            refs.extend(cell_centers(h, w).into_iter().map(|(x, y)| (R::of(x), R::of(y))));
            start += h * w;
        }
        Arc::new(DeformLayout {
            levels,
            refs,
            heads: self.config.decoder_heads,
            points: self.config.decoder_points,
        })
    }

    /// Flattens and projects encoder maps into decoder tokens `[N, D]`.
    pub fn decoder_tokens(&self, ctx: &mut Ctx<'_, R>, base: &[Var; 4]) -> Result<Var> {
        ctx.tape.set_scope("decoder.input_proj");
        let embed = ctx.param(self.input_proj.level_embed);
        let mut parts = Vec::new();
        for (l, &map) in base.iter().enumerate() {
            let s = ctx.tape.shape(map).to_vec();
            let flat = ctx.tape.reshape(map, &[s[0], s[1] * s[2]])?;
            let tokens = ctx.tape.transpose(flat)?;
            let x = self.input_proj.levels[l].forward(ctx, tokens)?;
            let row = ctx.tape.slice_rows(embed, l, 1)?;
            let x = ctx.tape.add_row_bias(x, row)?;
            let feats = ctx
                .tape
                .constant(position_features(&cell_centers(s[1], s[2]), self.config.pos_frequencies));
            let pos = self.input_proj.pos.forward(ctx, feats)?;
            parts.push(ctx.tape.add(x, pos)?);
        }
        ctx.tape.concat_rows(&parts)
    }

    /// Runs path layers `from..` of `branch` over decoder tokens.
    pub fn decoder_layers(
        &self,
        ctx: &mut Ctx<'_, R>,
        mut x: Var,
        branch: Branch,
        from: usize,
        sizes: &[(usize, usize); 4],
    ) -> Result<Var> {
        let layout = self.layout(sizes);
        for (scope, layer) in self.path_layers(branch).into_iter().skip(from) {
            ctx.tape.set_scope(&scope);
            x = layer.forward(ctx, x, &layout)?;
        }
        Ok(x)
    }

    /// Splits decoder tokens back into `[D, h, w]` maps.
    pub fn tokens_to_pyramid(&self, ctx: &mut Ctx<'_, R>, x: Var, sizes: [(usize, usize); 4]) -> Result<FeaturePyramid> {
        let d = self.config.feature_dim;
        let mut maps = [x; 4];
        let mut start = 0;
        for (l, &(h, w)) in sizes.iter().enumerate() {
            let rows = ctx.tape.slice_rows(x, start, h * w)?;
            let t = ctx.tape.transpose(rows)?;
            maps[l] = ctx.tape.reshape(t, &[d, h, w])?;
            start += h * w;
        }
        Ok(FeaturePyramid { maps, sizes })
    }

    /// Full pixel decoder along `branch`'s path.
    pub fn decode_pixels(&self, ctx: &mut Ctx<'_, R>, base: &[Var; 4], branch: Branch) -> Result<FeaturePyramid> {
        let sizes = self.base_sizes(ctx, base);
        let x = self.decoder_tokens(ctx, base)?;
        let x = self.decoder_layers(ctx, x, branch, 0, &sizes)?;
        self.tokens_to_pyramid(ctx, x, sizes)
    }

    /// Decodes both branches, running the shared prefix once.
    pub fn decode_both(&self, ctx: &mut Ctx<'_, R>, base: &[Var; 4]) -> Result<[FeaturePyramid; 2]> {
        let sizes = self.base_sizes(ctx, base);
        let x = self.decoder_tokens(ctx, base)?;
        let k = self.split.shared_layers;
        let layout = self.layout(&sizes);
        let mut x = x;
        for (scope, layer) in self.path_layers(Branch::Fv).into_iter().take(k) {
            ctx.tape.set_scope(&scope);
            x = layer.forward(ctx, x, &layout)?;
        }
        let fv = self.decoder_layers(ctx, x, Branch::Fv, k, &sizes)?;
        let vs = self.decoder_layers(ctx, x, Branch::Vs, k, &sizes)?;
        Ok([self.tokens_to_pyramid(ctx, fv, sizes)?, self.tokens_to_pyramid(ctx, vs, sizes)?])
    }

    fn base_sizes(&self, ctx: &Ctx<'_, R>, base: &[Var; 4]) -> [(usize, usize); 4] {
        base.map(|v| {
            let s = ctx.tape.shape(v);
            (s[1], s[2])
        })
    }

    /// Image to pyramid along `branch`.
    pub fn features(&self, ctx: &mut Ctx<'_, R>, image: Var, branch: Branch) -> Result<FeaturePyramid> {
        let base = self.encode_pixels(ctx, image)?;
        self.decode_pixels(ctx, &base, branch)
    }

    /// Detached pipeline state up to `cut` for `branch`.
    pub fn feature_state(&self, image: &Tensor<R>, branch: Branch, cut: FeatureCut) -> Result<FeatureState<R>> {
        if cut == FeatureCut::Image {
            return Ok(FeatureState::Image(image.clone()));
        }
        let mut ctx = Ctx::frozen(&self.store);
        let img = ctx.tape.constant(image.clone());
        let base = self.encode_pixels(&mut ctx, img)?;
        let FeatureCut::Tokens(done) = cut else {
            return Ok(FeatureState::Base(base.iter().map(|&v| ctx.tape.tensor(v)).collect()));
        };
        let sizes = self.base_sizes(&ctx, &base);
        let x = self.decoder_tokens(&mut ctx, &base)?;
        let layout = self.layout(&sizes);
        let mut x = x;
        for (scope, layer) in self.path_layers(branch).into_iter().take(done) {
            ctx.tape.set_scope(&scope);
            x = layer.forward(&mut ctx, x, &layout)?;
        }
        Ok(FeatureState::Tokens {
            tokens: ctx.tape.tensor(x),
            done,
            sizes,
        })
    }

    /// Completes the pipeline from a detached state.
    pub fn pyramid_from_state(&self, ctx: &mut Ctx<'_, R>, state: &FeatureState<R>, branch: Branch) -> Result<FeaturePyramid> {
        match state {
            FeatureState::Image(img) => {
                let v = ctx.tape.constant(img.clone());
                self.features(ctx, v, branch)
            }
            FeatureState::Base(maps) => {
                let vars: Vec<Var> = maps.iter().map(|m| ctx.tape.constant(m.clone())).collect();
                let base = [vars[0], vars[1], vars[2], vars[3]];
                self.decode_pixels(ctx, &base, branch)
            }
            FeatureState::Tokens { tokens, done, sizes } => {
                let x = ctx.tape.constant(tokens.clone());
                let x = self.decoder_layers(ctx, x, branch, *done, sizes)?;
                self.tokens_to_pyramid(ctx, x, *sizes)
            }
        }
    }

    /// Foveal tokens from the finest map at each prefix fixation, peripheral
    /// tokens from every cell of the coarsest map.
    pub fn foveate(
        &self,
        ctx: &mut Ctx<'_, R>,
        pyramid: &FeaturePyramid,
        prefix: &[Fixation],
        branch: Branch,
    ) -> Result<FoveatedTokens> {
        if prefix.is_empty() {
            return Err(Error::Input("foveation needs at least one fixation".into()));
        }
        if let Some(i) = prefix.iter().position(|f| !f.in_unit_square()) {
            return Err(Error::Input(alloc::format!(
                "fixation {i} ({}, {}) is outside the unit square",
                prefix[i].x,
                prefix[i].y
            )));
        }
        ctx.tape.set_scope(&alloc::format!("foveation.{}", branch.tag()));
        let fov = &self.branch(branch).foveation;
        let oct = self.config.pos_frequencies;

        let (h, w) = pyramid.sizes[0];
        let d = self.config.feature_dim;
        let flat = ctx.tape.reshape(pyramid.coarsest(), &[d, h * w])?;
        let periph = ctx.tape.transpose(flat)?;
        let feats = ctx.tape.constant(position_features(&cell_centers(h, w), oct));
        let pos = fov.pos.forward(ctx, feats)?;
        let periph = ctx.tape.add(periph, pos)?;
        let ty = ctx.param(fov.peripheral_type);
        let peripheral = ctx.tape.add_row_bias(periph, ty)?;

        let pts: Vec<(R, R)> = prefix.iter().map(|f| (R::of(f.x), R::of(f.y))).collect();
        let foveal_samples = ctx.tape.bilinear_sample(pyramid.finest(), &pts)?;
        let xy: Vec<(f64, f64)> = prefix.iter().map(|f| (f.x, f.y)).collect();
        let feats = ctx.tape.constant(position_features(&xy, oct));
        let pos = fov.pos.forward(ctx, feats)?;
        let x = ctx.tape.add(foveal_samples, pos)?;
        let ty = ctx.param(fov.foveal_type);
        let x = ctx.tape.add_row_bias(x, ty)?;
        let max_len = self.config.max_len_fv.max(self.config.max_len_vs);
        let t = prefix.len();
        let mut select = Tensor::<R>::zeros(&[t, max_len]);
        for i in 0..t {
            let age = (t - 1 - i).min(max_len - 1);
            select.data_mut()[i * max_len + age] = R::one();
        }
        let select = ctx.tape.constant(select);
        let rec = ctx.param(fov.recency);
        let rec = ctx.tape.matmul(select, rec)?;
        let foveal = ctx.tape.add(x, rec)?;
        Ok(FoveatedTokens {
            foveal_samples,
            foveal,
            peripheral,
        })
    }

    /// Self-attention memory over peripheral then foveal tokens.
    pub fn encode_memory(&self, ctx: &mut Ctx<'_, R>, tokens: Var, branch: Branch) -> Result<Var> {
        ctx.tape.set_scope(&alloc::format!("memory.{}", branch.tag()));
        let mut x = tokens;
        for layer in &self.branch(branch).memory {
            x = layer.forward(ctx, x)?;
        }
        Ok(x)
    }

    /// Task queries `[Q, D]` after cross-attending to memory.
    pub fn aggregate(&self, ctx: &mut Ctx<'_, R>, memory: Var, task: TaskSpec) -> Result<Var> {
        let branch = task.branch();
        if let Some(t) = task.target() {
            if t == 0 || t as usize > self.config.queries_vs {
                return Err(Error::Input(alloc::format!(
                    "search target {t} is outside 1..={}",
                    self.config.queries_vs
                )));
            }
        }
        ctx.tape.set_scope(&alloc::format!("aggregation.{}", branch.tag()));
        let m = self.branch(branch);
        let mut q = ctx.param(m.queries);
        for layer in &m.aggregation {
            q = layer.forward(ctx, q, memory)?;
        }
        Ok(q)
    }

    /// Row of the aggregated queries that drives the heads for `task`.
    pub fn task_query(&self, ctx: &mut Ctx<'_, R>, queries: Var, task: TaskSpec) -> Result<Var> {
        let row = task.target().map_or(0, |t| t as usize - 1);
        ctx.tape.slice_rows(queries, row, 1)
    }

    /// MLP-embedded query dotted with every cell of the finest map, and a
    /// sigmoid termination probability.
    pub fn predict_heatmap(&self, ctx: &mut Ctx<'_, R>, query: Var, pyramid: &FeaturePyramid, branch: Branch) -> Result<HeatmapVars> {
        ctx.tape.set_scope(&alloc::format!("heads.{}", branch.tag()));
        let heads = &self.branch(branch).heads;
        let e = heads.mlp1.forward(ctx, query)?;
        let e = ctx.tape.relu(e);
        let e = heads.mlp2.forward(ctx, e)?;
        let d = self.config.feature_dim;
        let (h, w) = pyramid.sizes[3];
        let map = ctx.tape.reshape(pyramid.finest(), &[d, h * w])?;
        let logits = ctx.tape.matmul(e, map)?;
        let logits = ctx.tape.scale(logits, R::one() / R::of(d as f64).sqrt());
        let prob = ctx.tape.softmax(logits, 1)?;
        let t = heads.termination.forward(ctx, query)?;
        let termination = ctx.tape.sigmoid(t);
        Ok(HeatmapVars {
            logits,
            prob,
            termination,
        })
    }

    /// One conditional prediction given a fixation prefix.
    pub fn predict_step(&self, ctx: &mut Ctx<'_, R>, pyramid: &FeaturePyramid, prefix: &[Fixation], task: TaskSpec) -> Result<HeatmapVars> {
        let branch = task.branch();
        let tok = self.foveate(ctx, pyramid, prefix, branch)?;
        let tokens = ctx.tape.concat_rows(&[tok.peripheral, tok.foveal])?;
        let memory = self.encode_memory(ctx, tokens, branch)?;
        let queries = self.aggregate(ctx, memory, task)?;
        let q = self.task_query(ctx, queries, task)?;
        self.predict_heatmap(ctx, q, pyramid, branch)
    }

    /// Detached pyramid for inference.
    pub fn pyramid_values(&self, image: &Tensor<R>, branch: Branch) -> Result<PyramidValues<R>> {
        let mut ctx = Ctx::frozen(&self.store);
        let img = ctx.tape.constant(image.clone());
        let p = self.features(&mut ctx, img, branch)?;
        Ok(PyramidValues {
            maps: p.maps.map(|v| ctx.tape.tensor(v)),
        })
    }

    /// Inference prediction from a detached pyramid.
    pub fn predict(&self, pyramid: &PyramidValues<R>, prefix: &[Fixation], task: TaskSpec) -> Result<HeatmapPrediction<R>> {
        let mut ctx = Ctx::frozen(&self.store);
        let maps = pyramid.maps.clone().map(|m| ctx.tape.constant(m));
        let sizes = pyramid.maps.each_ref().map(|m| (m.shape()[1], m.shape()[2]));
        let pyr = FeaturePyramid { maps, sizes };
        let out = self.predict_step(&mut ctx, &pyr, prefix, task)?;
        let (h, w) = sizes[3];
        Ok(HeatmapPrediction {
            logits: ctx.tape.tensor(out.logits).reshape(&[h, w])?,
            prob: ctx.tape.tensor(out.prob).reshape(&[h, w])?,
            termination: ctx.tape.value(out.termination)[0],
        })
    }
}
