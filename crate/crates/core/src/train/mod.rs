//! Teacher-forced training: stage 1 (free viewing), stage 2 (visual search on
//! a frozen shared prefix) and the end-to-end visual-search baseline.

mod checkpoint;
mod optim;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::data::{Fixation, ImageSample, Scanpath};
use crate::error::{Error, Result};
use crate::model::{Branch, FeatureCut, FeaturePyramid, FeatureState, Model, Partition};
use crate::nn::Ctx;
use crate::real::Real;
use crate::tensor::Tensor;

pub use checkpoint::{Checkpoint, CheckpointHeader, Stage, CHECKPOINT_VERSION};
pub use optim::AdamW;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Images per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    /// Ground-truth Gaussian std as a fraction of the image width.
    pub gt_sigma_fraction: f64,
    /// Weight of the termination term relative to the heatmap term.
    pub termination_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 8,
            epochs: 15,
            weight_decay: 1e-4,
            focal_gamma: 2.0,
            focal_alpha: 4.0,
            gt_sigma_fraction: 1.0 / 32.0,
            termination_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "learning_rate, batch_size and epochs must be positive".into(),
            ));
        }
        if !(self.gt_sigma_fraction > 0.0) || self.weight_decay < 0.0 || self.termination_weight < 0.0 {
            return Err(Error::Config(
                "gt_sigma_fraction must be positive; weight_decay and termination_weight nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian target on an `h x w` grid peaking at exactly 1 in the cell that
/// contains `fix`; `sigma_cells` is the std in cells.
pub fn gt_heatmap<R: Real>(h: usize, w: usize, fix: Fixation, sigma_cells: f64) -> Vec<R> {
    let (r0, c0) = fix.cell(h, w);
    let denom = 2.0 * sigma_cells * sigma_cells;
    (0..h * w)
        .map(|i| {
            let dr = (i / w) as f64 - r0 as f64;
            let dc = (i % w) as f64 - c0 as f64;
            R::of(Float::exp(-(dr * dr + dc * dc) / denom))
        })
        .collect()
}

/// `-(1-p)^g log p` at peaks, `-(1-y)^a p^g log(1-p)` elsewhere, averaged over
/// peaks. Plain-number version of the tape op.
pub fn focal_loss_value(prob: &[f64], target: &[f64], gamma: f64, alpha: f64) -> Result<f64> {
    let mut tape = crate::autodiff::Tape::<f64>::new();
    let p = tape.constant(Tensor::new(&[prob.len()], prob.to_vec())?);
    let l = tape.focal_loss(p, target, gamma, alpha)?;
    Ok(tape.value(l)[0])
}

/// `-[y log p + (1-y) log(1-p)]` with `p` clamped away from 0 and 1.
pub fn termination_loss_value(p: f64, label: f64) -> f64 {
    let mut tape = crate::autodiff::Tape::<f64>::new();
    let v = tape.constant(Tensor::scalar(p));
    let l = tape.bce(v, label).expect("scalar input");
    tape.value(l)[0]
}

/// Number of supervised prediction steps a scanpath contributes.
pub fn supervised_steps(sp: &Scanpath) -> usize {
    sp.len().saturating_sub(1) + usize::from(sp.terminated)
}

/// Summed per-step losses of one scanpath under teacher forcing.
#[derive(Debug, Clone, Copy)]
pub struct ScanpathLoss {
    pub total: Var,
    pub focal: f64,
    pub termination: f64,
    pub steps: usize,
}

/// Step `t < len` predicts fixation `t` from the first `t` (termination label
/// 0); a terminated scanpath adds a final step on the full prefix with label 1.
pub fn scanpath_loss<R: Real>(
    model: &Model<R>,
    ctx: &mut Ctx<'_, R>,
    pyramid: &FeaturePyramid,
    sp: &Scanpath,
    cfg: &TrainConfig,
) -> Result<Option<ScanpathLoss>> {
    let (h, w) = pyramid.sizes[3];
    let sigma = cfg.gt_sigma_fraction * w as f64;
    let (gamma, alpha) = (R::of(cfg.focal_gamma), R::of(cfg.focal_alpha));
    let weight = R::of(cfg.termination_weight);
    let mut terms = Vec::new();
    let (mut focal, mut term) = (0.0, 0.0);
    for t in 1..sp.len() {
        let out = model.predict_step(ctx, pyramid, &sp.fixations[..t], sp.task)?;
        let target = gt_heatmap::<R>(h, w, sp.fixations[t], sigma);
        let f = ctx.tape.focal_loss(out.prob, &target, gamma, alpha)?;
        let b = ctx.tape.bce(out.termination, R::zero())?;
        focal += ctx.tape.value(f)[0].as_f64();
        term += ctx.tape.value(b)[0].as_f64();
        let b = ctx.tape.scale(b, weight);
        terms.push(ctx.tape.add(f, b)?);
    }
    if sp.terminated {
        let out = model.predict_step(ctx, pyramid, &sp.fixations, sp.task)?;
        let b = ctx.tape.bce(out.termination, R::one())?;
        term += ctx.tape.value(b)[0].as_f64();
        terms.push(ctx.tape.scale(b, weight));
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = ctx.tape.add(total, t)?;
    }
    Ok(Some(ScanpathLoss {
        total,
        focal,
        termination: term,
        steps: terms.len(),
    }))
}

/// Mean losses over one epoch's supervised steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub focal: f64,
    pub termination: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
    pub trainable_parameters: usize,
}

/// Parameters updated by each procedure.
pub fn trainable(stage: Stage, p: Partition) -> bool {
    match stage {
        Stage::Fv => !matches!(p.branch(), Some(Branch::Vs)),
        Stage::VsShared => p.branch() == Some(Branch::Vs),
        Stage::VsE2e => p == Partition::SharedDecoder || p.branch() == Some(Branch::Vs),
    }
}

/// One image with its scanpaths for the branch being trained.
struct Group<'a> {
    state: FeatureState<f32>,
    scanpaths: Vec<&'a Scanpath>,
}

fn group<'a>(
    model: &Model<f32>,
    images: &[ImageSample],
    scanpaths: &'a [Scanpath],
    branch: Branch,
    cut: FeatureCut,
) -> Result<Vec<Group<'a>>> {
    let by_id: BTreeMap<&str, &ImageSample> = images.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut grouped: BTreeMap<&str, Vec<&Scanpath>> = BTreeMap::new();
    for (i, sp) in scanpaths.iter().enumerate() {
        if sp.task.branch() != branch {
            continue;
        }
        if !by_id.contains_key(sp.image_id.as_str()) {
            return Err(Error::Input(alloc::format!(
                "scanpath {i} references unknown image '{}'",
                sp.image_id
            )));
        }
        sp.validate(model.config.max_len(branch))?;
        grouped.entry(sp.image_id.as_str()).or_default().push(sp);
    }
    if grouped.values().flatten().all(|sp| supervised_steps(sp) == 0) {
        return Err(Error::Config(alloc::format!(
            "no {} scanpaths with supervised steps to train on",
            branch.tag()
        )));
    }
    grouped
        .into_iter()
        .map(|(id, sps)| {
            Ok(Group {
                state: model.feature_state(&by_id[id].pixels, branch, cut)?,
                scanpaths: sps,
            })
        })
        .collect()
}

/// Trains the parameters selected by `stage` on the scanpaths of `branch`,
/// returning per-epoch mean losses. Everything outside the selection is left
/// bit-identical.
pub fn fit(
    model: &mut Model<f32>,
    stage: Stage,
    images: &[ImageSample],
    scanpaths: &[Scanpath],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    let branch = if stage == Stage::Fv { Branch::Fv } else { Branch::Vs };
    let mask = model.mask(|p| trainable(stage, p));
    // frozen leading computation is evaluated once per image
    let cut = match stage {
        Stage::Fv => FeatureCut::Image,
        Stage::VsShared => FeatureCut::Tokens(model.split.shared_layers),
        Stage::VsE2e => FeatureCut::Base,
    };
    let groups = group(model, images, scanpaths, branch, cut)?;
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(cfg.learning_rate, cfg.weight_decay);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut focal_sum, mut term_sum, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let batch_steps: usize = batch
                .iter()
                .flat_map(|&g| groups[g].scanpaths.iter())
                .map(|sp| supervised_steps(sp))
                .sum();
            if batch_steps == 0 {
                continue;
            }
            let norm = 1.0 / batch_steps as f32;
            let mut acc: Vec<Option<Vec<f64>>> = vec![None; model.store.len()];
            for &g in batch {
                let grp = &groups[g];
                let mut ctx = Ctx::training(&model.store, &mask);
                let pyramid = model.pyramid_from_state(&mut ctx, &grp.state, branch)?;
                let mut total: Option<Var> = None;
                for sp in &grp.scanpaths {
                    let Some(l) = scanpath_loss(model, &mut ctx, &pyramid, sp, cfg)? else {
                        continue;
                    };
                    focal_sum += l.focal;
                    term_sum += l.termination;
                    steps += l.steps;
                    total = Some(match total {
                        Some(t) => ctx.tape.add(t, l.total)?,
                        None => l.total,
                    });
                }
                let Some(total) = total else { continue };
                loss_sum += ctx.tape.value(total)[0] as f64;
                let loss = ctx.tape.scale(total, norm);
                let bindings = ctx.bindings();
                let grads = ctx.into_tape().backward(loss)?;
                for (id, v) in bindings {
                    if let Some(g) = grads.get(v) {
                        let slot = acc[id.0].get_or_insert_with(|| vec![0.0; g.len()]);
                        for (a, &x) in slot.iter_mut().zip(g) {
                            *a += x as f64;
                        }
                    }
                }
            }
            opt.update(&mut model.store, &mask, &acc);
        }
        if steps == 0 {
            return Err(Error::Config("no supervised steps in epoch".into()));
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / steps as f64,
            focal: focal_sum / steps as f64,
            termination: term_sum / steps as f64,
            steps,
        };
        if !stats.loss.is_finite() {
            return Err(Error::Input(alloc::format!("training diverged in epoch {epoch}")));
        }
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

/// Stage 1: encoder, shared prefix, FV suffix and FV modules.
pub fn train_stage1_fv(
    model: &mut Model<f32>,
    images: &[ImageSample],
    scanpaths: &[Scanpath],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    let history = fit(model, Stage::Fv, images, scanpaths, cfg, on_epoch)?;
    Ok(outcome(model, Stage::Fv, cfg, history))
}

/// Stage 2: copies the encoder and shared prefix from a stage-1 checkpoint,
/// then trains only the VS suffix and VS modules.
pub fn train_stage2_vs_shared(
    model: &mut Model<f32>,
    fv: &Checkpoint,
    images: &[ImageSample],
    scanpaths: &[Scanpath],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    require_fv(fv, model)?;
    if fv.header.split != model.split {
        return Err(Error::Load(alloc::format!(
            "checkpoint shares {} decoder layers but the model shares {}",
            fv.header.split.shared_layers,
            model.split.shared_layers
        )));
    }
    fv.load_into(model, |p| matches!(p, Partition::Encoder | Partition::SharedDecoder))?;
    let history = fit(model, Stage::VsShared, images, scanpaths, cfg, on_epoch)?;
    Ok(outcome(model, Stage::VsShared, cfg, history))
}

/// End-to-end VS baseline: only the encoder comes from the stage-1
/// checkpoint; the whole pixel decoder along the VS path and the VS modules
/// train from the model's own initialization.
pub fn train_end_to_end_vs(
    model: &mut Model<f32>,
    fv: &Checkpoint,
    images: &[ImageSample],
    scanpaths: &[Scanpath],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    require_fv(fv, model)?;
    fv.load_into(model, |p| p == Partition::Encoder)?;
    let history = fit(model, Stage::VsE2e, images, scanpaths, cfg, on_epoch)?;
    Ok(outcome(model, Stage::VsE2e, cfg, history))
}

fn require_fv(fv: &Checkpoint, model: &Model<f32>) -> Result<()> {
    if fv.stage() != Stage::Fv {
        return Err(Error::Load(alloc::format!(
            "expected an fv checkpoint, got stage '{}'",
            fv.stage()
        )));
    }
    if fv.header.model != model.config {
        return Err(Error::Load("checkpoint model config differs from the model being trained".into()));
    }
    Ok(())
}

fn outcome(model: &Model<f32>, stage: Stage, cfg: &TrainConfig, history: Vec<EpochStats>) -> TrainOutcome {
    TrainOutcome {
        checkpoint: Checkpoint::from_model(model, stage, cfg),
        history,
        trainable_parameters: model.parameter_count(|p| trainable(stage, p)),
    }
}
