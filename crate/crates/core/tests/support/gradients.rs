//! Finite-difference checks for every differentiable tape operation and for
//! a tiny end-to-end model. Shared by the core tests and the acceptance run.

#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scanshare_core::autodiff::{
    check_gradients, DeformLayout, DeformLevel, GradCheckOptions, GradCheckReport, Tape, Var,
};
use scanshare_core::data::{generate_scene, oracle_scanpath_fv, oracle_scanpath_vs, SceneParams};
use scanshare_core::model::{Branch, Model, ModelConfig, SplitConfig};
use scanshare_core::nn::Ctx;
use scanshare_core::train::{scanpath_loss, TrainConfig};
use scanshare_core::{Result, Tensor};

pub const TOLERANCE: f64 = 1e-4;

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn named(params: Vec<(&str, Tensor<f64>)>) -> Vec<(String, Tensor<f64>)> {
    params.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

/// Contracts `out` with fixed random weights so every output entry matters.
pub fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, tape.shape(out));
    let w = tape.constant(w);
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

type Builder = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

/// One named case per differentiable operation.
pub fn op_cases() -> Vec<(&'static str, Vec<(String, Tensor<f64>)>, Builder)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cases: Vec<(&'static str, Vec<(String, Tensor<f64>)>, Builder)> = Vec::new();
    let mut add = |name: &'static str, params: Vec<(&str, Tensor<f64>)>, f: Builder| {
        cases.push((name, named(params), f));
    };

    add(
        "matmul",
        vec![("a", random(&mut rng, &[3, 4])), ("b", random(&mut rng, &[4, 2]))],
        Box::new(|t, v| {
            let y = t.matmul(v[0], v[1])?;
            project(t, y, 1)
        }),
    );
    add(
        "transpose",
        vec![("a", random(&mut rng, &[3, 5]))],
        Box::new(|t, v| {
            let y = t.transpose(v[0])?;
            project(t, y, 2)
        }),
    );
    add(
        "reshape",
        vec![("a", random(&mut rng, &[2, 6]))],
        Box::new(|t, v| {
            let y = t.reshape(v[0], &[3, 4])?;
            project(t, y, 3)
        }),
    );
    add(
        "add",
        vec![("a", random(&mut rng, &[2, 3])), ("b", random(&mut rng, &[2, 3]))],
        Box::new(|t, v| {
            let y = t.add(v[0], v[1])?;
            project(t, y, 4)
        }),
    );
    add(
        "sub",
        vec![("a", random(&mut rng, &[2, 3])), ("b", random(&mut rng, &[2, 3]))],
        Box::new(|t, v| {
            let y = t.sub(v[0], v[1])?;
            project(t, y, 5)
        }),
    );
    add(
        "mul",
        vec![("a", random(&mut rng, &[2, 3])), ("b", random(&mut rng, &[2, 3]))],
        Box::new(|t, v| {
            let y = t.mul(v[0], v[1])?;
            project(t, y, 6)
        }),
    );
    add(
        "add_row_bias",
        vec![("a", random(&mut rng, &[3, 4])), ("bias", random(&mut rng, &[4]))],
        Box::new(|t, v| {
            let y = t.add_row_bias(v[0], v[1])?;
            project(t, y, 7)
        }),
    );
    add(
        "add_channel_bias",
        vec![("a", random(&mut rng, &[2, 3, 3])), ("bias", random(&mut rng, &[2]))],
        Box::new(|t, v| {
            let y = t.add_channel_bias(v[0], v[1])?;
            project(t, y, 8)
        }),
    );
    add(
        "scale",
        vec![("a", random(&mut rng, &[5]))],
        Box::new(|t, v| {
            let y = t.scale(v[0], -1.7);
            project(t, y, 9)
        }),
    );
    add(
        "relu",
        vec![("a", random(&mut rng, &[8]))],
        Box::new(|t, v| {
            let y = t.relu(v[0]);
            project(t, y, 10)
        }),
    );
    add(
        "sigmoid",
        vec![("a", random(&mut rng, &[6]))],
        Box::new(|t, v| {
            let y = t.sigmoid(v[0]);
            project(t, y, 11)
        }),
    );
    add(
        "softmax",
        vec![("a", random(&mut rng, &[3, 4]))],
        Box::new(|t, v| {
            let y = t.softmax(v[0], 1)?;
            let z = t.softmax(v[0], 0)?;
            let s = t.add(y, z)?;
            project(t, s, 12)
        }),
    );
    add(
        "layer_norm",
        vec![
            ("x", random(&mut rng, &[3, 5])),
            ("gain", random(&mut rng, &[5])),
            ("bias", random(&mut rng, &[5])),
        ],
        Box::new(|t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?;
            project(t, y, 13)
        }),
    );
    add(
        "conv2d",
        vec![("x", random(&mut rng, &[2, 5, 5])), ("k", random(&mut rng, &[3, 2, 3, 3]))],
        Box::new(|t, v| {
            let y = t.conv2d(v[0], v[1], 1, 1)?;
            let z = t.conv2d(v[0], v[1], 2, 1)?;
            let a = project(t, y, 14)?;
            let b = project(t, z, 15)?;
            t.add(a, b)
        }),
    );
    add(
        "attention",
        vec![
            ("q", random(&mut rng, &[2, 4])),
            ("k", random(&mut rng, &[3, 4])),
            ("v", random(&mut rng, &[3, 4])),
        ],
        Box::new(|t, v| {
            let y = t.attention(v[0], v[1], v[2], 2)?;
            project(t, y, 16)
        }),
    );
    add(
        "bilinear_sample",
        vec![("map", random(&mut rng, &[2, 4, 5]))],
        Box::new(|t, v| {
            let y = t.bilinear_sample(v[0], &[(0.31, 0.77), (0.5, 0.5), (0.93, 0.12), (0.0, 1.0)])?;
            project(t, y, 17)
        }),
    );
    add(
        "deform_sample",
        vec![
            ("value", random(&mut rng, &[4 * 3 + 2 * 2, 4])),
            ("offsets", random(&mut rng, &[2, 2 * 2 * 2 * 2]).map_data(|x| 0.9 * x + 0.11)),
            ("weights", random(&mut rng, &[2, 2 * 2 * 2])),
        ],
        Box::new(|t, v| {
            let layout = Arc::new(DeformLayout {
                levels: vec![
                    DeformLevel { h: 3, w: 4, start: 0 },
                    DeformLevel { h: 2, w: 2, start: 12 },
                ],
                refs: vec![(0.37, 0.61), (0.83, 0.29)],
                heads: 2,
                points: 2,
            });
            let y = t.deform_sample(v[0], v[1], v[2], layout)?;
            project(t, y, 18)
        }),
    );
    add(
        "concat_slice",
        vec![("a", random(&mut rng, &[2, 3])), ("b", random(&mut rng, &[3, 3]))],
        Box::new(|t, v| {
            let c = t.concat_rows(&[v[0], v[1]])?;
            let s = t.slice_rows(c, 1, 3)?;
            project(t, s, 19)
        }),
    );
    add(
        "sum_mean",
        vec![("a", random(&mut rng, &[4, 2]))],
        Box::new(|t, v| {
            let sq = t.mul(v[0], v[0])?;
            let s = t.sum(sq);
            let m = t.mean(v[0]);
            let m = t.scale(m, 3.0);
            t.add(s, m)
        }),
    );
    add(
        "focal_loss",
        vec![("logits", random(&mut rng, &[3, 4]))],
        Box::new(|t, v| {
            let p = t.softmax(v[0], 1)?;
            let p = t.reshape(p, &[12])?;
            let target: Vec<f64> = (0..12).map(|i| if i == 5 { 1.0 } else { 0.1 * (i % 4) as f64 }).collect();
            t.focal_loss(p, &target, 2.0, 4.0)
        }),
    );
    add(
        "bce",
        vec![("logit", random(&mut rng, &[1]))],
        Box::new(|t, v| {
            let p = t.sigmoid(v[0]);
            let a = t.bce(p, 1.0)?;
            let b = t.bce(p, 0.0)?;
            let b = t.scale(b, 0.5);
            t.add(a, b)
        }),
    );
    cases
}

trait MapData {
    fn map_data(self, f: impl Fn(f64) -> f64) -> Self;
}

impl MapData for Tensor<f64> {
    fn map_data(mut self, f: impl Fn(f64) -> f64) -> Self {
        for x in self.data_mut() {
            *x = f(*x);
        }
        self
    }
}

pub fn op_reports() -> Vec<(&'static str, GradCheckReport)> {
    op_cases()
        .into_iter()
        .map(|(name, params, build)| {
            let report = check_gradients(&params, build, GradCheckOptions::with_tolerance(TOLERANCE))
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, report)
        })
        .collect()
}

/// D=16, 2 decoder layers (1 shared + 1 per branch), both branches' losses.
pub fn tiny_model_report(entries_per_param: usize) -> GradCheckReport {
    let params = SceneParams {
        height: 32,
        width: 32,
        rows: 2,
        cols: 2,
        categories: 2,
    };
    let scene = generate_scene(3, &params).unwrap();
    let img = scene.sample;
    let fv = oracle_scanpath_fv(&img, 1, 3).unwrap();
    let target = *img.present_targets.iter().next().unwrap();
    let vs = oracle_scanpath_vs(&img, target, 1).unwrap();
    let cfg = ModelConfig::tiny();
    let model: Model<f64> = Model::build(&cfg, SplitConfig::new(1, cfg.decoder_layers).unwrap(), 7).unwrap();
    let pixels = img.pixels.cast::<f64>();
    let tc = TrainConfig::default();
    let named: Vec<(String, Tensor<f64>)> = model
        .store
        .iter()
        .map(|(_, p)| (p.name.clone(), p.value.clone()))
        .collect();
    check_gradients(
        &named,
        |tape, vars| {
            let t = std::mem::replace(tape, Tape::new());
            let mut ctx = Ctx::preset(t, &model.store, vars);
            let x = ctx.tape.constant(pixels.clone());
            let pf = model.features(&mut ctx, x, Branch::Fv)?;
            let lf = scanpath_loss(&model, &mut ctx, &pf, &fv, &tc)?.expect("fv steps").total;
            let pv = model.features(&mut ctx, x, Branch::Vs)?;
            let lv = scanpath_loss(&model, &mut ctx, &pv, &vs, &tc)?.expect("vs steps").total;
            let loss = ctx.tape.add(lf, lv)?;
            *tape = ctx.into_tape();
            Ok(loss)
        },
        GradCheckOptions {
            max_entries_per_param: Some(entries_per_param),
            ..GradCheckOptions::with_tolerance(TOLERANCE)
        },
    )
    .unwrap()
}
