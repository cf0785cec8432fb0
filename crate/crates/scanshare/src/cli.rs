//! `scanshare` subcommands: synth, train, eval, account, render.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use scanshare_core::accounting::{CostReport, SharingReport, Table3Check};
use scanshare_core::data::{
    generate_scene, oracle_scanpath_fv, oracle_scanpath_vs, split_dataset, Scanpath, SceneParams, TaskSpec,
};
use scanshare_core::metrics::{
    evaluate, Baselines, EvalOptions, Policy, BASELINE_FLOOR, DEFAULT_CELL_FRACTION, REPORT_HEADER,
};
use scanshare_core::model::{Branch, Model, ModelConfig, Partition, SelectMode, SplitConfig};
use scanshare_core::train::{
    train_end_to_end_vs, train_stage1_fv, train_stage2_vs_shared, trainable, EpochStats, Stage, TrainConfig,
};
use scanshare_core::Error;

use crate::checkpoint;
use crate::dataset::{self, Dataset};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::render::render_overlay;
use crate::table2;

/// Default output root when `--out` is not given.
pub const OUT_ENV: &str = "SCANSHARE_OUT";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

#[derive(Debug, Parser)]
#[command(name = "scanshare", version, about = "Dual-branch scanpath model with a shared pixel-decoder prefix")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes with oracle FV and VS scanpaths.
    Synth(SynthArgs),
    /// Train a stage and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint (or a reference policy) on a dataset.
    Eval(EvalArgs),
    /// Parameter and FLOP tables and sharing percentages.
    Account(AccountArgs),
    /// Draw a rolled-out scanpath over an image.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with a [synth] table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub categories: Option<usize>,
    /// Free-viewing scanpath length including the center start.
    #[arg(long)]
    pub fv_length: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Fv,
    VsShared,
    VsE2e,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Fv => Stage::Fv,
            StageArg::VsShared => Stage::VsShared,
            StageArg::VsE2e => Stage::VsE2e,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub stage: StageArg,
    /// LS, ES51, ES42, ES33, ES24 or ES15.
    #[arg(long, default_value = "LS")]
    pub split: String,
    /// Dataset directory written by `synth`.
    #[arg(long)]
    pub data: PathBuf,
    /// Stage-1 checkpoint (required for the VS stages).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file with [model] and [train] tables; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Seed for shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for parameter initialization.
    #[arg(long, default_value_t = 0)]
    pub model_seed: u64,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Seed of the train/val/test split by image.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Model,
    Uniform,
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SubsetArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Argmax,
    Sample,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// fv or vs.
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "model")]
    pub policy: PolicyArg,
    #[arg(long, value_enum, default_value = "test")]
    pub subset: SubsetArg,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, value_enum, default_value = "argmax")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_CELL_FRACTION)]
    pub cell_fraction: f64,
    /// Std of the density-baseline Gaussians as a fraction of the width.
    #[arg(long, default_value_t = 1.0 / 16.0)]
    pub baseline_sigma: f64,
}

#[derive(Debug, Args)]
pub struct AccountArgs {
    #[arg(long, conflicts_with = "config")]
    pub ckpt: Option<PathBuf>,
    /// TOML file with a [model] table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// WIDTHxHEIGHT, e.g. 128x96.
    #[arg(long, default_value = "128x96")]
    pub input_size: String,
    /// Published per-module costs, CSV `component,params_m,gflops`.
    #[arg(long)]
    pub table2: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// PPM image; a `<id>.seg.pgm` sidecar is optional.
    #[arg(long)]
    pub image: PathBuf,
    /// fv or vs:<target>.
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fixation file with the ground truth to draw alongside.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub scale: u32,
    #[arg(long, value_enum, default_value = "argmax")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub rows: usize,
    pub cols: usize,
    pub categories: usize,
    pub fv_length: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let p = SceneParams::default();
        SynthConfig {
            height: p.height,
            width: p.width,
            rows: p.rows,
            cols: p.cols,
            categories: p.categories,
            fv_length: 5,
        }
    }
}

/// Optional TOML configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub synth: Option<SynthConfig>,
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
}

impl FileConfig {
    pub fn read(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Account(a) => cmd_account(a),
        Command::Render(a) => cmd_render(a),
    }
}

fn out_dir(out: Option<PathBuf>, command: &str) -> Result<PathBuf> {
    let dir = out.unwrap_or_else(|| {
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(command)
    });
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config serializes")
}

/// Scenes `0..count` with one FV scanpath each and one VS scanpath per
/// present category.
pub fn synthesize(seed: u64, count: usize, cfg: &SynthConfig) -> Result<Dataset> {
    let params = SceneParams {
        height: cfg.height,
        width: cfg.width,
        rows: cfg.rows,
        cols: cfg.cols,
        categories: cfg.categories,
    };
    let mut data = Dataset::default();
    for i in 0..count {
        let scene_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64);
        let mut scene = generate_scene(scene_seed, &params)?;
        scene.sample.id = format!("scene-{i:06}");
        let img = scene.sample;
        data.scanpaths.push(oracle_scanpath_fv(&img, scene_seed, cfg.fv_length)?);
        for &t in &img.present_targets {
            data.scanpaths.push(oracle_scanpath_vs(&img, t, scene_seed)?);
        }
        data.images.push(img);
    }
    Ok(data)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let file = FileConfig::read(a.config.as_deref())?;
    let mut cfg = file.synth.unwrap_or_default();
    let flags = [
        (&mut cfg.height, a.height),
        (&mut cfg.width, a.width),
        (&mut cfg.rows, a.rows),
        (&mut cfg.cols, a.cols),
        (&mut cfg.categories, a.categories),
        (&mut cfg.fv_length, a.fv_length),
    ];
    for (slot, flag) in flags {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    let data = synthesize(a.seed, a.count, &cfg)?;
    let dir = out_dir(a.out, "synth")?;
    let mut manifest = RunManifest::start("synth", to_json(&cfg), Some(a.seed));
    for f in dataset::save_dir(&dir, &data)? {
        manifest.output(&f)?;
    }
    manifest.finish(&dir)?;
    let vs = data.scanpaths.iter().filter(|s| s.task != TaskSpec::FreeViewing).count();
    println!(
        "wrote {} images, {} fv and {vs} vs scanpaths to {}",
        data.images.len(),
        data.scanpaths.len() - vs,
        dir.display()
    );
    Ok(())
}

/// Scanpaths of the requested subset after splitting images 80/10/10.
fn subset(data: &Dataset, which: SubsetArg, seed: u64) -> Result<Vec<Scanpath>> {
    if which == SubsetArg::All {
        return Ok(data.scanpaths.clone());
    }
    let split = split_dataset(&data.scanpaths, (0.8, 0.1, 0.1), seed)?;
    Ok(match which {
        SubsetArg::Train => split.train,
        SubsetArg::Val => split.val,
        _ => split.test,
    })
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let stage = Stage::from(a.stage);
    let split = SplitConfig::parse(&a.split)?;
    let file = FileConfig::read(a.config.as_deref())?;
    let init = match (&a.init, stage) {
        (None, Stage::VsShared | Stage::VsE2e) => {
            return Err(CliError::Usage(format!(
                "--stage {} requires --init with a stage-1 (fv) checkpoint",
                stage.tag().replace('_', "-")
            )))
        }
        (Some(p), _) => Some(checkpoint::load(p)?),
        (None, Stage::Fv) => None,
    };
    let mut model_cfg = match (&init, file.model.clone()) {
        (_, Some(m)) => m,
        (Some(ck), None) => ck.header.model.clone(),
        (None, None) => ModelConfig::default(),
    };
    if let Some(d) = a.feature_dim {
        model_cfg.feature_dim = d;
    }
    let mut tc = file.train.unwrap_or_default();
    if let Some(v) = a.epochs {
        tc.epochs = v;
    }
    if let Some(v) = a.lr {
        tc.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = a.seed {
        tc.seed = v;
    }
    let split = SplitConfig::new(split.shared_layers, model_cfg.decoder_layers)?;

    let data = dataset::load_dir(&a.data)?;
    let train_set = subset(&data, SubsetArg::Train, a.split_seed)?;
    let mut model: Model<f32> = Model::build(&model_cfg, split, a.model_seed)?;

    let mask_count = |p: fn(Partition) -> bool| model.parameter_count(|q| trainable(stage, q) && p(q));
    let task_layers = match stage {
        Stage::Fv => model.task_layers(Branch::Fv).len(),
        Stage::VsShared => model.task_layers(Branch::Vs).len(),
        Stage::VsE2e => model_cfg.decoder_layers,
    };
    println!(
        "stage {} split {}: {} shared / {} task-specific decoder layers",
        stage,
        split.label(model_cfg.decoder_layers),
        split.shared_layers,
        split.task_layers(model_cfg.decoder_layers)
    );
    println!(
        "trainable parameters: {} of {}",
        model.parameter_count(|p| trainable(stage, p)),
        model.parameter_count(|_| true)
    );
    println!("trainable pixel-decoder parameters: {}", mask_count(Partition::is_decoder));
    println!("decoder layers trained: {task_layers}");

    let print = |s: &EpochStats| {
        println!(
            "epoch {:>3} loss {:.6} focal {:.6} termination {:.6} steps {}",
            s.epoch, s.loss, s.focal, s.termination, s.steps
        )
    };
    let images = &data.images;
    let outcome = match (stage, &init) {
        (Stage::Fv, _) => train_stage1_fv(&mut model, images, &train_set, &tc, print)?,
        (Stage::VsShared, Some(ck)) => train_stage2_vs_shared(&mut model, ck, images, &train_set, &tc, print)?,
        (Stage::VsE2e, Some(ck)) => train_end_to_end_vs(&mut model, ck, images, &train_set, &tc, print)?,
        _ => unreachable!("init presence checked above"),
    };

    let dir = out_dir(a.out, "train")?;
    let config = serde_json::json!({
        "stage": stage.tag(),
        "split": split.label(model_cfg.decoder_layers),
        "model": model_cfg,
        "train": tc,
        "model_seed": a.model_seed,
        "split_seed": a.split_seed,
    });
    let mut manifest = RunManifest::start("train", config, Some(tc.seed));
    manifest.input(&a.data.join(dataset::FIXATION_FILE))?;
    if let Some(p) = &a.init {
        manifest.input(p)?;
    }
    let ck_path = dir.join(CHECKPOINT_FILE);
    checkpoint::save(&outcome.checkpoint, &ck_path)?;
    let mut losses = String::from("epoch,loss,focal,termination,steps\n");
    for s in &outcome.history {
        losses += &format!("{},{},{},{},{}\n", s.epoch, s.loss, s.focal, s.termination, s.steps);
    }
    let loss_path = dir.join("losses.csv");
    write(&loss_path, &losses)?;
    manifest.output(&ck_path)?;
    manifest.output(&loss_path)?;
    manifest.finish(&dir)?;
    println!("wrote {}", ck_path.display());
    Ok(())
}

fn parse_branch(task: &str) -> Result<Branch> {
    match task {
        "fv" => Ok(Branch::Fv),
        "vs" => Ok(Branch::Vs),
        other => Err(CliError::Usage(format!("--task must be fv or vs, got '{other}'"))),
    }
}

fn parse_task(task: &str) -> Result<TaskSpec> {
    if task == "fv" {
        return Ok(TaskSpec::FreeViewing);
    }
    let target = task
        .strip_prefix("vs:")
        .and_then(|t| t.parse::<u8>().ok())
        .ok_or_else(|| CliError::Usage(format!("--task must be fv or vs:<target>, got '{task}'")))?;
    TaskSpec::search(target).map_err(|e| CliError::Usage(e.to_string()))
}

fn select_mode(mode: ModeArg, seed: u64) -> SelectMode {
    match mode {
        ModeArg::Argmax => SelectMode::Argmax,
        ModeArg::Sample => SelectMode::Sample(seed),
    }
}

pub const REPORT_NOTE: &str =
    "# SS/SemSS: 1 - Levenshtein distance / longer length over grid-cell and segmentation labels; cIG in bits";

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let branch = parse_branch(&a.task)?;
    let data = dataset::load_dir(&a.data)?;
    let train_set = subset(&data, SubsetArg::Train, a.split_seed)?;
    let eval_set = subset(&data, a.subset, a.split_seed)?;
    let first = data
        .images
        .first()
        .ok_or_else(|| CliError::Core(Error::Input("dataset has no images".into())))?;
    let baselines = Baselines::build(&train_set, first.height() / 4, first.width() / 4, a.baseline_sigma, BASELINE_FLOOR)?;

    let model = match (a.policy, &a.ckpt) {
        (PolicyArg::Model, None) => return Err(CliError::Usage("--policy model needs --ckpt".into())),
        (_, Some(p)) => Some((checkpoint::load(p)?, p)),
        _ => None,
    };
    let built = model.as_ref().map(|(ck, _)| ck.to_model()).transpose()?;
    let (policy, method) = match a.policy {
        PolicyArg::Model => {
            let (ck, _) = model.as_ref().expect("checked");
            let m = built.as_ref().expect("built with checkpoint");
            (
                Policy::Model {
                    model: m,
                    mode: select_mode(a.mode, a.seed),
                },
                format!("{}-{}", ck.header.split.label(ck.header.model.decoder_layers), ck.stage()),
            )
        }
        PolicyArg::Uniform => {
            let lens: Vec<usize> = train_set.iter().filter(|s| s.task.branch() == branch).map(|s| s.len()).collect();
            let mean = lens.iter().sum::<usize>() as f64 / lens.len().max(1) as f64;
            (
                Policy::Uniform {
                    seed: a.seed,
                    length: mean.round().max(1.0) as usize,
                },
                "uniform".to_string(),
            )
        }
        PolicyArg::GroundTruth => (Policy::GroundTruth, "ground-truth".to_string()),
    };
    let opts = EvalOptions {
        cell_fraction: a.cell_fraction,
    };
    let report = evaluate(policy, &method, &data.images, &eval_set, branch, &baselines, opts)?;
    if report.semss.is_none() {
        eprintln!("warning: some images have no segmentation; SemSS left empty");
    }
    let table = format!("{REPORT_NOTE}\n{REPORT_HEADER}\n{}\n", report.row());
    print!("{table}");

    let dir = out_dir(a.out, "eval")?;
    let config = serde_json::json!({
        "task": a.task,
        "policy": format!("{:?}", a.policy),
        "subset": format!("{:?}", a.subset),
        "split_seed": a.split_seed,
        "mode": format!("{:?}", a.mode),
        "cell_fraction": a.cell_fraction,
        "baseline_sigma": a.baseline_sigma,
        "scanpaths": report.scanpaths,
        "fixations": report.fixations,
    });
    let mut manifest = RunManifest::start("eval", config, Some(a.seed));
    manifest.input(&a.data.join(dataset::FIXATION_FILE))?;
    if let Some((_, p)) = &model {
        manifest.input(p)?;
    }
    let path = dir.join("metrics.csv");
    write(&path, &table)?;
    manifest.output(&path)?;
    manifest.finish(&dir)?;
    Ok(())
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Usage(format!("--input-size must be WIDTHxHEIGHT, got '{s}'"));
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    Ok((w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?))
}

fn cmd_account(a: AccountArgs) -> Result<()> {
    let (width, height) = parse_size(&a.input_size)?;
    let mut manifest;
    let (config, split) = match (&a.ckpt, &a.config) {
        (Some(p), _) => {
            let ck = checkpoint::load(p)?;
            manifest = RunManifest::start("account", to_json(&ck.header.model), None);
            manifest.input(p)?;
            (ck.header.model.clone(), ck.header.split)
        }
        (None, cfg) => {
            let file = FileConfig::read(cfg.as_deref())?;
            let model = file.model.unwrap_or_default();
            manifest = RunManifest::start("account", to_json(&model), None);
            if let Some(p) = cfg {
                manifest.input(p)?;
            }
            let split = SplitConfig::late(model.decoder_layers);
            (model, split)
        }
    };
    let published = a.table2.as_deref().map(table2::read).transpose()?;

    let model: Model<f32> = Model::build(&config, split, 0)?;
    let costs = CostReport::build(&model, height, width)?;
    let sharing = SharingReport::measure(&config, height, width)?;
    let dir = out_dir(a.out, "account")?;

    let mut files = vec![("costs.csv", costs.to_csv()), ("sharing.csv", sharing.to_csv())];
    println!("per-component cost at {width}x{height}, split {}:", split.label(config.decoder_layers));
    print!("{}", costs.to_csv());
    println!("\nsharing by split:");
    print!("{}", sharing.to_csv());
    if let (Some(rows), Some(p)) = (&published, &a.table2) {
        let check = Table3Check::from_rows(rows).map_err(|e| CliError::format(p, e.to_string()))?;
        let text = table2::check_csv(&check);
        println!("\nreproduction from published costs:");
        print!("{text}");
        files.push(("table3_check.csv", text));
        manifest.input(p)?;
    }
    for (name, text) in files {
        let path = dir.join(name);
        write(&path, &text)?;
        manifest.output(&path)?;
    }
    manifest.finish(&dir)?;
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let task = parse_task(&a.task)?;
    let ck = checkpoint::load(&a.ckpt)?;
    let model = ck.to_model()?;
    let id = a
        .image
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::Usage("--image needs a file name".into()))?
        .to_string();
    let image = dataset::read_image(&a.image, &id)?;
    let predicted = model.rollout(
        &image.pixels,
        &id,
        task,
        select_mode(a.mode, a.seed),
        model.config.max_len(task.branch()),
    )?;
    let gt = match &a.gt {
        Some(p) => dataset::read_records(p)?
            .into_iter()
            .find(|s| s.image_id == id && s.task == task),
        None => None,
    };
    if a.gt.is_some() && gt.is_none() {
        eprintln!("warning: no ground truth for {id} with task {}; drawing the prediction only", a.task);
    }
    let overlay = render_overlay(&image, &predicted, gt.as_ref(), a.scale);

    let dir = out_dir(a.out, "render")?;
    let config = serde_json::json!({"task": a.task, "scale": a.scale, "mode": format!("{:?}", a.mode)});
    let mut manifest = RunManifest::start("render", config, Some(a.seed));
    manifest.input(&a.ckpt)?;
    manifest.input(&a.image)?;
    if let Some(p) = &a.gt {
        manifest.input(p)?;
    }
    let path = dir.join("overlay.png");
    overlay.save_png(&path)?;
    manifest.output(&path)?;
    manifest.finish(&dir)?;
    let pts: Vec<String> = predicted.fixations.iter().map(|f| format!("({:.4}, {:.4})", f.x, f.y)).collect();
    println!(
        "predicted {} fixations{}: {}",
        pts.len(),
        if predicted.terminated { ", terminated" } else { "" },
        pts.join(" ")
    );
    println!("wrote {}", path.display());
    Ok(())
}
