//! Parameter counts, analytic FLOP counts, and how much of the trainable
//! model and its compute the shared decoder prefix accounts for.

mod published;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Fixation, TaskSpec};
use crate::error::{Error, Result};
use crate::model::{Branch, Model, ModelConfig, Partition, SplitConfig};
use crate::nn::Ctx;
use crate::real::Real;
use crate::tensor::Tensor;

pub use published::{format_thousandths, parse_thousandths, published_table2, PublishedCost, Table3Check, PUBLISHED_LS_FLOPS_BP};

/// A percentage held in hundredths of a percent, printed with two decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisPoints(pub u64);

impl BasisPoints {
    /// `part / total` rounded half up to 0.01 %.
    pub fn ratio(part: u64, total: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::Input("percentage of a zero total".into()));
        }
        let doubled = part as u128 * 20_000 / total as u128;
        Ok(BasisPoints(((doubled + 1) / 2) as u64))
    }

    pub fn percent(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for BasisPoints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

/// Scalars in the partitions selected by `filter`.
pub fn count_parameters<R: Real>(model: &Model<R>, filter: impl Fn(Partition) -> bool) -> u64 {
    model.parameter_count(filter) as u64
}

/// Scalars in the partitions named (see [`Partition::parse`]).
pub fn count_named<R: Real>(model: &Model<R>, names: &[&str]) -> Result<u64> {
    let parts = names.iter().map(|n| Partition::parse(n)).collect::<Result<Vec<_>>>()?;
    Ok(count_parameters(model, |p| parts.contains(&p)))
}

/// Partition that owns the FLOPs recorded under a tape scope.
pub fn scope_partition(scope: &str) -> Option<Partition> {
    let mut it = scope.split('.');
    let head = it.next()?;
    let second = it.next();
    let branch = |tag: Option<&str>| match tag {
        Some("fv") => Some(Branch::Fv),
        Some("vs") => Some(Branch::Vs),
        _ => None,
    };
    match head {
        "encoder" => Some(Partition::Encoder),
        "decoder" => match branch(second) {
            Some(b) => Some(Partition::DecoderSuffix(b)),
            None => Some(Partition::SharedDecoder),
        },
        "foveation" => branch(second).map(Partition::Foveation),
        "memory" => branch(second).map(Partition::Memory),
        "aggregation" => branch(second).map(Partition::Aggregation),
        "heads" => branch(second).map(Partition::Heads),
        _ => None,
    }
}

/// FLOPs per partition for one forward pass on a `height x width` image:
/// the encoder, the shared prefix once, each branch's suffix, and one
/// prediction step per branch from the center start (VS for target 1).
pub fn flops_by_partition<R: Real>(model: &Model<R>, height: usize, width: usize) -> Result<Vec<(Partition, u64)>> {
    let mut ctx = Ctx::frozen(&model.store);
    let image = ctx.tape.constant(Tensor::zeros(&[3, height, width]));
    let base = model.encode_pixels(&mut ctx, image)?;
    let pyramids = model.decode_both(&mut ctx, &base)?;
    for (b, task) in [(Branch::Fv, TaskSpec::FreeViewing), (Branch::Vs, TaskSpec::VisualSearch { target: 1 })] {
        model.predict_step(&mut ctx, &pyramids[b.index()], &[Fixation::CENTER], task)?;
    }
    let mut out: Vec<(Partition, u64)> = Partition::all().iter().map(|&p| (p, 0)).collect();
    for (scope, flops) in ctx.tape.flops_by_scope() {
        let part = scope_partition(&scope)
            .ok_or_else(|| Error::Input(alloc::format!("FLOPs recorded outside any component: '{scope}'")))?;
        out.iter_mut().find(|(p, _)| *p == part).expect("every partition listed").1 += flops;
    }
    Ok(out)
}

/// FLOPs of the partitions selected by `filter`.
pub fn estimate_flops<R: Real>(
    model: &Model<R>,
    filter: impl Fn(Partition) -> bool,
    height: usize,
    width: usize,
) -> Result<u64> {
    Ok(flops_by_partition(model, height, width)?
        .into_iter()
        .filter(|(p, _)| filter(*p))
        .map(|(_, f)| f)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEntry {
    pub name: String,
    pub parameters: u64,
    pub flops: u64,
}

/// Per-partition parameters and FLOPs at a stated input size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub height: usize,
    pub width: usize,
    pub entries: Vec<CostEntry>,
    pub total_parameters: u64,
    pub total_flops: u64,
}

impl CostReport {
    pub fn build<R: Real>(model: &Model<R>, height: usize, width: usize) -> Result<Self> {
        let flops = flops_by_partition(model, height, width)?;
        let entries: Vec<CostEntry> = flops
            .into_iter()
            .map(|(p, f)| CostEntry {
                name: alloc::format!("{p}"),
                parameters: count_parameters(model, |q| q == p),
                flops: f,
            })
            .collect();
        Ok(CostReport {
            height,
            width,
            total_parameters: model.store.iter().map(|(_, p)| p.value.numel() as u64).sum(),
            total_flops: entries.iter().map(|e| e.flops).sum(),
            entries,
        })
    }

    pub fn get(&self, name: &str) -> Option<&CostEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// `component,parameters,flops` rows with a total row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,parameters,flops\n");
        for e in &self.entries {
            s += &alloc::format!("{},{},{}\n", e.name, e.parameters, e.flops);
        }
        s += &alloc::format!("total,{},{}\n", self.total_parameters, self.total_flops);
        s
    }
}

/// Sharing figures for one split, measured on the VS path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCost {
    pub label: String,
    pub shared_layers: usize,
    /// Shared decoder prefix (input projection and shared layers).
    pub shared_parameters: u64,
    /// Everything the VS path trains end to end: pixel decoder and VS modules.
    pub trainable_parameters: u64,
    pub shared_flops: u64,
    /// VS-path FLOPs excluding the encoder.
    pub path_flops: u64,
    pub reduced_trainable_params: BasisPoints,
    pub shared_flops_pct: BasisPoints,
}

impl SplitCost {
    pub fn new(label: String, shared_layers: usize, shared_parameters: u64, trainable_parameters: u64, shared_flops: u64, path_flops: u64) -> Result<Self> {
        if shared_parameters > trainable_parameters || shared_flops > path_flops {
            return Err(Error::Input("shared cost exceeds its total".into()));
        }
        Ok(SplitCost {
            label,
            shared_layers,
            shared_parameters,
            trainable_parameters,
            shared_flops,
            path_flops,
            reduced_trainable_params: BasisPoints::ratio(shared_parameters, trainable_parameters)?,
            shared_flops_pct: BasisPoints::ratio(shared_flops, path_flops)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharingReport {
    pub height: usize,
    pub width: usize,
    pub splits: Vec<SplitCost>,
}

impl SharingReport {
    /// Measures every split from all-shared down to one shared layer.
    pub fn measure(config: &ModelConfig, height: usize, width: usize) -> Result<Self> {
        let n = config.decoder_layers;
        let mut splits = Vec::new();
        for s in (1..=n).rev() {
            let split = SplitConfig::new(s, n)?;
            let model: Model<f32> = Model::build(config, split, 0)?;
            splits.push(split_cost(&model, height, width)?);
        }
        Ok(SharingReport { height, width, splits })
    }

    /// Both percentages strictly decrease as fewer layers are shared.
    pub fn is_monotone(&self) -> bool {
        self.splits.windows(2).all(|w| {
            w[0].reduced_trainable_params > w[1].reduced_trainable_params && w[0].shared_flops_pct > w[1].shared_flops_pct
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "split,shared_layers,shared_params,trainable_params,reduced_trainable_params_pct,shared_flops,path_flops,shared_flops_pct\n",
        );
        for c in &self.splits {
            s += &alloc::format!(
                "{},{},{},{},{},{},{},{}\n",
                c.label,
                c.shared_layers,
                c.shared_parameters,
                c.trainable_parameters,
                c.reduced_trainable_params,
                c.shared_flops,
                c.path_flops,
                c.shared_flops_pct
            );
        }
        s
    }
}

fn on_vs_path(p: Partition) -> bool {
    p == Partition::SharedDecoder || p.branch() == Some(Branch::Vs)
}

pub fn split_cost<R: Real>(model: &Model<R>, height: usize, width: usize) -> Result<SplitCost> {
    let flops = flops_by_partition(model, height, width)?;
    let sum = |f: &dyn Fn(Partition) -> bool| flops.iter().filter(|(p, _)| f(*p)).map(|(_, x)| x).sum::<u64>();
    SplitCost::new(
        model.split.label(model.config.decoder_layers),
        model.split.shared_layers,
        count_parameters(model, |p| p == Partition::SharedDecoder),
        count_parameters(model, on_vs_path),
        sum(&|p| p == Partition::SharedDecoder),
        sum(&on_vs_path),
    )
}
