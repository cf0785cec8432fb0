use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Partition, SplitConfig};
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Which training procedure produced a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Fv,
    VsShared,
    VsE2e,
}

impl Stage {
    pub fn tag(self) -> &'static str {
        match self {
            Stage::Fv => "fv",
            Stage::VsShared => "vs_shared",
            Stage::VsE2e => "vs_e2e",
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "fv" => Ok(Stage::Fv),
            "vs_shared" => Ok(Stage::VsShared),
            "vs_e2e" => Ok(Stage::VsE2e),
            other => Err(Error::Load(alloc::format!("unknown stage tag '{other}'"))),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Structured header stored alongside the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub stage: Stage,
    pub model: ModelConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    /// In parameter-store order.
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, stage: Stage, train: &TrainConfig) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                version: CHECKPOINT_VERSION,
                stage,
                model: model.config.clone(),
                split: model.split,
                train: train.clone(),
            },
            tensors: model
                .store
                .iter()
                .map(|(_, p)| (p.name.clone(), p.value.clone()))
                .collect(),
        }
    }

    pub fn stage(&self) -> Stage {
        self.header.stage
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Copies every model parameter whose partition passes `filter` from this
    /// checkpoint. Fails on the first missing or mis-shaped tensor without
    /// modifying the model.
    pub fn load_into(&self, model: &mut Model<f32>, filter: impl Fn(Partition) -> bool) -> Result<usize> {
        let mut updates = Vec::new();
        for (id, p) in model.store.iter() {
            if !filter(p.partition) {
                continue;
            }
            let t = self
                .get(&p.name)
                .ok_or_else(|| Error::Load(alloc::format!("checkpoint has no tensor '{}'", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(Error::Load(alloc::format!(
                    "tensor '{}' has shape {:?} in the checkpoint but {:?} in the model",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            updates.push((id, t.clone()));
        }
        let n = updates.len();
        for (id, t) in updates {
            *model.store.value_mut(id) = t;
        }
        Ok(n)
    }

    /// Rebuilds the model described by the header and fills in every tensor.
    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut model = Model::build(&self.header.model, self.header.split, 0)?;
        if let Some((name, _)) = self.tensors.iter().find(|(n, _)| model.store.find(n).is_none()) {
            return Err(Error::Load(alloc::format!("checkpoint tensor '{name}' does not exist in the model")));
        }
        self.load_into(&mut model, |_| true)?;
        Ok(model)
    }
}
