use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output strides of the feature pyramid, coarse to fine.
pub const PYRAMID_STRIDES: [usize; 4] = [32, 16, 8, 4];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub feature_dim: usize,
    /// Stem, then one stage per pyramid level (strides 4, 8, 16, 32).
    pub encoder_channels: [usize; 5],
    pub decoder_layers: usize,
    pub decoder_heads: usize,
    /// Sampling points per head and level in each decoder layer.
    pub decoder_points: usize,
    pub memory_layers: usize,
    pub memory_heads: usize,
    pub aggregation_layers: usize,
    pub aggregation_heads: usize,
    pub queries_vs: usize,
    pub queries_fv: usize,
    pub ffn_multiplier: usize,
    /// Octaves of the sinusoidal position features.
    pub pos_frequencies: usize,
    pub max_len_fv: usize,
    pub max_len_vs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: 64,
            encoder_channels: [16, 24, 32, 48, 64],
            decoder_layers: 6,
            decoder_heads: 8,
            decoder_points: 4,
            memory_layers: 3,
            memory_heads: 4,
            aggregation_layers: 6,
            aggregation_heads: 4,
            queries_vs: 18,
            queries_fv: 1,
            ffn_multiplier: 2,
            pos_frequencies: 4,
            max_len_fv: 10,
            max_len_vs: 7,
        }
    }
}

impl ModelConfig {
    /// Reduced widths and depths for gradient checks and unit tests.
    pub fn tiny() -> Self {
        ModelConfig {
            feature_dim: 16,
            encoder_channels: [4, 6, 8, 8, 8],
            decoder_layers: 2,
            decoder_heads: 2,
            decoder_points: 2,
            memory_layers: 1,
            memory_heads: 2,
            aggregation_layers: 1,
            aggregation_heads: 2,
            queries_vs: 18,
            queries_fv: 1,
            ffn_multiplier: 2,
            pos_frequencies: 2,
            max_len_fv: 10,
            max_len_vs: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.feature_dim;
        for (what, heads) in [
            ("decoder", self.decoder_heads),
            ("memory", self.memory_heads),
            ("aggregation", self.aggregation_heads),
        ] {
            if heads == 0 || d % heads != 0 {
                return Err(Error::Config(alloc::format!(
                    "feature_dim {d} is not divisible by the {heads} {what} heads"
                )));
            }
        }
        let positive = [
            ("feature_dim", d),
            ("decoder_layers", self.decoder_layers),
            ("decoder_points", self.decoder_points),
            ("memory_layers", self.memory_layers),
            ("aggregation_layers", self.aggregation_layers),
            ("queries_vs", self.queries_vs),
            ("queries_fv", self.queries_fv),
            ("ffn_multiplier", self.ffn_multiplier),
            ("pos_frequencies", self.pos_frequencies),
            ("max_len_fv", self.max_len_fv),
            ("max_len_vs", self.max_len_vs),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(alloc::format!("{name} must be positive")));
        }
        if self.encoder_channels.contains(&0) {
            return Err(Error::Config("encoder channels must be positive".into()));
        }
        Ok(())
    }

    pub fn max_len(&self, branch: Branch) -> usize {
        match branch {
            Branch::Fv => self.max_len_fv,
            Branch::Vs => self.max_len_vs,
        }
    }

    pub fn queries(&self, branch: Branch) -> usize {
        match branch {
            Branch::Fv => self.queries_fv,
            Branch::Vs => self.queries_vs,
        }
    }
}

/// How many leading pixel-decoder layers both branches share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub shared_layers: usize,
}

impl SplitConfig {
    /// Every decoder layer shared.
    pub fn late(decoder_layers: usize) -> Self {
        SplitConfig {
            shared_layers: decoder_layers,
        }
    }

    pub fn new(shared_layers: usize, decoder_layers: usize) -> Result<Self> {
        if shared_layers == 0 || shared_layers > decoder_layers {
            return Err(Error::Config(alloc::format!(
                "shared layers must be in 1..={decoder_layers}, got {shared_layers}"
            )));
        }
        Ok(SplitConfig { shared_layers })
    }

    /// The six named configurations of a six-layer decoder.
    pub fn named() -> [(&'static str, SplitConfig); 6] {
        [
            ("LS", SplitConfig { shared_layers: 6 }),
            ("ES51", SplitConfig { shared_layers: 5 }),
            ("ES42", SplitConfig { shared_layers: 4 }),
            ("ES33", SplitConfig { shared_layers: 3 }),
            ("ES24", SplitConfig { shared_layers: 2 }),
            ("ES15", SplitConfig { shared_layers: 1 }),
        ]
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::named()
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, s)| *s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::named().iter().map(|(n, _)| *n).collect();
                Error::Usage(alloc::format!(
                    "unknown split {name:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }

    /// `LS` when every layer is shared, otherwise `ES{shared}{specific}`.
    pub fn label(&self, decoder_layers: usize) -> String {
        if self.shared_layers == decoder_layers {
            "LS".into()
        } else {
            alloc::format!("ES{}{}", self.shared_layers, decoder_layers - self.shared_layers)
        }
    }

    pub fn task_layers(&self, decoder_layers: usize) -> usize {
        decoder_layers - self.shared_layers
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Branch {
    Fv,
    Vs,
}

impl Branch {
    pub const ALL: [Branch; 2] = [Branch::Fv, Branch::Vs];

    pub fn tag(self) -> &'static str {
        match self {
            Branch::Fv => "fv",
            Branch::Vs => "vs",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// Disjoint groups that every model parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    Encoder,
    SharedDecoder,
    DecoderSuffix(Branch),
    Foveation(Branch),
    Memory(Branch),
    Aggregation(Branch),
    Heads(Branch),
}

impl Partition {
    pub fn all() -> [Partition; 12] {
        use Branch::*;
        use Partition::*;
        [
            Encoder,
            SharedDecoder,
            DecoderSuffix(Fv),
            DecoderSuffix(Vs),
            Foveation(Fv),
            Foveation(Vs),
            Memory(Fv),
            Memory(Vs),
            Aggregation(Fv),
            Aggregation(Vs),
            Heads(Fv),
            Heads(Vs),
        ]
    }

    pub fn branch(self) -> Option<Branch> {
        match self {
            Partition::Encoder | Partition::SharedDecoder => None,
            Partition::DecoderSuffix(b)
            | Partition::Foveation(b)
            | Partition::Memory(b)
            | Partition::Aggregation(b)
            | Partition::Heads(b) => Some(b),
        }
    }

    /// Encoder or pixel decoder.
    pub fn is_feature_extraction(self) -> bool {
        matches!(
            self,
            Partition::Encoder | Partition::SharedDecoder | Partition::DecoderSuffix(_)
        )
    }

    pub fn is_decoder(self) -> bool {
        matches!(self, Partition::SharedDecoder | Partition::DecoderSuffix(_))
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::all()
            .into_iter()
            .find(|p| alloc::format!("{p}") == name)
            .ok_or_else(|| Error::Usage(alloc::format!("unknown partition {name:?}")))
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Partition::Encoder => f.write_str("encoder"),
            Partition::SharedDecoder => f.write_str("shared_decoder_prefix"),
            Partition::DecoderSuffix(b) => write!(f, "task_decoder_suffix_{}", b.tag()),
            Partition::Foveation(b) => write!(f, "foveation_{}", b.tag()),
            Partition::Memory(b) => write!(f, "memory_{}", b.tag()),
            Partition::Aggregation(b) => write!(f, "aggregation_{}", b.tag()),
            Partition::Heads(b) => write!(f, "heads_{}", b.tag()),
        }
    }
}
