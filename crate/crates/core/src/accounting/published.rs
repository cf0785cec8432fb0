//! Arithmetic on published per-module costs, kept in exact integers
//! (thousandths of a million parameters, thousandths of a GFLOP).

use alloc::string::String;
use alloc::vec::Vec;

use super::BasisPoints;
use crate::error::{Error, Result};

/// Reported share of FLOPs for the all-shared configuration, 92.29 %.
pub const PUBLISHED_LS_FLOPS_BP: u64 = 9229;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishedCost {
    pub component: String,
    /// Thousandths of a million parameters.
    pub params_k: u64,
    /// Thousandths of a GFLOP.
    pub mflops: u64,
}

/// Per-module costs as published: pixel encoder, pixel decoder, foveation,
/// aggregation, fixation prediction.
pub fn published_table2() -> Vec<PublishedCost> {
    [
        ("encoder", 23_455, 13_418),
        ("decoder", 6_036, 22_997),
        ("foveation", 3_063, 1_545),
        ("aggregation", 9_489, 376),
        ("fixation_prediction", 740, 13),
    ]
    .into_iter()
    .map(|(c, p, f)| PublishedCost {
        component: String::from(c),
        params_k: p,
        mflops: f,
    })
    .collect()
}

/// Parses a decimal with at most three fractional digits into thousandths.
pub fn parse_thousandths(s: &str) -> Result<u64> {
    let bad = || Error::Input(alloc::format!("'{s}' is not a decimal with at most three fractional digits"));
    let s = s.trim();
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() || frac.len() > 3 || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let int: u64 = int.parse().map_err(|_| bad())?;
    let mut f: u64 = 0;
    for i in 0..3 {
        f = f * 10 + frac.as_bytes().get(i).map_or(0, |b| u64::from(b - b'0'));
    }
    int.checked_mul(1000).and_then(|v| v.checked_add(f)).ok_or_else(bad)
}

/// Totals and all-shared percentages recomputed from published rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table3Check {
    pub total_params_k: u64,
    pub trainable_params_k: u64,
    pub total_mflops: u64,
    pub trainable_mflops: u64,
    pub reduced_trainable_params: BasisPoints,
    pub shared_flops: BasisPoints,
}

impl Table3Check {
    /// With the whole decoder shared, the stage-2 trainable set is everything
    /// except encoder and decoder; the shared part is the decoder.
    pub fn from_rows(rows: &[PublishedCost]) -> Result<Self> {
        let find = |name: &str| -> Result<&PublishedCost> {
            let mut hits = rows.iter().filter(|r| r.component.eq_ignore_ascii_case(name));
            let row = hits
                .next()
                .ok_or_else(|| Error::Input(alloc::format!("no '{name}' row in the cost table")))?;
            if hits.next().is_some() {
                return Err(Error::Input(alloc::format!("duplicate '{name}' row in the cost table")));
            }
            Ok(row)
        };
        let (enc, dec) = (find("encoder")?, find("decoder")?);
        let total_params_k: u64 = rows.iter().map(|r| r.params_k).sum();
        let total_mflops: u64 = rows.iter().map(|r| r.mflops).sum();
        let trainable_params_k = total_params_k - enc.params_k;
        let trainable_mflops = total_mflops - enc.mflops;
        Ok(Table3Check {
            total_params_k,
            trainable_params_k,
            total_mflops,
            trainable_mflops,
            reduced_trainable_params: BasisPoints::ratio(dec.params_k, trainable_params_k)?,
            shared_flops: BasisPoints::ratio(dec.mflops, trainable_mflops)?,
        })
    }

    /// Distance from the reported 92.29 % in hundredths of a percent.
    pub fn flops_gap_bp(&self) -> u64 {
        self.shared_flops.0.abs_diff(PUBLISHED_LS_FLOPS_BP)
    }
}

/// `12345` thousandths as `12.345`.
pub fn format_thousandths(v: u64) -> String {
    alloc::format!("{}.{:03}", v / 1000, v % 1000)
}
