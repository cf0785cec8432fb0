use alloc::vec::Vec;

use num_traits::Float;

use crate::data::{Fixation, Scanpath, TaskSpec};
use crate::error::{Error, Result};

/// Clamp applied to probabilities before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;
/// Uniform mass added to the density baseline before renormalizing.
pub const BASELINE_FLOOR: f64 = 1e-6;

/// Nonnegative map over an `h x w` grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(h: usize, w: usize, values: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || values.len() != h * w {
            return Err(Error::Input(alloc::format!(
                "saliency map of {} values does not match {h}x{w}",
                values.len()
            )));
        }
        Ok(SaliencyMap { h, w, values })
    }

    pub fn uniform(h: usize, w: usize) -> Self {
        SaliencyMap {
            h,
            w,
            values: alloc::vec![1.0 / (h * w) as f64; h * w],
        }
    }

    pub fn index(&self, f: Fixation) -> usize {
        let (r, c) = f.cell(self.h, self.w);
        r * self.w + c
    }

    pub fn at(&self, f: Fixation) -> f64 {
        self.values[self.index(f)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Sum of unit-mass Gaussians (std `sigma_fraction * w` cells) at each
/// fixation, plus a uniform `floor`, normalized to one.
pub fn density_map(fixations: &[Fixation], h: usize, w: usize, sigma_fraction: f64, floor: f64) -> Result<SaliencyMap> {
    if fixations.is_empty() {
        return Err(Error::MissingBaseline("no fixations for the density baseline".into()));
    }
    if !(sigma_fraction > 0.0) || floor < 0.0 {
        return Err(Error::Config("sigma must be positive and floor nonnegative".into()));
    }
    let sigma = sigma_fraction * w as f64;
    let denom = 2.0 * sigma * sigma;
    let mut acc = alloc::vec![0.0; h * w];
    let mut bump = alloc::vec![0.0; h * w];
    for f in fixations {
        let (fx, fy) = (f.x * w as f64 - 0.5, f.y * h as f64 - 0.5);
        let mut mass = 0.0;
        for (i, b) in bump.iter_mut().enumerate() {
            let dx = (i % w) as f64 - fx;
            let dy = (i / w) as f64 - fy;
            *b = Float::exp(-(dx * dx + dy * dy) / denom);
            mass += *b;
        }
        for (a, b) in acc.iter_mut().zip(&bump) {
            *a += b / mass;
        }
    }
    let total: f64 = acc.iter().map(|a| a / fixations.len() as f64 + floor).sum();
    let values = acc
        .iter()
        .map(|a| (a / fixations.len() as f64 + floor) / total)
        .collect();
    SaliencyMap::new(h, w, values)
}

/// Density baseline for one condition from training scanpaths. Only the
/// fixations after the center start count, since those are what the
/// conditional metrics score.
pub fn build_density_baseline(
    train: &[Scanpath],
    condition: TaskSpec,
    h: usize,
    w: usize,
    sigma_fraction: f64,
    floor: f64,
) -> Result<SaliencyMap> {
    let fixations: Vec<Fixation> = train
        .iter()
        .filter(|sp| sp.task == condition)
        .flat_map(|sp| sp.fixations.iter().skip(1).copied())
        .collect();
    if fixations.is_empty() {
        return Err(Error::MissingBaseline(alloc::format!(
            "no training fixations for condition {condition:?}"
        )));
    }
    density_map(&fixations, h, w, sigma_fraction, floor)
}

/// Mean over fixations of `log2 p_model - log2 p_baseline`.
pub fn conditional_information_gain(items: &[(SaliencyMap, Fixation)], baseline: &SaliencyMap) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Input("information gain needs at least one fixation".into()));
    }
    let mut total = 0.0;
    for (map, f) in items {
        if (map.h, map.w) != (baseline.h, baseline.w) {
            return Err(Error::Input(alloc::format!(
                "model map {}x{} differs from baseline {}x{}",
                map.h,
                map.w,
                baseline.h,
                baseline.w
            )));
        }
        total += information_gain_at(map, baseline, *f);
    }
    Ok(total / items.len() as f64)
}

pub(crate) fn information_gain_at(map: &SaliencyMap, baseline: &SaliencyMap, f: Fixation) -> f64 {
    Float::log2(map.at(f).max(LOG_CLAMP)) - Float::log2(baseline.at(f).max(LOG_CLAMP))
}

/// Mean z-scored saliency (population std) at the fixated cells; 0 for a
/// constant map.
pub fn conditional_nss(map: &SaliencyMap, fixations: &[Fixation]) -> Result<f64> {
    if fixations.is_empty() {
        return Err(Error::Input("NSS needs at least one fixation".into()));
    }
    let n = map.values.len() as f64;
    let mean = map.values.iter().sum::<f64>() / n;
    let var = map.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Ok(0.0);
    }
    let std = Float::sqrt(var);
    Ok(fixations.iter().map(|&f| (map.at(f) - mean) / std).sum::<f64>() / fixations.len() as f64)
}

/// ROC area with fixated cells as positives and all other cells as
/// negatives, from the Mann-Whitney rank statistic with mid-ranks for ties.
pub fn conditional_auc(map: &SaliencyMap, fixations: &[Fixation]) -> Result<f64> {
    let n = map.values.len();
    let mut positive = alloc::vec![false; n];
    for &f in fixations {
        positive[map.index(f)] = true;
    }
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = n - pos;
    if pos == 0 {
        return Err(Error::Input("AUC needs at least one fixated cell".into()));
    }
    if neg == 0 {
        return Err(Error::Input("AUC needs at least one non-fixated cell".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| map.values[a].total_cmp(&map.values[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && map.values[order[j + 1]] == map.values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}
