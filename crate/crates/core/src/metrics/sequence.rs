use alloc::vec::Vec;

use num_traits::Float;

use crate::data::{LabelMap, Scanpath};
use crate::error::{Error, Result};

/// Default grid cell size for spatial clustering, as a fraction of each side.
pub const DEFAULT_CELL_FRACTION: f64 = 0.125;

/// Square grid over the unit square; labels are row-major cell indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridClusters {
    cell_fraction: f64,
    per_side: usize,
}

impl GridClusters {
    pub fn new(cell_fraction: f64) -> Result<Self> {
        if !(cell_fraction > 0.0 && cell_fraction <= 1.0) {
            return Err(Error::Input(alloc::format!(
                "cell fraction {cell_fraction} is outside (0, 1]"
            )));
        }
        Ok(GridClusters {
            cell_fraction,
            per_side: Float::ceil(1.0 / cell_fraction) as usize,
        })
    }

    pub fn per_side(&self) -> usize {
        self.per_side
    }

    pub fn cells(&self) -> usize {
        self.per_side * self.per_side
    }

    pub fn label(&self, x: f64, y: f64) -> usize {
        let last = self.per_side - 1;
        let col = ((x / self.cell_fraction) as usize).min(last);
        let row = ((y / self.cell_fraction) as usize).min(last);
        row * self.per_side + col
    }

    pub fn sequence(&self, sp: &Scanpath) -> Vec<usize> {
        sp.fixations.iter().map(|f| self.label(f.x, f.y)).collect()
    }
}

pub fn cluster_fixations(sp: &Scanpath, cell_fraction: f64) -> Result<Vec<usize>> {
    Ok(GridClusters::new(cell_fraction)?.sequence(sp))
}

/// Levenshtein distance with unit insert, delete and substitute costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = alloc::vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - edit_distance / max(|a|, |b|)`.
pub fn sequence_score<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("sequence score needs two nonempty sequences".into()));
    }
    Ok(1.0 - edit_distance(a, b) as f64 / a.len().max(b.len()) as f64)
}

/// Segmentation label under each fixation; background (0) is a symbol too.
pub fn semantic_labels(sp: &Scanpath, seg: &LabelMap) -> Vec<u8> {
    sp.fixations.iter().map(|&f| seg.at(f)).collect()
}

pub fn semantic_sequence_score(pred: &Scanpath, gt: &Scanpath, seg: &LabelMap) -> Result<f64> {
    sequence_score(&semantic_labels(pred, seg), &semantic_labels(gt, seg))
}
