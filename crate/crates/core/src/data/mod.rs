//! Scanpath records, synthetic scenes and their oracle scanpaths.

mod oracle;
mod scene;
mod split;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Branch;
use crate::tensor::Tensor;

pub use oracle::{oracle_scanpath_fv, oracle_scanpath_vs, shape_salience, ShapeSalience};
pub use scene::{category_appearance, generate_scene, Appearance, Scene, SceneParams, ShapeInfo, ShapeKind};
pub use split::{split_dataset, DatasetSplit};

/// Number of search target categories.
pub const NUM_CATEGORIES: u8 = 18;

/// Nearest 8-bit level of an intensity in `[0, 1]`.
pub fn pixel_to_u8(v: f32) -> u8 {
    num_traits::Float::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

pub fn pixel_from_u8(b: u8) -> f32 {
    b as f32 / 255.0
}

/// Normalized gaze position: `x` is a fraction of the width, `y` of the height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
}

impl Fixation {
    pub const CENTER: Fixation = Fixation { x: 0.5, y: 0.5 };

    pub fn new(x: f64, y: f64) -> Result<Self> {
        let f = Fixation { x, y };
        if !f.in_unit_square() {
            return Err(Error::Input(alloc::format!(
                "fixation ({x}, {y}) is outside the unit square"
            )));
        }
        Ok(f)
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    /// Center of pixel `(row, col)` on an `h x w` grid.
    pub fn cell_center(row: usize, col: usize, h: usize, w: usize) -> Self {
        Fixation {
            x: (col as f64 + 0.5) / w as f64,
            y: (row as f64 + 0.5) / h as f64,
        }
    }

    /// `(row, col)` of the grid cell containing this point; `x = 1` or `y = 1` maps to the last cell.
    pub fn cell(&self, h: usize, w: usize) -> (usize, usize) {
        let col = ((self.x * w as f64) as usize).min(w - 1);
        let row = ((self.y * h as f64) as usize).min(h - 1);
        (row, col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskSpec {
    FreeViewing,
    VisualSearch { target: u8 },
}

impl TaskSpec {
    pub fn search(target: u8) -> Result<Self> {
        if !(1..=NUM_CATEGORIES).contains(&target) {
            return Err(Error::Input(alloc::format!(
                "search target {target} is outside 1..={NUM_CATEGORIES}"
            )));
        }
        Ok(TaskSpec::VisualSearch { target })
    }

    pub fn branch(&self) -> Branch {
        match self {
            TaskSpec::FreeViewing => Branch::Fv,
            TaskSpec::VisualSearch { .. } => Branch::Vs,
        }
    }

    pub fn target(&self) -> Option<u8> {
        match self {
            TaskSpec::FreeViewing => None,
            TaskSpec::VisualSearch { target } => Some(*target),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scanpath {
    pub image_id: String,
    pub task: TaskSpec,
    pub fixations: Vec<Fixation>,
    pub terminated: bool,
}

impl Scanpath {
    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    /// Checks the record invariants: nonempty, in-range, center start, bounded length.
    pub fn validate(&self, max_len: usize) -> Result<()> {
        let first = self
            .fixations
            .first()
            .ok_or_else(|| Error::Input(alloc::format!("scanpath on {} is empty", self.image_id)))?;
        if *first != Fixation::CENTER {
            return Err(Error::Input(alloc::format!(
                "scanpath on {} does not start at the image center",
                self.image_id
            )));
        }
        if let Some(i) = self.fixations.iter().position(|f| !f.in_unit_square()) {
            return Err(Error::Input(alloc::format!(
                "scanpath on {}: fixation {i} is outside the unit square",
                self.image_id
            )));
        }
        if self.fixations.len() > max_len {
            return Err(Error::Input(alloc::format!(
                "scanpath on {} has {} fixations, maximum is {max_len}",
                self.image_id,
                self.fixations.len()
            )));
        }
        self.task.target().map_or(Ok(()), |t| TaskSpec::search(t).map(|_| ()))
    }
}

/// Per-pixel category ids, 0 = background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::dim("label_map", &[height, width], &[labels.len()]));
        }
        Ok(LabelMap {
            height,
            width,
            labels,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    /// Label under a normalized point.
    pub fn at(&self, f: Fixation) -> u8 {
        let (r, c) = f.cell(self.height, self.width);
        self.get(r, c)
    }

    pub fn categories(&self) -> BTreeSet<u8> {
        self.labels.iter().copied().filter(|&l| l != 0).collect()
    }
}

/// An RGB image in `[0, 1]` with optional segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub id: String,
    /// `[3, H, W]`
    pub pixels: Tensor<f32>,
    pub segmentation: Option<LabelMap>,
    pub present_targets: BTreeSet<u8>,
}

impl ImageSample {
    pub fn new(id: String, pixels: Tensor<f32>, segmentation: Option<LabelMap>) -> Result<Self> {
        let s = pixels.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(Error::Input(alloc::format!(
                "image {id}: expected [3, H, W] pixels, got {s:?}"
            )));
        }
        if s[1] % 32 != 0 || s[2] % 32 != 0 {
            return Err(Error::Input(alloc::format!(
                "image {id}: size {}x{} is not divisible by 32",
                s[2],
                s[1]
            )));
        }
        if let Some(seg) = &segmentation {
            if seg.height != s[1] || seg.width != s[2] {
                return Err(Error::Input(alloc::format!(
                    "image {id}: segmentation is {}x{}, image is {}x{}",
                    seg.width,
                    seg.height,
                    s[2],
                    s[1]
                )));
            }
            if let Some(&bad) = seg.labels.iter().find(|&&l| l > NUM_CATEGORIES) {
                return Err(Error::Input(alloc::format!(
                    "image {id}: segmentation label {bad} is not a category"
                )));
            }
        }
        let present_targets = segmentation
            .as_ref()
            .map(LabelMap::categories)
            .unwrap_or_default();
        Ok(ImageSample {
            id,
            pixels,
            segmentation,
            present_targets,
        })
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }
}
