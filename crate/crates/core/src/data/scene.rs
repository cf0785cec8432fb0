use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ImageSample, LabelMap, NUM_CATEGORIES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Rect,
    Disc,
    Diamond,
}

/// Fixed look of a category: its color family, base color, outline and texture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Appearance {
    /// 0 = red, 1 = green, 2 = blue.
    pub family: u8,
    pub color: [f32; 3],
    pub kind: ShapeKind,
    pub striped: bool,
}

/// Categories `1..=18` are six per color family; within a family they differ
/// by outline (rect, disc, diamond) and shade (bright solid, dark striped).
pub fn category_appearance(category: u8) -> Appearance {
    debug_assert!((1..=NUM_CATEGORIES).contains(&category));
    let idx = category - 1;
    let family = idx / 6;
    let within = idx % 6;
    let kind = match within % 3 {
        0 => ShapeKind::Rect,
        1 => ShapeKind::Disc,
        _ => ShapeKind::Diamond,
    };
    let dark = within >= 3;
    let base = match family {
        0 => [0.92, 0.16, 0.10],
        1 => [0.12, 0.82, 0.22],
        _ => [0.16, 0.32, 0.95],
    };
    let shade = if dark { 0.55 } else { 1.0 };
    Appearance {
        family,
        color: base.map(|c| c * shade),
        kind,
        striped: dark,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    pub rows: usize,
    pub cols: usize,
    pub categories: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            height: 96,
            width: 128,
            rows: 3,
            cols: 4,
            categories: 4,
        }
    }
}

/// Geometry of one drawn shape, in pixels.
///
/// Rects cover columns `x0..x0 + w` and rows `y0..y0 + h`. Discs and diamonds
/// cover pixel `(r, c)` when its center `(c + 0.5, r + 0.5)` satisfies
/// `dx² + dy² <= radius²` or `|dx| + |dy| <= radius` respectively.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeInfo {
    pub category: u8,
    pub kind: ShapeKind,
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl ShapeInfo {
    pub fn covers(&self, row: usize, col: usize) -> bool {
        match self.kind {
            ShapeKind::Rect => {
                (self.x0..self.x0 + self.w).contains(&col) && (self.y0..self.y0 + self.h).contains(&row)
            }
            ShapeKind::Disc => {
                let dx = col as f64 + 0.5 - self.cx;
                let dy = row as f64 + 0.5 - self.cy;
                dx * dx + dy * dy <= self.radius * self.radius
            }
            ShapeKind::Diamond => {
                let dx = col as f64 + 0.5 - self.cx;
                let dy = row as f64 + 0.5 - self.cy;
                dx.abs() + dy.abs() <= self.radius
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub sample: ImageSample,
    pub shapes: Vec<ShapeInfo>,
    pub background: [f32; 3],
}

/// Draws `categories` distinct categories, one shape each, into distinct
/// cells of a `rows x cols` grid. A pure function of `seed` and `params`.
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<Scene> {
    let SceneParams {
        height,
        width,
        rows,
        cols,
        categories,
    } = *params;
    if categories == 0 || categories > NUM_CATEGORIES as usize {
        return Err(Error::Config(alloc::format!(
            "scene needs 1..={NUM_CATEGORIES} categories, got {categories}"
        )));
    }
    if rows * cols < categories {
        return Err(Error::Config(alloc::format!(
            "a {rows}x{cols} grid cannot hold {categories} shapes"
        )));
    }
    let cell_h = height / rows.max(1);
    let cell_w = width / cols.max(1);
    if cell_h < 6 || cell_w < 6 {
        return Err(Error::Config(alloc::format!(
            "grid cells of {cell_w}x{cell_h} pixels are too small for shapes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cats: Vec<u8> = (1..=NUM_CATEGORIES).collect();
    cats.shuffle(&mut rng);
    cats.truncate(categories);
    let mut cells: Vec<usize> = (0..rows * cols).collect();
    cells.shuffle(&mut rng);

    let gray = rng.gen_range(0.30f32..0.60);
    let background = [gray, gray, gray];
    let mut pixels = Tensor::<f32>::zeros(&[3, height, width]);
    for (c, &v) in background.iter().enumerate() {
        pixels.data_mut()[c * height * width..(c + 1) * height * width].fill(v);
    }
    let mut labels = vec![0u8; height * width];
    let mut shapes = Vec::with_capacity(categories);

    for (&cat, &cell) in cats.iter().zip(&cells) {
        let look = category_appearance(cat);
        let (cr, cc) = (cell / cols, cell % cols);
        let span = cell_h.min(cell_w) as f64;
        let (top, left) = (cr * cell_h, cc * cell_w);
        let shape = match look.kind {
            ShapeKind::Rect => {
                let w = ((span * rng.gen_range(0.45..0.8)) as usize).max(3);
                let h = ((span * rng.gen_range(0.45..0.8)) as usize).max(3);
                let x0 = left + rng.gen_range(0..=cell_w - w);
                let y0 = top + rng.gen_range(0..=cell_h - h);
                ShapeInfo {
                    category: cat,
                    kind: look.kind,
                    x0,
                    y0,
                    w,
                    h,
                    cx: x0 as f64 + w as f64 / 2.0,
                    cy: y0 as f64 + h as f64 / 2.0,
                    radius: 0.0,
                }
            }
            ShapeKind::Disc | ShapeKind::Diamond => {
                let radius = (span * rng.gen_range(0.25..0.42)).max(2.0);
                let slack_x = cell_w as f64 - 2.0 * radius;
                let slack_y = cell_h as f64 - 2.0 * radius;
                let cx = left as f64 + radius + rng.gen_range(0.0..=slack_x.max(0.0));
                let cy = top as f64 + radius + rng.gen_range(0.0..=slack_y.max(0.0));
                let x0 = Float::floor(cx - radius).max(0.0) as usize;
                let y0 = Float::floor(cy - radius).max(0.0) as usize;
                let x1 = (Float::ceil(cx + radius) as usize).min(width);
                let y1 = (Float::ceil(cy + radius) as usize).min(height);
                ShapeInfo {
                    category: cat,
                    kind: look.kind,
                    x0,
                    y0,
                    w: x1 - x0,
                    h: y1 - y0,
                    cx,
                    cy,
                    radius,
                }
            }
        };
        for r in shape.y0..shape.y0 + shape.h {
            for c in shape.x0..shape.x0 + shape.w {
                if !shape.covers(r, c) {
                    continue;
                }
                labels[r * width + c] = cat;
                let stripe = if look.striped && (r / 2) % 2 == 1 { 0.75 } else { 1.0 };
                for ch in 0..3 {
                    pixels.data_mut()[(ch * height + r) * width + c] = look.color[ch] * stripe;
                }
            }
        }
        shapes.push(shape);
    }

    // 8-bit intensities so lossless 8-bit files reproduce the scene exactly
    for v in pixels.data_mut() {
        *v = super::pixel_from_u8(super::pixel_to_u8(*v));
    }
    let seg = LabelMap::new(height, width, labels)?;
    let mut sample = ImageSample::new(alloc::format!("scene-{seed:06}"), pixels, Some(seg))?;
    sample.present_targets = cats.iter().copied().collect::<BTreeSet<u8>>();
    Ok(Scene {
        sample,
        shapes,
        background,
    })
}

