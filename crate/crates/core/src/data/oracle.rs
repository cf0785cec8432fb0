use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{category_appearance, Fixation, ImageSample, Scanpath, TaskSpec};
use crate::error::{Error, Result};

/// Bottom-up conspicuity of one labeled region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSalience {
    pub category: u8,
    pub area: usize,
    /// Euclidean RGB distance between the region's mean color and the background's.
    pub color_distance: f64,
    /// `color_distance * area`
    pub score: f64,
    /// Region pixel closest to the region centroid.
    pub anchor: Fixation,
}

/// Salience of every labeled region in the scene, in ascending category order.
pub fn shape_salience(scene: &ImageSample) -> Result<Vec<ShapeSalience>> {
    let seg = scene
        .segmentation
        .as_ref()
        .ok_or_else(|| Error::Input(alloc::format!("image {} has no segmentation", scene.id)))?;
    let (h, w) = (scene.height(), scene.width());
    let px = scene.pixels.data();
    let color = |r: usize, c: usize| -> [f64; 3] {
        core::array::from_fn(|ch| px[(ch * h + r) * w + c] as f64)
    };

    // per label: count, color sum, coordinate sum
    let mut stats = [(0usize, [0.0f64; 3], 0.0f64, 0.0f64); 256];
    for r in 0..h {
        for c in 0..w {
            let s = &mut stats[seg.get(r, c) as usize];
            s.0 += 1;
            let rgb = color(r, c);
            for ch in 0..3 {
                s.1[ch] += rgb[ch];
            }
            s.2 += c as f64 + 0.5;
            s.3 += r as f64 + 0.5;
        }
    }
    let mean = |s: &(usize, [f64; 3], f64, f64)| -> [f64; 3] {
        if s.0 == 0 {
            [0.0; 3]
        } else {
            s.1.map(|v| v / s.0 as f64)
        }
    };
    let bg = mean(&stats[0]);
    let mut out = Vec::new();
    for label in 1..=255usize {
        let s = &stats[label];
        if s.0 == 0 {
            continue;
        }
        let m = mean(s);
        let dist = libm_hypot3(m[0] - bg[0], m[1] - bg[1], m[2] - bg[2]);
        let (gx, gy) = (s.2 / s.0 as f64, s.3 / s.0 as f64);
        let mut best = (f64::INFINITY, 0usize, 0usize);
        for r in 0..h {
            for c in 0..w {
                if seg.get(r, c) as usize != label {
                    continue;
                }
                let dx = c as f64 + 0.5 - gx;
                let dy = r as f64 + 0.5 - gy;
                let d = dx * dx + dy * dy;
                if d < best.0 {
                    best = (d, r, c);
                }
            }
        }
        out.push(ShapeSalience {
            category: label as u8,
            area: s.0,
            color_distance: dist,
            score: dist * s.0 as f64,
            anchor: Fixation::cell_center(best.1, best.2, h, w),
        });
    }
    Ok(out)
}

fn libm_hypot3(a: f64, b: f64, c: f64) -> f64 {
    num_traits::Float::sqrt(a * a + b * b + c * c)
}

/// Free-viewing oracle: center start, then regions by descending salience.
/// Equal scores are ordered by a seeded shuffle.
pub fn oracle_scanpath_fv(scene: &ImageSample, seed: u64, length: usize) -> Result<Scanpath> {
    if length == 0 {
        return Err(Error::Config("free-viewing scanpath length must be at least 1".into()));
    }
    let mut regions = shape_salience(scene)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys: Vec<u64> = (0..regions.len()).map(|_| rng.gen()).collect();
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| {
        regions[b]
            .score
            .total_cmp(&regions[a].score)
            .then(keys[a].cmp(&keys[b]))
    });
    let ordered: Vec<ShapeSalience> = order.iter().map(|&i| regions[i]).collect();
    regions = ordered;
    let mut fixations = alloc::vec![Fixation::CENTER];
    fixations.extend(regions.iter().take(length - 1).map(|r| r.anchor));
    Ok(Scanpath {
        image_id: scene.id.clone(),
        task: TaskSpec::FreeViewing,
        fixations,
        terminated: true,
    })
}

/// Visual-search oracle: center start, up to two seeded distractor fixations
/// on regions of the target's color family, then the target.
pub fn oracle_scanpath_vs(scene: &ImageSample, target: u8, seed: u64) -> Result<Scanpath> {
    let task = TaskSpec::search(target)?;
    let regions = shape_salience(scene)?;
    let goal = regions
        .iter()
        .find(|r| r.category == target)
        .ok_or_else(|| {
            Error::Input(alloc::format!(
                "target {target} is not present in image {}",
                scene.id
            ))
        })?;
    let family = category_appearance(target).family;
    let mut distractors: Vec<&super::ShapeSalience> = regions
        .iter()
        .filter(|r| r.category != target && category_appearance(r.category).family == family)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((target as u64) << 48));
    distractors.shuffle(&mut rng);
    let k = rng.gen_range(0..=distractors.len().min(2));
    let mut fixations = alloc::vec![Fixation::CENTER];
    fixations.extend(distractors.iter().take(k).map(|r| r.anchor));
    fixations.push(goal.anchor);
    Ok(Scanpath {
        image_id: scene.id.clone(),
        task,
        fixations,
        terminated: true,
    })
}
