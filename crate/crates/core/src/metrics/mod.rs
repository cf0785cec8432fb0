//! Scanpath similarity (SS, SemSS) and conditional saliency metrics (cIG,
//! cNSS, cAUC), plus the evaluation protocol that combines them.

mod saliency;
mod sequence;

use alloc::collections::BTreeMap;
use alloc::string::String;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Fixation, ImageSample, Scanpath, TaskSpec};
use crate::error::{Error, Result};
use crate::model::{Branch, Model, PyramidValues, SelectMode};

pub use saliency::{
    build_density_baseline, conditional_auc, conditional_information_gain, conditional_nss, density_map,
    SaliencyMap, BASELINE_FLOOR, LOG_CLAMP,
};
pub use sequence::{
    cluster_fixations, edit_distance, semantic_labels, semantic_sequence_score, sequence_score, GridClusters,
    DEFAULT_CELL_FRACTION,
};

/// Column order of the report table.
pub const REPORT_HEADER: &str = "Method,SemSS,SS,cIG,cNSS,cAUC";

/// Where predicted scanpaths and next-fixation maps come from.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Model { model: &'a Model<f32>, mode: SelectMode },
    /// Fixations uniform over the finest grid, `length` fixations including
    /// the center start; next-fixation maps are uniform.
    Uniform { seed: u64, length: usize },
    /// Ground truth as prediction; next-fixation maps are the baseline.
    GroundTruth,
}

/// Density baseline per condition.
#[derive(Debug, Clone, Default)]
pub struct Baselines {
    maps: BTreeMap<TaskSpec, SaliencyMap>,
}

impl Baselines {
    /// One map per condition present in `train`, on an `h x w` grid.
    pub fn build(train: &[Scanpath], h: usize, w: usize, sigma_fraction: f64, floor: f64) -> Result<Self> {
        let mut maps = BTreeMap::new();
        let conditions: alloc::collections::BTreeSet<TaskSpec> = train.iter().map(|sp| sp.task).collect();
        for c in conditions {
            if let Ok(map) = build_density_baseline(train, c, h, w, sigma_fraction, floor) {
                maps.insert(c, map);
            }
        }
        Ok(Baselines { maps })
    }

    pub fn get(&self, task: TaskSpec) -> Result<&SaliencyMap> {
        self.maps
            .get(&task)
            .ok_or_else(|| Error::MissingBaseline(alloc::format!("no density baseline for {task:?}")))
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub cell_fraction: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            cell_fraction: DEFAULT_CELL_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    /// `None` when any evaluated image lacks segmentation.
    pub semss: Option<f64>,
    pub ss: f64,
    pub cig: f64,
    pub cnss: f64,
    pub cauc: f64,
    pub scanpaths: usize,
    pub fixations: usize,
}

impl MetricsReport {
    /// Delimited row in [`REPORT_HEADER`] order; an absent SemSS is empty.
    pub fn row(&self) -> String {
        let semss = self.semss.map(|v| alloc::format!("{v:.4}")).unwrap_or_default();
        alloc::format!(
            "{},{},{:.4},{:.4},{:.4},{:.4}",
            self.method,
            semss,
            self.ss,
            self.cig,
            self.cnss,
            self.cauc
        )
    }
}

/// Uniform random scanpath of `length` fixations on an `h x w` grid.
pub fn uniform_rollout(image_id: &str, task: TaskSpec, h: usize, w: usize, length: usize, seed: u64) -> Scanpath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fixations = alloc::vec![Fixation::CENTER];
    while fixations.len() < length.max(1) {
        let i = rng.gen_range(0..h * w);
        fixations.push(Fixation::cell_center(i / w, i % w, h, w));
    }
    Scanpath {
        image_id: String::from(image_id),
        task,
        fixations,
        terminated: true,
    }
}

/// Scores `policy` on the ground-truth scanpaths of `branch`.
///
/// SS and SemSS compare a rollout against each ground-truth scanpath; the
/// conditional metrics score the next-fixation map at every ground-truth step
/// given the true prefix. All values are means.
pub fn evaluate(
    policy: Policy<'_>,
    method: &str,
    images: &[ImageSample],
    ground_truth: &[Scanpath],
    branch: Branch,
    baselines: &Baselines,
    opts: EvalOptions,
) -> Result<MetricsReport> {
    let grid = GridClusters::new(opts.cell_fraction)?;
    let by_id: BTreeMap<&str, &ImageSample> = images.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut pyramids: BTreeMap<&str, PyramidValues<f32>> = BTreeMap::new();
    let mut rollouts: BTreeMap<(&str, TaskSpec), Scanpath> = BTreeMap::new();

    let (mut ss, mut semss, mut semss_missing, mut paths) = (0.0, 0.0, false, 0usize);
    let (mut cig, mut cnss, mut cauc, mut steps) = (0.0, 0.0, 0.0, 0usize);
    for (k, gt) in ground_truth.iter().enumerate() {
        if gt.task.branch() != branch {
            continue;
        }
        let image = by_id
            .get(gt.image_id.as_str())
            .ok_or_else(|| Error::Input(alloc::format!("scanpath {k} references unknown image '{}'", gt.image_id)))?;
        let (h, w) = (image.height() / 4, image.width() / 4);
        let baseline = baselines.get(gt.task)?;

        let predicted = match policy {
            Policy::GroundTruth => gt.clone(),
            Policy::Uniform { seed, length } => {
                uniform_rollout(&gt.image_id, gt.task, h, w, length, seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
            }
            Policy::Model { model, mode } => {
                let key = (gt.image_id.as_str(), gt.task);
                if !rollouts.contains_key(&key) {
                    let pyr = pyramid(&mut pyramids, model, image, branch)?;
                    let sp = model.rollout_from(pyr, &gt.image_id, gt.task, mode, model.config.max_len(branch))?;
                    rollouts.insert(key, sp);
                }
                rollouts[&key].clone()
            }
        };
        ss += sequence_score(&grid.sequence(&predicted), &grid.sequence(gt))?;
        match &image.segmentation {
            Some(seg) => semss += semantic_sequence_score(&predicted, gt, seg)?,
            None => semss_missing = true,
        }
        paths += 1;

        for t in 1..gt.len() {
            let f = gt.fixations[t];
            let map = match policy {
                Policy::GroundTruth => baseline.clone(),
                Policy::Uniform { .. } => SaliencyMap::uniform(h, w),
                Policy::Model { model, .. } => {
                    let pyr = pyramid(&mut pyramids, model, image, branch)?;
                    let pred = model.predict(pyr, &gt.fixations[..t], gt.task)?;
                    SaliencyMap::new(h, w, pred.prob.data().iter().map(|&p| p as f64).collect())?
                }
            };
            cig += conditional_information_gain(&[(map.clone(), f)], baseline)?;
            cnss += conditional_nss(&map, &[f])?;
            cauc += conditional_auc(&map, &[f])?;
            steps += 1;
        }
    }
    if paths == 0 || steps == 0 {
        return Err(Error::Input(alloc::format!(
            "no {} ground-truth fixations to evaluate",
            branch.tag()
        )));
    }
    let (n, m) = (paths as f64, steps as f64);
    Ok(MetricsReport {
        method: String::from(method),
        semss: (!semss_missing).then(|| semss / n),
        ss: ss / n,
        cig: cig / m,
        cnss: cnss / m,
        cauc: cauc / m,
        scanpaths: paths,
        fixations: steps,
    })
}

fn pyramid<'a, 'b>(
    cache: &'b mut BTreeMap<&'a str, PyramidValues<f32>>,
    model: &Model<f32>,
    image: &'a ImageSample,
    branch: Branch,
) -> Result<&'b PyramidValues<f32>> {
    if !cache.contains_key(image.id.as_str()) {
        cache.insert(image.id.as_str(), model.pyramid_values(&image.pixels, branch)?);
    }
    Ok(&cache[image.id.as_str()])
}
