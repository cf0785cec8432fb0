use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Model, PyramidValues};
use crate::data::{Fixation, Scanpath, TaskSpec};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Probability above which the model stops its scanpath.
pub const TERMINATION_THRESHOLD: f64 = 0.5;

/// Next-fixation choice from a predicted heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    /// Highest-probability cell; ties go to the first in row-major order.
    Argmax,
    /// Multinomial draw from a generator seeded with this value.
    Sample(u64),
}

/// Row-major index of the first maximum.
pub fn argmax<R: Real>(values: &[R]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw; `u` in `[0, 1)`.
pub fn sample_index<R: Real>(prob: &[R], u: f64) -> usize {
    let total: f64 = prob.iter().map(|p| p.as_f64()).sum();
    let mut acc = 0.0;
    let target = u * total;
    for (i, p) in prob.iter().enumerate() {
        acc += p.as_f64();
        if target < acc {
            return i;
        }
    }
    // rounding can leave `target` just past the last cumulative value
    prob.iter().rposition(|p| p.as_f64() > 0.0).unwrap_or(prob.len() - 1)
}

impl<R: Real> Model<R> {
    /// Generates a scanpath from the center start until the termination
    /// probability exceeds the threshold or `max_len` fixations exist.
    pub fn rollout(
        &self,
        image: &Tensor<R>,
        image_id: &str,
        task: TaskSpec,
        mode: SelectMode,
        max_len: usize,
    ) -> Result<Scanpath> {
        let pyramid = self.pyramid_values(image, task.branch())?;
        self.rollout_from(&pyramid, image_id, task, mode, max_len)
    }

    /// Like [`Model::rollout`] with precomputed features.
    pub fn rollout_from(
        &self,
        pyramid: &PyramidValues<R>,
        image_id: &str,
        task: TaskSpec,
        mode: SelectMode,
        max_len: usize,
    ) -> Result<Scanpath> {
        if max_len < 1 {
            return Err(Error::Config("rollout max_len must be at least 1".into()));
        }
        let mut rng = match mode {
            SelectMode::Sample(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            SelectMode::Argmax => None,
        };
        let mut fixations: Vec<Fixation> = alloc::vec![Fixation::CENTER];
        let mut terminated = false;
        while fixations.len() < max_len {
            let pred = self.predict(pyramid, &fixations, task)?;
            if pred.termination.as_f64() > TERMINATION_THRESHOLD {
                terminated = true;
                break;
            }
            let (h, w) = (pred.prob.shape()[0], pred.prob.shape()[1]);
            let idx = match rng.as_mut() {
                Some(r) => sample_index(pred.prob.data(), r.gen::<f64>()),
                None => argmax(pred.prob.data()),
            };
            fixations.push(Fixation::cell_center(idx / w, idx % w, h, w));
        }
        Ok(Scanpath {
            image_id: String::from(image_id),
            task,
            fixations,
            terminated,
        })
    }
}
