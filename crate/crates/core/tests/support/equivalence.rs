//! Branch-equivalence checks shared with the acceptance run.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scanshare_core::model::{Branch, Model, ModelConfig, SplitConfig};
use scanshare_core::Tensor;

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

/// Random images on which the FV and VS pyramids of an all-shared model differ
/// in at least one bit.
pub fn ls_branch_mismatches(config: &ModelConfig, inputs: usize, height: usize, width: usize, seed: u64) -> usize {
    let model: Model<f32> = Model::build(config, SplitConfig::late(config.decoder_layers), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..inputs)
        .filter(|_| {
            let img = Tensor::from_fn(&[3, height, width], |_| rng.gen::<f32>());
            let fv = model.pyramid_values(&img, Branch::Fv).unwrap();
            let vs = model.pyramid_values(&img, Branch::Vs).unwrap();
            fv.maps.iter().zip(&vs.maps).any(|(a, b)| bits(a) != bits(b))
        })
        .count()
}
