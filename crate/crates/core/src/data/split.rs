use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Scanpath;
use crate::error::{Error, Result};

/// Scanpaths partitioned by image id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train: Vec<Scanpath>,
    pub val: Vec<Scanpath>,
    pub test: Vec<Scanpath>,
    pub train_ids: BTreeSet<String>,
    pub val_ids: BTreeSet<String>,
    pub test_ids: BTreeSet<String>,
}

/// Splits by image id so no image appears in two parts. Every part receives
/// at least one image; deterministic under `seed`.
pub fn split_dataset(records: &[Scanpath], fractions: (f64, f64, f64), seed: u64) -> Result<DatasetSplit> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|&x| x <= 0.0 || !x.is_finite()) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(alloc::format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    let ids: BTreeSet<&str> = records.iter().map(|r| r.image_id.as_str()).collect();
    let n = ids.len();
    if n < 3 {
        return Err(Error::Config(alloc::format!(
            "{n} images cannot be split three ways"
        )));
    }
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // largest-remainder apportionment, then make every part nonempty
    let exact: Vec<f64> = f.iter().map(|x| x * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| *x as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - counts[b] as f64).total_cmp(&(exact[a] - counts[a] as f64)));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| counts[j]).unwrap_or(0);
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }

    let mut out = DatasetSplit::default();
    let parts = [&mut out.train_ids, &mut out.val_ids, &mut out.test_ids];
    let mut at = 0;
    for (part, &count) in parts.into_iter().zip(&counts) {
        part.extend(ids[at..at + count].iter().map(|s| String::from(*s)));
        at += count;
    }
    for r in records {
        if out.train_ids.contains(&r.image_id) {
            out.train.push(r.clone());
        } else if out.val_ids.contains(&r.image_id) {
            out.val.push(r.clone());
        } else {
            out.test.push(r.clone());
        }
    }
    Ok(out)
}
