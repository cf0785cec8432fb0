//! Brute-force reference implementations for the metric suite.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scanshare_core::data::Fixation;
use scanshare_core::metrics::{conditional_auc, edit_distance, sequence_score, SaliencyMap};

/// Textbook recursive Levenshtein distance, no memoization.
pub fn recursive_edit(a: &[u8], b: &[u8]) -> usize {
    match (a.split_last(), b.split_last()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((x, ra)), Some((y, rb))) => {
            let sub = recursive_edit(ra, rb) + usize::from(x != y);
            let del = recursive_edit(ra, b) + 1;
            let ins = recursive_edit(a, rb) + 1;
            sub.min(del).min(ins)
        }
    }
}

/// Every sequence over `0..symbols` with length in `0..=max_len`.
pub fn all_sequences(max_len: usize, symbols: u8) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..symbols {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Pairs checked and pairs where DP distance or score disagreed with the oracle.
pub fn sequence_oracle_check() -> (usize, usize) {
    let seqs = all_sequences(5, 3);
    let mut pairs = 0;
    let mut bad = 0;
    for a in &seqs {
        for b in &seqs {
            pairs += 1;
            let d = recursive_edit(a, b);
            let mut ok = edit_distance(a, b) == d;
            if !a.is_empty() && !b.is_empty() {
                let expect = 1.0 - d as f64 / a.len().max(b.len()) as f64;
                ok &= sequence_score(a, b).unwrap() == expect;
            }
            bad += usize::from(!ok);
        }
    }
    (pairs, bad)
}

/// ROC area from an explicit sweep over every distinct threshold with
/// trapezoidal integration.
pub fn sweep_auc(map: &SaliencyMap, fixations: &[Fixation]) -> f64 {
    let n = map.values.len();
    let mut positive = vec![false; n];
    for &f in fixations {
        positive[map.index(f)] = true;
    }
    let pos = positive.iter().filter(|&&p| p).count() as f64;
    let neg = n as f64 - pos;
    let mut thresholds: Vec<f64> = map.values.clone();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = (0..n).filter(|&i| positive[i] && map.values[i] >= t).count() as f64;
        let fp = (0..n).filter(|&i| !positive[i] && map.values[i] >= t).count() as f64;
        points.push((fp / neg, tp / pos));
    }
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Random `8x8` map with `k` distinct fixated cells.
pub fn random_case(rng: &mut ChaCha8Rng, k: usize, quantize: bool) -> (SaliencyMap, Vec<Fixation>) {
    let values: Vec<f64> = (0..64)
        .map(|_| {
            let v: f64 = rng.gen();
            if quantize {
                (v * 4.0).floor()
            } else {
                v
            }
        })
        .collect();
    let map = SaliencyMap::new(8, 8, values).unwrap();
    let mut cells: Vec<usize> = Vec::new();
    while cells.len() < k {
        let c = rng.gen_range(0..64);
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    let fixations = cells.iter().map(|&c| Fixation::cell_center(c / 8, c % 8, 8, 8)).collect();
    (map, fixations)
}

/// Largest |rank AUC - sweep AUC| over `cases` random maps with 3 fixations.
pub fn auc_oracle_gap(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .map(|i| {
            let (map, fix) = random_case(&mut rng, 3, i % 2 == 1);
            (conditional_auc(&map, &fix).unwrap() - sweep_auc(&map, &fix)).abs()
        })
        .fold(0.0, f64::max)
}
