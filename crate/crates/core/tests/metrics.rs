mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scanshare_core::data::{generate_scene, oracle_scanpath_vs, Fixation, LabelMap, Scanpath, SceneParams, TaskSpec};
use scanshare_core::metrics::*;
use scanshare_core::model::Branch;
use scanshare_core::Error;

use support::oracles;

fn sp(points: &[(f64, f64)]) -> Scanpath {
    Scanpath {
        image_id: "img".into(),
        task: TaskSpec::FreeViewing,
        fixations: points.iter().map(|&(x, y)| Fixation { x, y }).collect(),
        terminated: true,
    }
}

fn cell(r: usize, c: usize, h: usize, w: usize) -> Fixation {
    Fixation::cell_center(r, c, h, w)
}

#[test]
fn grid_cluster_labels() {
    let g = GridClusters::new(0.5).unwrap();
    assert_eq!(g.cells(), 4);
    assert_eq!(g.label(0.25, 0.25), 0);
    assert_eq!(g.label(0.75, 0.25), 1);
    assert_eq!(g.label(0.25, 0.75), 2);
    assert_eq!(g.label(1.0, 1.0), 3);
    assert_eq!(cluster_fixations(&sp(&[(0.25, 0.25), (1.0, 1.0)]), 0.5).unwrap(), vec![0, 3]);
    assert_eq!(GridClusters::new(0.3).unwrap().cells(), 16);
    assert_eq!(GridClusters::new(DEFAULT_CELL_FRACTION).unwrap().cells(), 64);
    assert!(matches!(GridClusters::new(0.0), Err(Error::Input(_))));
    assert!(matches!(GridClusters::new(1.5), Err(Error::Input(_))));
}

#[test]
fn sequence_score_cases() {
    assert_eq!(sequence_score(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
    assert_eq!(sequence_score(&[1, 2, 3], &[4, 5, 6]).unwrap(), 0.0);
    let s = sequence_score(&['A', 'B', 'C'], &['A', 'B', 'D']).unwrap();
    assert_eq!(oracles::recursive_edit(b"ABC", b"ABD"), 1);
    assert!((s - (1.0 - 1.0 / 3.0)).abs() < 1e-15);
    assert!((s - 0.6667).abs() < 1e-4);
    assert!(matches!(sequence_score::<u8>(&[], &[1]), Err(Error::Input(_))));
}

#[test]
fn dp_edit_distance_matches_exhaustive_recursion() {
    let (pairs, bad) = oracles::sequence_oracle_check();
    assert_eq!(pairs, 364 * 364);
    assert_eq!(bad, 0);
}

fn two_object_seg() -> LabelMap {
    // left half label 1, right half label 2, 4x4
    let labels = (0..16).map(|i| if i % 4 < 2 { 1 } else { 2 }).collect();
    LabelMap::new(4, 4, labels).unwrap()
}

#[test]
fn semantic_sequence_score_cases() {
    let seg = two_object_seg();
    let a = sp(&[(0.1, 0.1), (0.2, 0.9), (0.3, 0.5)]);
    let b = sp(&[(0.4, 0.2), (0.1, 0.6), (0.0, 0.0)]);
    assert_eq!(semantic_sequence_score(&a, &b, &seg).unwrap(), 1.0);
    let c = sp(&[(0.9, 0.1), (0.8, 0.9), (0.7, 0.5)]);
    assert_eq!(semantic_sequence_score(&a, &c, &seg).unwrap(), 0.0);
    let d = sp(&[(0.1, 0.1), (0.9, 0.9), (0.3, 0.5)]);
    assert_eq!(semantic_labels(&d, &seg), vec![1, 2, 1]);
    let s = semantic_sequence_score(&a, &d, &seg).unwrap();
    assert!((s - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn density_baseline_shape() {
    let train = vec![sp(&[(0.5, 0.5), (0.5, 0.5)])];
    let m = build_density_baseline(&train, TaskSpec::FreeViewing, 9, 9, 1.0 / 16.0, BASELINE_FLOOR).unwrap();
    assert!((m.sum() - 1.0).abs() < 1e-9);
    let argmax = (0..81).max_by(|&a, &b| m.values[a].total_cmp(&m.values[b])).unwrap();
    assert_eq!(argmax, 4 * 9 + 4);
    assert!(m.values.iter().all(|&v| v > 0.0));

    let sym = vec![sp(&[(0.5, 0.5), (0.25, 0.5), (0.75, 0.5)])];
    let m = build_density_baseline(&sym, TaskSpec::FreeViewing, 8, 8, 1.0 / 16.0, BASELINE_FLOOR).unwrap();
    for r in 0..8 {
        for c in 0..8 {
            assert!((m.values[r * 8 + c] - m.values[r * 8 + 7 - c]).abs() < 1e-9);
        }
    }
}

#[test]
fn density_baseline_needs_data() {
    let train = vec![sp(&[(0.5, 0.5), (0.2, 0.2)])];
    let r = build_density_baseline(&train, TaskSpec::VisualSearch { target: 2 }, 4, 4, 0.1, BASELINE_FLOOR);
    assert!(matches!(r, Err(Error::MissingBaseline(_))));
    // a center-only scanpath contributes nothing
    let r = build_density_baseline(&[sp(&[(0.5, 0.5)])], TaskSpec::FreeViewing, 4, 4, 0.1, BASELINE_FLOOR);
    assert!(matches!(r, Err(Error::MissingBaseline(_))));
}

fn map_with(h: usize, w: usize, at: usize, p: f64) -> SaliencyMap {
    let rest = (1.0 - p) / (h * w - 1) as f64;
    let values = (0..h * w).map(|i| if i == at { p } else { rest }).collect();
    SaliencyMap::new(h, w, values).unwrap()
}

#[test]
fn information_gain_cases() {
    let base = map_with(2, 2, 0, 0.25);
    let f = cell(0, 0, 2, 2);
    assert_eq!(conditional_information_gain(&[(base.clone(), f)], &base).unwrap(), 0.0);
    let model = map_with(2, 2, 0, 0.5);
    assert!((conditional_information_gain(&[(model, f)], &base).unwrap() - 1.0).abs() < 1e-9);
    let base = map_with(2, 2, 0, 0.5);
    let model = map_with(2, 2, 0, 0.125);
    assert!((conditional_information_gain(&[(model, f)], &base).unwrap() + 2.0).abs() < 1e-9);
    // a zero model probability is clamped rather than infinite
    let zero = map_with(2, 2, 0, 0.0);
    let g = conditional_information_gain(&[(zero, f)], &base).unwrap();
    assert!(g.is_finite() && g < -30.0);
}

#[test]
fn nss_cases() {
    let flat = SaliencyMap::new(2, 2, vec![0.3; 4]).unwrap();
    assert_eq!(conditional_nss(&flat, &[cell(0, 1, 2, 2)]).unwrap(), 0.0);
    let m = SaliencyMap::new(2, 2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
    let v = conditional_nss(&m, &[cell(1, 1, 2, 2)]).unwrap();
    assert!((v - 0.75 / 0.1875f64.sqrt()).abs() < 1e-12);
    assert!((v - 1.7321).abs() < 1e-4);
    assert!(matches!(conditional_nss(&m, &[]), Err(Error::Input(_))));
}

#[test]
fn auc_cases() {
    let flat = SaliencyMap::new(3, 3, vec![0.5; 9]).unwrap();
    assert_eq!(conditional_auc(&flat, &[cell(1, 1, 3, 3)]).unwrap(), 0.5);
    let m = map_with(3, 3, 4, 0.9);
    assert_eq!(conditional_auc(&m, &[cell(1, 1, 3, 3)]).unwrap(), 1.0);
    assert!(matches!(conditional_auc(&m, &[]), Err(Error::Input(_))));
    let all: Vec<Fixation> = (0..4).map(|i| cell(i / 2, i % 2, 2, 2)).collect();
    let small = SaliencyMap::uniform(2, 2);
    assert!(matches!(conditional_auc(&small, &all), Err(Error::Input(_))));
}

#[test]
fn auc_matches_threshold_sweep() {
    assert!(oracles::auc_oracle_gap(50, 17) < 1e-9);
}

#[test]
fn report_row_follows_header_order() {
    assert_eq!(REPORT_HEADER, "Method,SemSS,SS,cIG,cNSS,cAUC");
    let mut r = MetricsReport {
        method: "LS".into(),
        semss: Some(0.5),
        ss: 0.25,
        cig: -1.0,
        cnss: 2.0,
        cauc: 0.75,
        scanpaths: 1,
        fixations: 2,
    };
    assert_eq!(r.row(), "LS,0.5000,0.2500,-1.0000,2.0000,0.7500");
    r.semss = None;
    assert_eq!(r.row(), "LS,,0.2500,-1.0000,2.0000,0.7500");
}

fn synthetic() -> (Vec<scanshare_core::data::ImageSample>, Vec<Scanpath>) {
    let params = SceneParams {
        height: 64,
        width: 64,
        rows: 3,
        cols: 3,
        categories: 4,
    };
    let mut images = Vec::new();
    let mut paths = Vec::new();
    for seed in 0..30 {
        let s = generate_scene(seed, &params).unwrap();
        for &t in &s.sample.present_targets {
            paths.push(oracle_scanpath_vs(&s.sample, t, seed).unwrap());
        }
        images.push(s.sample);
    }
    (images, paths)
}

#[test]
fn ground_truth_scores_perfectly_against_itself() {
    let (images, paths) = synthetic();
    let base = Baselines::build(&paths, 16, 16, 1.0 / 16.0, BASELINE_FLOOR).unwrap();
    let r = evaluate(Policy::GroundTruth, "gt", &images, &paths, Branch::Vs, &base, EvalOptions::default()).unwrap();
    assert_eq!(r.ss, 1.0);
    assert_eq!(r.semss, Some(1.0));
    assert_eq!(r.cig, 0.0);
    assert_eq!(r.scanpaths, paths.len());
}

#[test]
fn uniform_policy_is_chance_level() {
    let (images, paths) = synthetic();
    let base = Baselines::build(&paths, 16, 16, 1.0 / 16.0, BASELINE_FLOOR).unwrap();
    let policy = Policy::Uniform { seed: 3, length: 3 };
    let r = evaluate(policy, "uniform", &images, &paths, Branch::Vs, &base, EvalOptions::default()).unwrap();
    assert_eq!(r.cauc, 0.5);
    assert_eq!(r.cnss, 0.0);
    assert!(r.cig < 0.0, "cIG {}", r.cig);
    let again = evaluate(policy, "uniform", &images, &paths, Branch::Vs, &base, EvalOptions::default()).unwrap();
    assert_eq!(r, again);
}

#[test]
fn missing_segmentation_omits_semss() {
    let (mut images, paths) = synthetic();
    images[0].segmentation = None;
    let base = Baselines::build(&paths, 16, 16, 1.0 / 16.0, BASELINE_FLOOR).unwrap();
    let r = evaluate(Policy::GroundTruth, "gt", &images, &paths, Branch::Vs, &base, EvalOptions::default()).unwrap();
    assert_eq!(r.semss, None);
    assert!(r.row().starts_with("gt,,"));
}

#[test]
fn evaluate_rejects_missing_branch_data() {
    let (images, paths) = synthetic();
    let base = Baselines::build(&paths, 16, 16, 1.0 / 16.0, BASELINE_FLOOR).unwrap();
    let r = evaluate(Policy::GroundTruth, "gt", &images, &paths, Branch::Fv, &base, EvalOptions::default());
    assert!(matches!(r, Err(Error::Input(_))));
}

fn arb_map() -> impl Strategy<Value = SaliencyMap> {
    prop::collection::vec(0.0f64..1.0, 16).prop_map(|v| SaliencyMap::new(4, 4, v).unwrap())
}

fn arb_fix() -> impl Strategy<Value = Vec<Fixation>> {
    prop::collection::vec((0usize..4, 0usize..4), 1..4)
        .prop_map(|cells| cells.into_iter().map(|(r, c)| cell(r, c, 4, 4)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sequence_score_symmetric_and_bounded(a in prop::collection::vec(0u8..4, 1..8), b in prop::collection::vec(0u8..4, 1..8)) {
        let ab = sequence_score(&a, &b).unwrap();
        prop_assert_eq!(ab, sequence_score(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(sequence_score(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn auc_invariant_under_increasing_transform(m in arb_map(), f in arb_fix()) {
        let t = SaliencyMap::new(4, 4, m.values.iter().map(|v| (3.0 * v).exp() + v * v * v).collect()).unwrap();
        prop_assert_eq!(conditional_auc(&m, &f).unwrap(), conditional_auc(&t, &f).unwrap());
        let auc = conditional_auc(&m, &f).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
    }

    #[test]
    fn nss_invariant_under_positive_affine(m in arb_map(), f in arb_fix(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let t = SaliencyMap::new(4, 4, m.values.iter().map(|v| a * v + b).collect()).unwrap();
        prop_assert!((conditional_nss(&m, &f).unwrap() - conditional_nss(&t, &f).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn baseline_is_positive_distribution(pts in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..10), sigma in 0.01f64..0.5) {
        let mut fixations = vec![(0.5, 0.5)];
        fixations.extend(pts);
        let m = build_density_baseline(&[sp(&fixations)], TaskSpec::FreeViewing, 6, 8, sigma, BASELINE_FLOOR).unwrap();
        prop_assert!((m.sum() - 1.0).abs() < 1e-6);
        prop_assert!(m.values.iter().all(|&v| v > 0.0));
        let f = Fixation { x: 0.3, y: 0.6 };
        prop_assert_eq!(conditional_information_gain(&[(m.clone(), f)], &m).unwrap(), 0.0);
    }
}

#[test]
fn random_auc_cases_agree_with_sweep_including_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 1..6 {
        let (map, fix) = oracles::random_case(&mut rng, k, true);
        assert!((conditional_auc(&map, &fix).unwrap() - oracles::sweep_auc(&map, &fix)).abs() < 1e-9);
    }
}
