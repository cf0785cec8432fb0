use scanshare_core::accounting::{
    count_named, count_parameters, estimate_flops, flops_by_partition, parse_thousandths, published_table2,
    scope_partition, split_cost, BasisPoints, CostReport, PublishedCost, SharingReport, SplitCost, Table3Check,
};
use scanshare_core::autodiff::Tape;
use scanshare_core::model::{Branch, Model, ModelConfig, Partition, SplitConfig};
use scanshare_core::{Error, Tensor};

fn tiny(shared: usize) -> Model<f32> {
    let cfg = ModelConfig::tiny();
    Model::build(&cfg, SplitConfig::new(shared, cfg.decoder_layers).unwrap(), 0).unwrap()
}

#[test]
fn linear_layer_parameter_count() {
    let m = tiny(1);
    let d = m.config.feature_dim as u64;
    let heads = count_parameters(&m, |p| p == Partition::Heads(Branch::Fv));
    // two d x d projections and a d x 1 termination head, each with bias
    assert_eq!(heads, 2 * (d * d + d) + (d + 1));
    assert_eq!(count_named(&m, &["heads_fv"]).unwrap(), heads);
    assert!(matches!(count_named(&m, &["heads"]), Err(Error::Usage(_))));
}

#[test]
fn partition_counts_add_up_to_the_model() {
    for shared in 1..=2 {
        let m = tiny(shared);
        let sum: u64 = Partition::all().iter().map(|&p| count_parameters(&m, |q| q == p)).sum();
        let direct: u64 = m.store.iter().map(|(_, p)| p.value.numel() as u64).sum();
        assert_eq!(sum, direct);
        let report = CostReport::build(&m, 64, 64).unwrap();
        assert_eq!(report.total_parameters, direct);
        assert_eq!(report.entries.iter().map(|e| e.parameters).sum::<u64>(), direct);
    }
}

#[test]
fn matmul_flops() {
    let mut t = Tape::<f32>::new();
    let a = t.constant(Tensor::zeros(&[10, 10]));
    let b = t.constant(Tensor::zeros(&[10, 10]));
    t.matmul(a, b).unwrap();
    assert_eq!(t.total_flops(), 2000);
}

#[test]
fn conv_flops_scale_with_area() {
    let flops = |h: usize, w: usize| {
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::zeros(&[3, h, w]));
        let k = t.constant(Tensor::zeros(&[4, 3, 3, 3]));
        t.conv2d(x, k, 1, 1).unwrap();
        t.total_flops()
    };
    assert_eq!(flops(8, 8), 2 * 3 * 9 * 4 * 64);
    assert_eq!(flops(16, 8), 2 * flops(8, 8));
}

#[test]
fn every_scope_maps_to_a_partition() {
    assert_eq!(scope_partition("encoder"), Some(Partition::Encoder));
    assert_eq!(scope_partition("decoder.layer0"), Some(Partition::SharedDecoder));
    assert_eq!(scope_partition("decoder.input_proj"), Some(Partition::SharedDecoder));
    assert_eq!(scope_partition("decoder.vs.layer4"), Some(Partition::DecoderSuffix(Branch::Vs)));
    assert_eq!(scope_partition("heads.fv"), Some(Partition::Heads(Branch::Fv)));
    assert_eq!(scope_partition("memory"), None);
    assert_eq!(scope_partition("loss"), None);
}

#[test]
fn flops_by_partition_accounts_for_the_whole_pass() {
    let m = tiny(1);
    let parts = flops_by_partition(&m, 64, 96).unwrap();
    assert_eq!(parts.len(), 12);
    assert!(parts.iter().all(|(_, f)| *f > 0));
    let total: u64 = parts.iter().map(|(_, f)| f).sum();
    assert_eq!(estimate_flops(&m, |_| true, 64, 96).unwrap(), total);
    // encoder compute is linear in the pixel count
    let enc = |h, w| estimate_flops(&m, |p| p == Partition::Encoder, h, w).unwrap();
    assert_eq!(enc(128, 96), 2 * enc(64, 96));
}

#[test]
fn published_table_arithmetic() {
    let c = Table3Check::from_rows(&published_table2()).unwrap();
    assert_eq!(c.total_params_k, 42_783);
    assert_eq!(c.trainable_params_k, 19_328);
    assert_eq!(c.total_mflops, 38_349);
    assert_eq!(c.trainable_mflops, 24_931);
    assert_eq!(c.reduced_trainable_params.to_string(), "31.23");
    assert_eq!(c.shared_flops.to_string(), "92.24");
    // the reported figure differs by five hundredths of a percent
    assert_eq!(c.flops_gap_bp(), 5);
}

#[test]
fn published_rows_must_be_complete() {
    let mut rows = published_table2();
    rows.retain(|r| r.component != "decoder");
    assert!(matches!(Table3Check::from_rows(&rows), Err(Error::Input(_))));
    let mut rows = published_table2();
    rows.push(PublishedCost {
        component: "Encoder".into(),
        params_k: 1,
        mflops: 1,
    });
    assert!(matches!(Table3Check::from_rows(&rows), Err(Error::Input(_))));
}

#[test]
fn thousandths_parsing() {
    assert_eq!(parse_thousandths("23.455").unwrap(), 23_455);
    assert_eq!(parse_thousandths("0.74").unwrap(), 740);
    assert_eq!(parse_thousandths(" 13 ").unwrap(), 13_000);
    for bad in ["", "1.2345", "-1", "1e3", "a.1", ".5"] {
        assert!(parse_thousandths(bad).is_err(), "{bad}");
    }
}

#[test]
fn basis_points_round_half_up() {
    assert_eq!(BasisPoints::ratio(1, 3).unwrap().to_string(), "33.33");
    assert_eq!(BasisPoints::ratio(2, 3).unwrap().to_string(), "66.67");
    assert_eq!(BasisPoints::ratio(1, 8).unwrap().to_string(), "12.50");
    // 1/20000 is exactly half a basis point
    assert_eq!(BasisPoints::ratio(1, 20_000).unwrap().0, 1);
    assert_eq!(BasisPoints::ratio(0, 5).unwrap().to_string(), "0.00");
    assert!(BasisPoints::ratio(1, 0).is_err());
}

#[test]
fn zero_shared_cost_is_zero_percent() {
    let c = SplitCost::new("none".into(), 0, 0, 100, 0, 100).unwrap();
    assert_eq!(c.reduced_trainable_params.to_string(), "0.00");
    assert_eq!(c.shared_flops_pct.to_string(), "0.00");
    assert!(SplitCost::new("x".into(), 1, 101, 100, 0, 100).is_err());
}

#[test]
fn sharing_shrinks_monotonically_with_fewer_shared_layers() {
    let r = SharingReport::measure(&ModelConfig::default(), 64, 64).unwrap();
    let labels: Vec<&str> = r.splits.iter().map(|s| s.label.as_str()).collect();
    assert_eq!(labels, ["LS", "ES51", "ES42", "ES33", "ES24", "ES15"]);
    assert!(r.is_monotone());
    // the VS path's trainable total does not depend on the split
    assert!(r.splits.windows(2).all(|w| w[0].trainable_parameters == w[1].trainable_parameters));
    let csv = r.to_csv();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().nth(1).unwrap().starts_with("LS,6,"));
}

#[test]
fn split_cost_matches_partition_sums() {
    let m = tiny(1);
    let c = split_cost(&m, 64, 64).unwrap();
    assert_eq!(c.shared_parameters, count_parameters(&m, |p| p == Partition::SharedDecoder));
    assert_eq!(
        c.trainable_parameters,
        count_parameters(&m, |p| p == Partition::SharedDecoder || p.branch() == Some(Branch::Vs))
    );
    assert_eq!(c.label, "ES11");
}
