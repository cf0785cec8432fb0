mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scanshare_core::autodiff::{check_gradients, GradCheckOptions, Tape};
use scanshare_core::model::Partition;
use scanshare_core::nn::{Ctx, Init, MultiHeadAttention, ParamStore};
use scanshare_core::{Error, Tensor};

use support::gradients::{self, random};

fn t64(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape, data.to_vec()).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "entry {i}: {x} vs {y}");
    }
}

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn naive_conv(x: &[f64], kern: &[f64], c: usize, h: usize, w: usize, k: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Vec<f64> {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; k * oh * ow];
    for ko in 0..k {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ci in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                acc += x[ci * h * w + iy as usize * w + ix as usize]
                                    * kern[((ko * c + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                }
                out[(ko * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

#[test]
fn matmul_identity_and_hand_case() {
    let mut t = Tape::<f64>::new();
    let i2 = t.constant(t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let y = t.matmul(i2, i2).unwrap();
    assert_eq!(t.value(y), &[1.0, 0.0, 0.0, 1.0]);

    let a = t.constant(t64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let b = t.constant(t64(&[2, 1], &[0.0, 1.0]));
    let y = t.matmul(a, b).unwrap();
    assert_eq!(t.shape(y), &[2, 1]);
    assert_eq!(t.value(y), &[2.0, 4.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut t = Tape::<f64>::new();
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[2, 3]));
    match t.matmul(a, b) {
        Err(Error::Dimension { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn conv_identity_kernel_and_zero_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[2, 4, 5]);
    let mut t = Tape::<f64>::new();
    let xv = t.constant(x.clone());
    // one input channel mapped to itself per output channel
    let ident = t.constant(t64(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]));
    let y = t.conv2d(xv, ident, 1, 0).unwrap();
    assert_eq!(t.value(y), x.data());

    let single = t.constant(random(&mut rng, &[1, 5, 5]));
    let one = t.constant(t64(&[1, 1, 1, 1], &[1.0]));
    let y = t.conv2d(single, one, 1, 0).unwrap();
    assert_eq!(t.value(y), t.value(single));

    let zero = t.constant(Tensor::zeros(&[3, 2, 3, 3]));
    let y = t.conv2d(xv, zero, 1, 1).unwrap();
    assert!(t.value(y).iter().all(|&v| v == 0.0));
}

#[test]
fn conv_matches_sliding_window_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random(&mut rng, &[1, 5, 5]);
    let k = random(&mut rng, &[1, 1, 3, 3]);
    let mut t = Tape::<f64>::new();
    let (xv, kv) = (t.constant(x.clone()), t.constant(k.clone()));
    let y = t.conv2d(xv, kv, 1, 1).unwrap();
    assert_eq!(t.shape(y), &[1, 5, 5]);
    close(t.value(y), &naive_conv(x.data(), k.data(), 1, 5, 5, 1, 3, 3, 1, 1), 1e-12);

    let x = random(&mut rng, &[3, 7, 6]);
    let k = random(&mut rng, &[2, 3, 3, 2]);
    let (xv, kv) = (t.constant(x.clone()), t.constant(k.clone()));
    let y = t.conv2d(xv, kv, 2, 1).unwrap();
    assert_eq!(t.shape(y), &[2, 4, 4]);
    close(t.value(y), &naive_conv(x.data(), k.data(), 3, 7, 6, 2, 3, 2, 2, 1), 1e-12);
}

#[test]
fn conv_kernel_larger_than_padded_input_is_rejected() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::zeros(&[1, 2, 2]));
    let k = t.constant(Tensor::zeros(&[1, 1, 5, 5]));
    assert!(matches!(t.conv2d(x, k, 1, 1), Err(Error::Dimension { .. })));
}

#[test]
fn softmax_closed_forms() {
    let mut t = Tape::<f64>::new();
    let c = t.constant(Tensor::full(&[5], 3.0));
    let y = t.softmax(c, 0).unwrap();
    close(t.value(y), &[0.2; 5], 1e-15);

    let x = t.constant(t64(&[2], &[0.0, 3f64.ln()]));
    let y = t.softmax(x, 0).unwrap();
    close(t.value(y), &[0.25, 0.75], 1e-15);

    let x = t.constant(t64(&[2], &[1000.0, 1001.0]));
    let y = t.softmax(x, 0).unwrap();
    // shifted-exponent oracle
    let e = (-1.0f64).exp();
    close(t.value(y), &[e / (1.0 + e), 1.0 / (1.0 + e)], 1e-12);
    close(t.value(y), &[0.2689, 0.7311], 1e-4);
}

#[test]
fn softmax_rejects_bad_axis() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::zeros(&[2, 2]));
    assert!(matches!(t.softmax(x, 2), Err(Error::Input(_))));
}

#[test]
fn layer_norm_closed_forms() {
    let mut t = Tape::<f64>::new();
    let g = t.constant(Tensor::full(&[4], 1.0));
    let b = t.constant(Tensor::zeros(&[4]));
    let c = t.constant(Tensor::full(&[2, 4], 7.5));
    let y = t.layer_norm(c, g, b, 1e-5).unwrap();
    assert!(t.value(y).iter().all(|&v| v == 0.0));

    let g = t.constant(Tensor::full(&[2], 1.0));
    let b = t.constant(Tensor::zeros(&[2]));
    let x = t.constant(t64(&[1, 2], &[1.0, 3.0]));
    let y = t.layer_norm(x, g, b, 1e-12).unwrap();
    close(t.value(y), &[-1.0, 1.0], 1e-9);
}

fn mha(d: usize, heads: usize, seed: u64) -> (ParamStore<f64>, MultiHeadAttention) {
    let mut store = ParamStore::new();
    let mut init = Init {
        store: &mut store,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let m = MultiHeadAttention::new(&mut init, "attn", Partition::Encoder, d, heads).unwrap();
    (store, m)
}

#[test]
fn attention_single_key_returns_projected_value() {
    let (store, m) = mha(4, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let kv = random(&mut rng, &[1, 4]);
    for _ in 0..3 {
        let q = random(&mut rng, &[2, 4]);
        let mut ctx = Ctx::frozen(&store);
        let qv = ctx.tape.constant(q);
        let kvv = ctx.tape.constant(kv.clone());
        let y = m.forward(&mut ctx, qv, kvv, kvv).unwrap();
        let v = m.value.forward(&mut ctx, kvv).unwrap();
        let expect = m.out.forward(&mut ctx, v).unwrap();
        let e = ctx.tape.value(expect).to_vec();
        let got = ctx.tape.value(y);
        close(&got[..4], &e, 1e-12);
        close(&got[4..], &e, 1e-12);
    }
}

#[test]
fn attention_identical_keys_average_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut t = Tape::<f64>::new();
    let q = t.constant(random(&mut rng, &[2, 4]));
    let row = random(&mut rng, &[1, 4]);
    let keys: Vec<f64> = row.data().iter().cycle().take(12).copied().collect();
    let k = t.constant(t64(&[3, 4], &keys));
    let vals = random(&mut rng, &[3, 4]);
    let v = t.constant(vals.clone());
    let y = t.attention(q, k, v, 2).unwrap();
    let mean: Vec<f64> = (0..4).map(|j| (0..3).map(|i| vals.data()[i * 4 + j]).sum::<f64>() / 3.0).collect();
    close(&t.value(y)[..4], &mean, 1e-12);
    close(&t.value(y)[4..], &mean, 1e-12);
}

#[test]
fn attention_matches_per_head_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (nq, nk, d, heads) = (2, 3, 4, 2);
    let q = random(&mut rng, &[nq, d]);
    let k = random(&mut rng, &[nk, d]);
    let v = random(&mut rng, &[nk, d]);
    let mut t = Tape::<f64>::new();
    let (qv, kv, vv) = (t.constant(q.clone()), t.constant(k.clone()), t.constant(v.clone()));
    let y = t.attention(qv, kv, vv, heads).unwrap();

    let dh = d / heads;
    let mut expect = vec![0.0; nq * d];
    for h in 0..heads {
        for i in 0..nq {
            let scores: Vec<f64> = (0..nk)
                .map(|j| {
                    (0..dh).map(|c| q.data()[i * d + h * dh + c] * k.data()[j * d + h * dh + c]).sum::<f64>()
                        / (dh as f64).sqrt()
                })
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            for j in 0..nk {
                let a = (scores[j] - m).exp() / z;
                for c in 0..dh {
                    expect[i * d + h * dh + c] += a * v.data()[j * d + h * dh + c];
                }
            }
        }
    }
    close(t.value(y), &expect, 1e-6);
}

#[test]
fn attention_heads_must_divide_width() {
    let mut store = ParamStore::<f64>::new();
    let mut init = Init {
        store: &mut store,
        rng: ChaCha8Rng::seed_from_u64(0),
    };
    let r = MultiHeadAttention::new(&mut init, "attn", Partition::Encoder, 6, 4);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn bilinear_sample_cases() {
    let mut t = Tape::<f64>::new();
    let map = t.constant(t64(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    // center of cell (row 1, col 0)
    let y = t.bilinear_sample(map, &[(0.25, 0.75)]).unwrap();
    assert_eq!(t.value(y), &[3.0]);

    let c = t.constant(Tensor::full(&[2, 3, 4], 0.7));
    let y = t.bilinear_sample(c, &[(0.0, 0.0), (0.33, 0.9), (1.0, 1.0)]).unwrap();
    close(t.value(y), &[0.7; 6], 1e-15);

    let ramp = t.constant(t64(&[1, 1, 2], &[0.0, 1.0]));
    let y = t.bilinear_sample(ramp, &[(0.5, 0.5)]).unwrap();
    assert_eq!(t.value(y), &[0.5]);

    assert!(matches!(t.bilinear_sample(ramp, &[(1.01, 0.5)]), Err(Error::Input(_))));
}

#[test]
fn backward_simple_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&mut rng, &[3, 2]);
    let mut t = Tape::<f64>::new();
    let v = t.leaf(x.clone(), true);
    let s = t.sum(v);
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(v).unwrap(), &[1.0; 6]);

    let mut t = Tape::<f64>::new();
    let v = t.leaf(x.clone(), true);
    let sq = t.mul(v, v).unwrap();
    let s = t.sum(sq);
    let g = t.backward(s).unwrap();
    let two_x: Vec<f64> = x.data().iter().map(|a| 2.0 * a).collect();
    assert_eq!(g.get(v).unwrap(), &two_x[..]);
}

#[test]
fn backward_requires_scalar_loss() {
    let mut t = Tape::<f64>::new();
    let v = t.leaf(Tensor::zeros(&[2]), true);
    assert!(matches!(t.backward(v), Err(Error::Usage(_))));
}

#[test]
fn gradcheck_linear_model_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = vec![("w".to_string(), random(&mut rng, &[4, 3])), ("b".to_string(), random(&mut rng, &[3]))];
    let x = random(&mut rng, &[5, 4]);
    let report = check_gradients(
        &params,
        |t, v| {
            let xv = t.constant(x.clone());
            let y = t.matmul(xv, v[0])?;
            let y = t.add_row_bias(y, v[1])?;
            gradients::project(t, y, 3)
        },
        GradCheckOptions::with_tolerance(1e-8),
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn gradcheck_flags_corrupted_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params = vec![("x".to_string(), random(&mut rng, &[4]))];
    let report = check_gradients(
        &params,
        |t, v| {
            // forward identity, backward doubled
            let y = t.grad_scale(v[0], 2.0);
            let s = t.sigmoid(y);
            gradients::project(t, s, 1)
        },
        GradCheckOptions::with_tolerance(1e-4),
    )
    .unwrap();
    assert!(!report.passed());
    assert!(report.max_rel_error > 0.3);
}

#[test]
fn every_op_passes_finite_differences() {
    for (name, report) in gradients::op_reports() {
        assert!(report.passed(), "{name}: max rel err {} ({:?})", report.max_rel_error, report.worst());
    }
}

#[test]
fn composite_conv_attention_norm_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let params = vec![
        ("x".to_string(), random(&mut rng, &[2, 4, 4])),
        ("k".to_string(), random(&mut rng, &[4, 2, 3, 3])),
        ("gain".to_string(), random(&mut rng, &[4])),
        ("bias".to_string(), random(&mut rng, &[4])),
    ];
    let report = check_gradients(
        &params,
        |t, v| {
            let y = t.conv2d(v[0], v[1], 2, 1)?; // [4, 2, 2]
            let y = t.reshape(y, &[4, 4])?;
            let y = t.transpose(y)?; // tokens [4, 4]
            let a = t.attention(y, y, y, 2)?;
            let n = t.layer_norm(a, v[2], v[3], 1e-5)?;
            gradients::project(t, n, 4)
        },
        GradCheckOptions::with_tolerance(1e-4),
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn replaying_a_graph_is_bit_identical() {
    let build = || {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut t = Tape::<f32>::new();
        let x = t.constant(random(&mut rng, &[2, 6, 6]).cast());
        let k = t.constant(random(&mut rng, &[3, 2, 3, 3]).cast());
        let y = t.conv2d(x, k, 1, 1).unwrap();
        let y = t.reshape(y, &[3, 36]).unwrap();
        let y = t.softmax(y, 1).unwrap();
        t.value(y).to_vec()
    };
    let (a, b) = (build(), build());
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn forward_outputs_stay_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut t = Tape::<f32>::new();
    let x = t.constant(random(&mut rng, &[4, 8]).cast());
    let big = t.scale(x, 500.0);
    let s = t.softmax(big, 1).unwrap();
    let g = t.sigmoid(big);
    let n = t.constant(Tensor::full(&[8], 1.0f32));
    let z = t.constant(Tensor::zeros(&[8]));
    let l = t.layer_norm(big, n, z, 1e-5).unwrap();
    for v in [s, g, l] {
        assert!(t.tensor(v).all_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_sum_to_one(values in prop::collection::vec(-50.0f32..50.0, 1..40), rows in 1usize..4) {
        let n = values.len();
        let data: Vec<f32> = (0..rows).flat_map(|r| values.iter().map(move |v| v * (r as f32 + 1.0))).collect();
        let mut t = Tape::<f32>::new();
        let x = t.constant(Tensor::new(&[rows, n], data).unwrap());
        let y = t.softmax(x, 1).unwrap();
        for r in 0..rows {
            let row = &t.value(y)[r * n..(r + 1) * n];
            let total: f64 = row.iter().map(|&v| v as f64).sum();
            prop_assert!((total - 1.0).abs() <= 1e-6);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn matmul_matches_naive_loop(m in 1usize..5, k in 1usize..5, n in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[m, k]);
        let b = random(&mut rng, &[k, n]);
        let scale = |t: &Tensor<f64>| -> Tensor<f32> { Tensor::from_fn(t.shape(), |i| (t.data()[i] * 10.0) as f32) };
        let (a32, b32) = (scale(&a), scale(&b));
        let mut t = Tape::<f32>::new();
        let (av, bv) = (t.constant(a32.clone()), t.constant(b32.clone()));
        let y = t.matmul(av, bv).unwrap();
        let a64: Vec<f64> = a32.data().iter().map(|&v| v as f64).collect();
        let b64: Vec<f64> = b32.data().iter().map(|&v| v as f64).collect();
        let expect = naive_matmul(&a64, &b64, m, k, n);
        let abs_a: Vec<f64> = a64.iter().map(|v| v.abs()).collect();
        let abs_b: Vec<f64> = b64.iter().map(|v| v.abs()).collect();
        let magnitude = naive_matmul(&abs_a, &abs_b, m, k, n);
        for ((x, y), mag) in t.value(y).iter().zip(&expect).zip(&magnitude) {
            // relative to the magnitude of the summed terms
            prop_assert!((*x as f64 - y).abs() <= 1e-6 * mag.max(1.0));
        }
    }

    #[test]
    fn conv_matches_naive_loop(c in 1usize..3, h in 3usize..7, w in 3usize..7, stride in 1usize..3, pad in 0usize..2, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[c, h, w]);
        let k = random(&mut rng, &[2, c, 3, 3]);
        let mut t = Tape::<f64>::new();
        let (xv, kv) = (t.constant(x.clone()), t.constant(k.clone()));
        let y = t.conv2d(xv, kv, stride, pad).unwrap();
        let expect = naive_conv(x.data(), k.data(), c, h, w, 2, 3, 3, stride, pad);
        prop_assert_eq!(t.shape(y), &[2, (h + 2 * pad - 3) / stride + 1, (w + 2 * pad - 3) / stride + 1][..]);
        for (a, b) in t.value(y).iter().zip(&expect) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
