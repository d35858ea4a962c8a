use proptest::prelude::*;
use rand::Rng;

use crate::rng::rng_for;

use super::*;

fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = rng_for(seed, 99, 0);
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Tensor::new(shape, data, true).unwrap()
}

// ── forward values ──────────────────────────────────────────────────────

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut tape = Tape::new();
    let x = tape.constant(1, 2, vec![0.0, 0.0]).unwrap();
    let y = tape.softmax_rows(x, 1.0).unwrap();
    assert_eq!(tape.value(y), &[0.5, 0.5]);
}

#[test]
fn l2_normalize_three_four_five() {
    let mut tape = Tape::new();
    let x = tape.constant(1, 2, vec![3.0, 4.0]).unwrap();
    let y = tape.l2_normalize_rows(x).unwrap();
    let v = tape.value(y);
    assert_close(v[0], 0.6, 1e-15);
    assert_close(v[1], 0.8, 1e-15);
}

#[test]
fn matmul_of_ones() {
    let mut tape = Tape::new();
    let a = tape.constant(2, 3, vec![1.0; 6]).unwrap();
    let b = tape.constant(3, 2, vec![1.0; 6]).unwrap();
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c), &[3.0, 3.0, 3.0, 3.0]);
    assert_eq!(tape.dims(c), (2, 2));
}

#[test]
fn layer_norm_rows_have_zero_mean_unit_variance() {
    let mut tape = Tape::new();
    let x = tape.constant(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 2.0, 7.0]).unwrap();
    let gain = tape.constant(1, 4, vec![1.0; 4]).unwrap();
    let bias = tape.constant(1, 4, vec![0.0; 4]).unwrap();
    let y = tape.layer_norm(x, gain, bias).unwrap();
    let v = tape.value(y);
    for row in v.chunks(4) {
        let mean: f64 = row.iter().sum::<f64>() / 4.0;
        let var: f64 = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 4.0;
        assert_close(mean, 0.0, 1e-12);
        assert_close(var, 1.0, 1e-3); // eps in the denominator shifts variance slightly below 1
    }
}

#[test]
fn masked_softmax_zeroes_disallowed_positions() {
    let mut tape = Tape::new();
    let x = tape.constant(2, 3, vec![1.0, 2.0, 3.0, 1.0, 1.0, 1.0]).unwrap();
    let mask = vec![true, true, false, true, false, false];
    let y = tape.softmax_rows_masked(x, 1.0, mask).unwrap();
    let v = tape.value(y);
    assert_eq!(v[2], 0.0);
    assert_close(v[0] + v[1], 1.0, 1e-12);
    assert_eq!(&v[3..6], &[1.0, 0.0, 0.0]);
}

#[test]
fn transpose_and_slices_move_the_right_entries() {
    let mut tape = Tape::new();
    let x = tape.constant(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let t = tape.transpose(x).unwrap();
    assert_eq!(tape.value(t), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    let r = tape.slice_rows(x, 1, 2).unwrap();
    assert_eq!(tape.value(r), &[4.0, 5.0, 6.0]);
    let c = tape.slice_cols(x, 1, 3).unwrap();
    assert_eq!(tape.value(c), &[2.0, 3.0, 5.0, 6.0]);
    let m = tape.mean_rows(x).unwrap();
    assert_eq!(tape.value(m), &[2.5, 3.5, 4.5]);
}

#[test]
fn embedding_looks_up_rows() {
    let mut tape = Tape::new();
    let table = tape.constant(3, 2, vec![0.0, 1.0, 10.0, 11.0, 20.0, 21.0]).unwrap();
    let e = tape.embedding(table, &[2, 0, 2]).unwrap();
    assert_eq!(tape.value(e), &[20.0, 21.0, 0.0, 1.0, 20.0, 21.0]);
}

// ── backward values ─────────────────────────────────────────────────────

#[test]
fn grad_of_sum_of_squares() {
    let x = Tensor::new(&[2], vec![1.0, 2.0], true).unwrap();
    let mut tape = Tape::new();
    let xid = tape.leaf(&x).unwrap();
    let sq = tape.mul(xid, xid).unwrap();
    let loss = tape.sum_all(sq).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 4.0]);
}

#[test]
fn untouched_leaf_gets_a_zero_gradient() {
    let x = Tensor::new(&[2], vec![1.0, 2.0], true).unwrap();
    let y = Tensor::new(&[2], vec![5.0, 6.0], true).unwrap();
    let mut tape = Tape::new();
    let xid = tape.leaf(&x).unwrap();
    let _yid = tape.leaf(&y).unwrap();
    let loss = tape.sum_all(xid).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(y.grad().unwrap(), vec![0.0, 0.0]);
}

#[test]
fn repeated_backward_accumulates() {
    let x = Tensor::new(&[2], vec![1.0, 2.0], true).unwrap();
    let mut tape = Tape::new();
    let xid = tape.leaf(&x).unwrap();
    let loss = tape.sum_all(xid).unwrap();
    tape.backward(loss).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
}

#[test]
fn shared_subexpression_gradients_sum() {
    // loss = sum(x + x) => d/dx = 2
    let x = Tensor::new(&[3], vec![1.0, -1.0, 0.5], true).unwrap();
    let mut tape = Tape::new();
    let xid = tape.leaf(&x).unwrap();
    let two_x = tape.add(xid, xid).unwrap();
    let loss = tape.sum_all(two_x).unwrap();
    tape.backward(loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 2.0, 2.0]);
}

#[test]
fn cross_entropy_grad_at_uniform_logits() {
    // Two classes, equal logits, label 0: grad is [-0.5, 0.5] / temp.
    for temp in [1.0, 2.0] {
        let x = Tensor::new(&[1, 2], vec![0.3, 0.3], true).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(&x).unwrap();
        let loss = tape.cross_entropy(xid, &[0], temp).unwrap();
        tape.backward(loss).unwrap();
        let g = x.grad().unwrap();
        assert_close(g[0], -0.5 / temp, 1e-12);
        assert_close(g[1], 0.5 / temp, 1e-12);
    }
}

// ── finite differences over every primitive ─────────────────────────────

#[test]
fn grad_check_is_tiny_for_quadratics_and_linears() {
    let x = Tensor::new(&[3], vec![1.0, 2.0, 3.0], true).unwrap();
    let err = grad_check(
        |tape, xid| {
            let sq = tape.mul(xid, xid)?;
            tape.sum_all(sq)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "quadratic: {}", err);

    let err = grad_check(|tape, xid| tape.sum_all(xid), &x, 1e-4).unwrap();
    assert!(err < 1e-10, "linear: {}", err);
}

#[test]
fn grad_check_covers_every_primitive() {
    type Builder = fn(&mut Tape, NodeId) -> crate::error::Result<NodeId>;
    // Each case: probe shape and a graph exercising exactly one primitive
    // (plus the scalar head needed to reduce to a loss).
    let cases: Vec<(&str, Vec<usize>, Builder)> = vec![
        ("matmul", vec![2, 3], |t, x| {
            let b = t.constant(3, 2, vec![0.3, -0.7, 1.1, 0.2, -0.4, 0.9])?;
            let y = t.matmul(x, b)?;
            t.sum_all(y)
        }),
        ("matmul_rhs", vec![3, 2], |t, x| {
            let a = t.constant(2, 3, vec![0.5, 1.5, -0.5, 0.7, -1.2, 0.1])?;
            let y = t.matmul(a, x)?;
            t.sum_all(y)
        }),
        ("matmul_nt", vec![2, 3], |t, x| {
            let b = t.constant(4, 3, (0..12).map(|i| 0.1 * i as f64 - 0.5).collect())?;
            let y = t.matmul_nt(x, b)?;
            t.sum_all(y)
        }),
        ("matmul_nt_rhs", vec![4, 3], |t, x| {
            let a = t.constant(2, 3, vec![0.5, 1.5, -0.5, 0.7, -1.2, 0.1])?;
            let y = t.matmul_nt(a, x)?;
            t.sum_all(y)
        }),
        ("transpose", vec![2, 3], |t, x| {
            let y = t.transpose(x)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("add", vec![2, 2], |t, x| {
            let b = t.constant(2, 2, vec![0.1, 0.2, 0.3, 0.4])?;
            let y = t.add(x, b)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("add_row_broadcast", vec![1, 3], |t, x| {
            let a = t.constant(2, 3, vec![0.5, 1.5, -0.5, 0.7, -1.2, 0.1])?;
            let y = t.add(a, x)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("mul", vec![2, 2], |t, x| {
            let b = t.constant(2, 2, vec![0.9, -0.8, 0.7, -0.6])?;
            let y = t.mul(x, b)?;
            t.sum_all(y)
        }),
        ("mul_scalar", vec![1, 1], |t, x| {
            let a = t.constant(2, 2, vec![0.9, -0.8, 0.7, -0.6])?;
            let y = t.mul(a, x)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("neg", vec![2, 2], |t, x| {
            let y = t.neg(x)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("exp", vec![2, 2], |t, x| {
            let y = t.exp(x)?;
            t.sum_all(y)
        }),
        ("gelu", vec![2, 3], |t, x| {
            let y = t.gelu(x)?;
            t.sum_all(y)
        }),
        ("layer_norm", vec![2, 4], |t, x| {
            let g = t.constant(1, 4, vec![1.1, 0.9, 1.2, 0.8])?;
            let b = t.constant(1, 4, vec![0.1, -0.1, 0.2, 0.0])?;
            let y = t.layer_norm(x, g, b)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("layer_norm_gain", vec![1, 4], |t, x| {
            let a = t.constant(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 2.0, 7.0])?;
            let b = t.constant(1, 4, vec![0.1, -0.1, 0.2, 0.0])?;
            let y = t.layer_norm(a, x, b)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("layer_norm_bias", vec![1, 4], |t, x| {
            let a = t.constant(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 2.0, 7.0])?;
            let g = t.constant(1, 4, vec![1.1, 0.9, 1.2, 0.8])?;
            let y = t.layer_norm(a, g, x)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("softmax_rows", vec![2, 4], |t, x| {
            let y = t.softmax_rows(x, 0.7)?;
            let w = t.constant(2, 4, (0..8).map(|i| (i as f64).sin()).collect())?;
            let p = t.mul(y, w)?;
            t.sum_all(p)
        }),
        ("softmax_rows_masked", vec![2, 4], |t, x| {
            let mask = vec![true, false, true, true, true, true, false, false];
            let y = t.softmax_rows_masked(x, 1.3, mask)?;
            let w = t.constant(2, 4, (0..8).map(|i| (i as f64).cos()).collect())?;
            let p = t.mul(y, w)?;
            t.sum_all(p)
        }),
        ("embedding", vec![4, 3], |t, x| {
            let e = t.embedding(x, &[1, 3, 1, 0])?;
            let sq = t.mul(e, e)?;
            t.sum_all(sq)
        }),
        ("concat_rows", vec![2, 3], |t, x| {
            let b = t.constant(1, 3, vec![0.4, -0.2, 0.6])?;
            let y = t.concat_rows(&[x, b])?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("concat_cols", vec![2, 2], |t, x| {
            let b = t.constant(2, 3, vec![0.5, 1.5, -0.5, 0.7, -1.2, 0.1])?;
            let y = t.concat_cols(&[x, b])?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("slice_rows", vec![3, 2], |t, x| {
            let y = t.slice_rows(x, 1, 3)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("slice_cols", vec![2, 4], |t, x| {
            let y = t.slice_cols(x, 1, 3)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("mean_rows", vec![3, 2], |t, x| {
            let y = t.mean_rows(x)?;
            let sq = t.mul(y, y)?;
            t.sum_all(sq)
        }),
        ("l2_normalize_rows", vec![2, 3], |t, x| {
            let y = t.l2_normalize_rows(x)?;
            let w = t.constant(2, 3, vec![0.2, 0.9, -0.3, 1.0, -0.7, 0.5])?;
            let p = t.mul(y, w)?;
            t.sum_all(p)
        }),
        ("cross_entropy", vec![3, 4], |t, x| t.cross_entropy(x, &[2, 0, 3], 0.8)),
        ("sum_all", vec![2, 3], |t, x| {
            let sq = t.mul(x, x)?;
            t.sum_all(sq)
        }),
    ];

    for (name, shape, builder) in cases {
        for seed in 0..3u64 {
            let x = random_tensor(&shape, seed.wrapping_add(1000));
            let err = grad_check(builder, &x, 1e-5).unwrap();
            assert!(err < 1e-4, "{} (seed {}): rel error {}", name, seed, err);
        }
    }
}

// ── errors ──────────────────────────────────────────────────────────────

#[test]
fn backward_rejects_non_scalar_loss() {
    let x = Tensor::new(&[2, 2], vec![1.0; 4], true).unwrap();
    let mut tape = Tape::new();
    let xid = tape.leaf(&x).unwrap();
    assert!(tape.backward(xid).is_err());
}

#[test]
fn shape_errors_name_the_op_and_extents() {
    let mut tape = Tape::new();
    let a = tape.constant(2, 3, vec![0.0; 6]).unwrap();
    let b = tape.constant(2, 3, vec![0.0; 6]).unwrap();
    let err = tape.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("matmul"), "{}", err);
    assert!(err.contains("2x3"), "{}", err);
}

#[test]
fn softmax_rejects_non_positive_temperature() {
    let mut tape = Tape::new();
    let x = tape.constant(1, 2, vec![0.0, 0.0]).unwrap();
    assert!(tape.softmax_rows(x, 0.0).is_err());
    assert!(tape.softmax_rows(x, -1.0).is_err());
}

#[test]
fn l2_normalize_rejects_zero_rows() {
    let mut tape = Tape::new();
    let x = tape.constant(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
    let err = tape.l2_normalize_rows(x).unwrap_err().to_string();
    assert!(err.contains("row 1"), "{}", err);
}

#[test]
fn embedding_rejects_out_of_range_ids() {
    let mut tape = Tape::new();
    let table = tape.constant(3, 2, vec![0.0; 6]).unwrap();
    assert!(tape.embedding(table, &[3]).is_err());
    assert!(tape.embedding(table, &[]).is_err());
}

#[test]
fn slices_reject_bad_ranges() {
    let mut tape = Tape::new();
    let x = tape.constant(2, 3, vec![0.0; 6]).unwrap();
    assert!(tape.slice_rows(x, 0, 3).is_err());
    assert!(tape.slice_cols(x, 2, 2).is_err());
}

#[test]
fn grad_check_rejects_bad_eps() {
    let x = Tensor::new(&[1], vec![1.0], true).unwrap();
    assert!(grad_check(|t, xid| t.sum_all(xid), &x, 0.0).is_err());
    assert!(grad_check(|t, xid| t.sum_all(xid), &x, 0.5).is_err());
}

// ── properties ──────────────────────────────────────────────────────────

proptest! {
    #[test]
    fn softmax_rows_always_sum_to_one(
        rows in 1usize..4,
        cols in 1usize..6,
        temp in 0.05f64..10.0,
        seed in 0u64..500,
    ) {
        let mut rng = rng_for(seed, 98, 0);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let mut tape = Tape::new();
        let x = tape.constant(rows, cols, data).unwrap();
        let y = tape.softmax_rows(x, temp).unwrap();
        for row in tape.value(y).chunks(cols) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| p >= 0.0 && p <= 1.0));
        }
    }

    #[test]
    fn l2_normalized_rows_have_unit_norm(
        rows in 1usize..4,
        cols in 1usize..6,
        seed in 0u64..500,
    ) {
        let mut rng = rng_for(seed, 97, 0);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(0.1..5.0)).collect();
        let mut tape = Tape::new();
        let x = tape.constant(rows, cols, data).unwrap();
        let y = tape.l2_normalize_rows(x).unwrap();
        for row in tape.value(y).chunks(cols) {
            let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }
}
