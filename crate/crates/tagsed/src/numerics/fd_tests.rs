//! Finite-difference spot checks for the structured ops; the exhaustive
//! per-op sweep lives in the acceptance suite.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::ConvSpec;
use super::gradcheck::check_gradients;
use super::tensor::{Real, Tensor};

const TOL: Real = 1e-4;
const H: Real = 1e-5;

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

#[test]
fn conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = randn(&mut rng, &[2, 5, 6]);
    let k = randn(&mut rng, &[3, 2, 3, 3]);
    let w = randn(&mut rng, &[3, 5, 6]);
    let err = check_gradients(
        &[x, k, w],
        |tape, ids| {
            let y = tape.conv2d(ids[0], ids[1], ConvSpec::unit_pad((1, 1)));
            let weighted = tape.mul(y, ids[2]);
            tape.sum_all(weighted)
        },
        H,
    );
    assert!(err < TOL, "conv2d max rel err {err}");
}

#[test]
fn strided_conv2d_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = randn(&mut rng, &[1, 7, 8]);
    let k = randn(&mut rng, &[2, 1, 3, 3]);
    let err = check_gradients(
        &[x, k],
        |tape, ids| {
            let y = tape.conv2d(
                ids[0],
                ids[1],
                ConvSpec {
                    stride: (2, 2),
                    padding: (0, 1),
                },
            );
            let sq = tape.mul(y, y);
            tape.sum_all(sq)
        },
        H,
    );
    assert!(err < TOL, "strided conv2d max rel err {err}");
}

#[test]
fn avg_pool_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = randn(&mut rng, &[2, 5, 6]);
    let err = check_gradients(
        &[x],
        |tape, ids| {
            let y = tape.avg_pool2d(ids[0], (2, 3));
            let sq = tape.mul(y, y);
            tape.sum_all(sq)
        },
        H,
    );
    assert!(err < TOL, "avg_pool2d max rel err {err}");
}

#[test]
fn gru_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = randn(&mut rng, &[5, 8]);
    let wi = randn(&mut rng, &[12, 8]);
    let wh = randn(&mut rng, &[12, 4]);
    let bi = randn(&mut rng, &[12]);
    let bh = randn(&mut rng, &[12]);
    let w = randn(&mut rng, &[5, 4]);
    let err = check_gradients(
        &[x, wi, wh, bi, bh, w],
        |tape, ids| {
            let y = tape.gru(ids[0], ids[1], ids[2], ids[3], ids[4]);
            let weighted = tape.mul(y, ids[5]);
            tape.sum_all(weighted)
        },
        H,
    );
    assert!(err < TOL, "gru max rel err {err}");
}

#[test]
fn bigru_output_shape_and_gradients() {
    // concat of a forward pass and a time-reversed pass: [T,D] -> [T,2H]
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = randn(&mut rng, &[5, 8]);
    let mut params = vec![x];
    for _ in 0..2 {
        params.push(randn(&mut rng, &[12, 8]));
        params.push(randn(&mut rng, &[12, 4]));
        params.push(randn(&mut rng, &[12]));
        params.push(randn(&mut rng, &[12]));
    }
    let err = check_gradients(
        &params,
        |tape, ids| {
            let fwd = tape.gru(ids[0], ids[1], ids[2], ids[3], ids[4]);
            let rev = tape.reverse_rows(ids[0]);
            let bwd = tape.gru(rev, ids[5], ids[6], ids[7], ids[8]);
            let bwd = tape.reverse_rows(bwd);
            let y = tape.concat_cols(fwd, bwd);
            assert_eq!(tape.value(y).shape(), &[5, 8]);
            let sq = tape.mul(y, y);
            tape.sum_all(sq)
        },
        H,
    );
    assert!(err < TOL, "bigru max rel err {err}");
}

#[test]
fn batch_norm_train_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = randn(&mut rng, &[3, 4, 5]);
    let gamma = randn(&mut rng, &[3]);
    let beta = randn(&mut rng, &[3]);
    let err = check_gradients(
        &[x, gamma, beta],
        |tape, ids| {
            let (y, _) = tape.batch_norm_train(ids[0], ids[1], ids[2], 1e-5);
            let sq = tape.mul(y, y);
            tape.mean_all(sq)
        },
        H,
    );
    assert!(err < TOL, "batch_norm_train max rel err {err}");
}

#[test]
fn batch_norm_eval_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = randn(&mut rng, &[2, 3, 4]);
    let gamma = randn(&mut rng, &[2]);
    let beta = randn(&mut rng, &[2]);
    let err = check_gradients(
        &[x, gamma, beta],
        |tape, ids| {
            let y = tape.batch_norm_eval(ids[0], ids[1], ids[2], &[0.2, -0.1], &[1.3, 0.6], 1e-5);
            let sq = tape.mul(y, y);
            tape.mean_all(sq)
        },
        H,
    );
    assert!(err < TOL, "batch_norm_eval max rel err {err}");
}

#[test]
fn softmax_and_reduction_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let x = randn(&mut rng, &[4, 3]);
    let w = randn(&mut rng, &[4, 3]);
    let err = check_gradients(
        &[x.clone(), w.clone()],
        |tape, ids| {
            let s = tape.softmax_cols(ids[0]);
            let weighted = tape.mul(s, ids[1]);
            tape.sum_all(weighted)
        },
        H,
    );
    assert!(err < TOL, "softmax_cols max rel err {err}");

    let err = check_gradients(
        &[x.clone(), w.clone()],
        |tape, ids| {
            let s = tape.softmax_rows(ids[0], 3.0);
            let weighted = tape.mul(s, ids[1]);
            tape.sum_all(weighted)
        },
        H,
    );
    assert!(err < TOL, "softmax_rows max rel err {err}");

    let err = check_gradients(
        &[x, w],
        |tape, ids| {
            let s = tape.sum_rows(ids[0]);
            let m = tape.sum_all(s);
            let e = tape.mean_all(ids[1]);
            tape.mul(m, e)
        },
        H,
    );
    assert!(err < TOL, "sum_rows/mean_all max rel err {err}");
}

#[test]
fn spatial_mean_and_bias_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let x = randn(&mut rng, &[3, 4, 5]);
    let b = randn(&mut rng, &[3]);
    let w = randn(&mut rng, &[4]);
    let err = check_gradients(
        &[x.clone(), b, w],
        |tape, ids| {
            let biased = tape.bias_chan(ids[0], ids[1]);
            let d = tape.mean_chan_time(biased);
            let weighted = tape.mul(d, ids[2]);
            tape.sum_all(weighted)
        },
        H,
    );
    assert!(err < TOL, "bias_chan/mean_chan_time max rel err {err}");

    let w2 = randn(&mut rng, &[3, 5]);
    let err = check_gradients(
        &[x, w2],
        |tape, ids| {
            let m = tape.freq_mean(ids[0]);
            let weighted = tape.mul(m, ids[1]);
            tape.sum_all(weighted)
        },
        H,
    );
    assert!(err < TOL, "freq_mean max rel err {err}");
}

#[test]
fn elementwise_chain_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let p = Tensor::from_fn(&[6], |_| rng.random_range(0.05..0.95));
    let q = Tensor::from_fn(&[6], |_| rng.random_range(0.05..0.95));
    let err = check_gradients(
        &[p, q],
        |tape, ids| {
            let c = tape.clamp(ids[0], 1e-7, 1.0 - 1e-7);
            let l = tape.ln(c);
            let pw = tape.powf(ids[1], 0.625);
            let prod = tape.mul(l, pw);
            let e = tape.exp(prod);
            let quo = tape.div(e, ids[1]);
            let t = tape.tanh(quo);
            let lr = tape.leaky_relu(t, 0.01);
            let a = tape.affine(lr, -2.5, 0.75);
            tape.mean_all(a)
        },
        H,
    );
    assert!(err < TOL, "elementwise chain max rel err {err}");
}

#[test]
fn matmul_transpose_concat_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = randn(&mut rng, &[3, 4]);
    let b = randn(&mut rng, &[4, 2]);
    let c = randn(&mut rng, &[3, 2]);
    let err = check_gradients(
        &[a, b, c],
        |tape, ids| {
            let prod = tape.matmul(ids[0], ids[1]);
            let cat = tape.concat_cols(prod, ids[2]);
            let t = tape.transpose(cat);
            let sq = tape.mul(t, t);
            tape.sum_all(sq)
        },
        H,
    );
    assert!(err < TOL, "matmul/concat/transpose max rel err {err}");
}
