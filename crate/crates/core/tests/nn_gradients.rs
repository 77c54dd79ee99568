mod common;

use common::{numeric_gradient, random_matrix, rel_err};
use fedxfer::nn::matmul;
use fedxfer::rng::rng_for;
use fedxfer::udl::{AeConfig, Autoencoder};
use fedxfer::{Activation, Matrix, MlpModel};
use rand::Rng;

fn weighted_output(model: &MlpModel, x: &Matrix, upstream: &Matrix) -> f64 {
    let z = model.predict(x).unwrap();
    z.data()
        .iter()
        .zip(upstream.data())
        .map(|(a, b)| a * b)
        .sum()
}

#[test]
fn backward_matches_central_differences() {
    let mut rng = rng_for(11, "nn-fd");
    let acts = [Activation::Tanh, Activation::Relu, Activation::Identity];
    for case in 0..30 {
        let depth = rng.random_range(1..=3);
        let dims: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=6)).collect();
        let act = acts[case % acts.len()];
        let mut model = MlpModel::init(&dims, act, case as u64).unwrap();
        // Non-zero biases so every parameter is exercised.
        let mut p = model.flat_params();
        p.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        model.set_flat_params(&p).unwrap();

        let n = rng.random_range(1..=5);
        let x = random_matrix(&mut rng, n, dims[0], 1.0);
        let upstream = random_matrix(&mut rng, n, dims[depth], 1.0);

        let (_, cache) = model.forward(&x).unwrap();
        let (grads, dx) = model.backward_with_input(&cache, &upstream).unwrap();
        let analytic = grads.flatten();

        let mut probe = model.clone();
        let numeric = numeric_gradient(&p, |q| {
            probe.set_flat_params(q).unwrap();
            weighted_output(&probe, &x, &upstream)
        });
        for (i, (a, b)) in analytic.iter().zip(&numeric).enumerate() {
            assert!(
                rel_err(*a, *b, 1e-6) < 1e-4,
                "case {case} ({act:?}, dims {dims:?}) param {i}: analytic {a} numeric {b}"
            );
        }

        let dx_numeric = numeric_gradient(x.data(), |q| {
            let xq = Matrix::from_vec(n, dims[0], q.to_vec()).unwrap();
            weighted_output(&model, &xq, &upstream)
        });
        for (a, b) in dx.data().iter().zip(&dx_numeric) {
            assert!(
                rel_err(*a, *b, 1e-6) < 1e-4,
                "case {case} input grad {a} vs {b}"
            );
        }
    }
}

#[test]
fn gradients_sum_over_the_batch() {
    let model = MlpModel::init(&[3, 4, 2], Activation::Tanh, 5).unwrap();
    let mut rng = rng_for(5, "batch");
    let x = random_matrix(&mut rng, 4, 3, 1.0);
    let up = random_matrix(&mut rng, 4, 2, 1.0);
    let (_, cache) = model.forward(&x).unwrap();
    let whole = model.backward(&cache, &up).unwrap().flatten();
    let mut summed = vec![0.0; whole.len()];
    for r in 0..4 {
        let xr = x.select_rows(&[r]).unwrap();
        let ur = up.select_rows(&[r]).unwrap();
        let (_, c) = model.forward(&xr).unwrap();
        for (s, g) in summed
            .iter_mut()
            .zip(model.backward(&c, &ur).unwrap().flatten())
        {
            *s += g;
        }
    }
    for (a, b) in whole.iter().zip(&summed) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn forward_is_bit_deterministic() {
    let model = MlpModel::init(&[6, 5, 3], Activation::Tanh, 9).unwrap();
    let x = random_matrix(&mut rng_for(1, "x"), 7, 6, 1.0);
    let a = model.predict(&x).unwrap();
    let b = model.predict(&x).unwrap();
    assert_eq!(a.data(), b.data());
}

#[test]
fn single_linear_layer_is_an_affine_map() {
    let model = MlpModel::init(&[3, 2], Activation::Tanh, 4).unwrap();
    let x = random_matrix(&mut rng_for(2, "x"), 5, 3, 1.0);
    let z = model.predict(&x).unwrap();
    let mut expected = matmul(&x, &model.weights()[0]).unwrap();
    for r in 0..5 {
        for (v, b) in expected.row_mut(r).iter_mut().zip(&model.biases()[0]) {
            *v += b;
        }
    }
    for (a, b) in z.data().iter().zip(expected.data()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn autoencoder_gradient_matches_central_differences() {
    let mut rng = rng_for(21, "ae-fd");
    for case in 0..12 {
        let n = rng.random_range(2..=4);
        let m = rng.random_range(1..=2);
        let cfg = AeConfig {
            latent_dim: Some(m),
            hidden: rng.random_range(2..=4),
            ..AeConfig::default()
        };
        let ae = Autoencoder::init(n, &cfg, case).unwrap();
        let x = random_matrix(&mut rng, 3, n, 1.0);
        let (loss, ge, gd) = ae.loss_and_grads(&x).unwrap();
        assert!((loss - ae.reconstruction_error(&x).unwrap()).abs() < 1e-12);

        let enc_p = ae.encoder.flat_params();
        let mut probe = ae.clone();
        let num_e = numeric_gradient(&enc_p, |q| {
            probe.encoder.set_flat_params(q).unwrap();
            probe.reconstruction_error(&x).unwrap()
        });
        let dec_p = ae.decoder.flat_params();
        let mut probe = ae.clone();
        let num_d = numeric_gradient(&dec_p, |q| {
            probe.decoder.set_flat_params(q).unwrap();
            probe.reconstruction_error(&x).unwrap()
        });
        for (a, b) in ge
            .flatten()
            .iter()
            .zip(&num_e)
            .chain(gd.flatten().iter().zip(&num_d))
        {
            assert!(rel_err(*a, *b, 1e-6) < 1e-4, "case {case}: {a} vs {b}");
        }
    }
}
