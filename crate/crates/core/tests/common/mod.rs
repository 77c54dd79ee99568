#![allow(dead_code)]

use fedxfer::data::EncodedDataset;
use fedxfer::ftl::{
    alignment_loss, compute_prototype, prediction_loss, prediction_score, regularization,
    total_loss, HyperParams,
};
use fedxfer::{Matrix, MlpModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-5;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<i8> {
    (0..n)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central differences of `f` at every coordinate of `params`.
pub fn numeric_gradient(params: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_EPS;
            let up = f(&p);
            p[i] = orig - FD_EPS;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * FD_EPS)
        })
        .collect()
}

/// The joint objective assembled directly from the loss primitives, with no
/// party state involved.
#[allow(clippy::too_many_arguments)]
pub fn joint_objective(
    model_a: &MlpModel,
    model_b: &MlpModel,
    xa: &Matrix,
    ya: &[i8],
    overlap_a: &[usize],
    xb: &Matrix,
    overlap_b: &[usize],
    hyper: &HyperParams,
) -> f64 {
    let za = model_a.predict(xa).unwrap();
    let phi = compute_prototype(&za, ya).unwrap();
    let za_ov = za.select_rows(overlap_a).unwrap();
    let zb_ov = model_b
        .predict(&xb.select_rows(overlap_b).unwrap())
        .unwrap();
    let y_ov: Vec<i8> = overlap_a.iter().map(|&i| ya[i]).collect();
    let scores = prediction_score(&phi, &zb_ov).unwrap();
    let (j_b, _) = prediction_loss(&y_ov, &scores).unwrap();
    let (j_ab, _, _) = alignment_loss(&za_ov, &zb_ov, hyper.alignment).unwrap();
    total_loss(
        j_b,
        j_ab,
        regularization(model_a),
        regularization(model_b),
        hyper.gamma,
        hyper.lambda,
    )
    .total
}

pub fn labeled(x: Matrix, y: Vec<i8>) -> EncodedDataset {
    EncodedDataset::new("test", x, Some(y)).unwrap()
}

pub fn unlabeled(x: Matrix) -> EncodedDataset {
    EncodedDataset::new("test", x, None).unwrap()
}
