//! Seeded two-class generator standing in for real traffic datasets.
//!
//! Every feature carries the class signal `y·s_f·sep/2` (random sign `s_f`)
//! on top of unit Gaussian noise. The features that [`feature_permutation`]
//! assigns to party B additionally carry a shared nuisance factor: each
//! sample draws `u ~ N(0, σ_B²)` and adds `u·v_f`, with `v` a fixed random
//! unit vector over B's features. The nuisance dominates B's variance, so
//! clustering B's view alone splits along it rather than along the class,
//! while a projection learned from a few labeled samples can remove it.
//!
//! Columns are min-max scaled to `[0, 1]` at the end.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::split::feature_permutation;
use super::EncodedDataset;
use crate::nn::Matrix;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    /// Per-feature distance between class means, in units of the noise σ.
    pub sep: f64,
    /// Scale of the nuisance factor on party B's features.
    pub sigma_b: f64,
}

/// A synthetic dataset plus the party sizes to split it into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPreset {
    pub name: &'static str,
    pub spec: SyntheticSpec,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub overlap_frac: f64,
}

pub const PRESETS: &[SyntheticPreset] = &[
    SyntheticPreset {
        name: "weak-target",
        spec: SyntheticSpec {
            n: 2000,
            d: 20,
            sep: 1.5,
            sigma_b: 6.0,
        },
        n_labeled: 1100,
        n_unlabeled: 1000,
        overlap_frac: 0.1,
    },
    SyntheticPreset {
        name: "easy",
        spec: SyntheticSpec {
            n: 2000,
            d: 20,
            sep: 2.0,
            sigma_b: 0.0,
        },
        n_labeled: 1100,
        n_unlabeled: 1000,
        overlap_frac: 0.1,
    },
    SyntheticPreset {
        name: "no-signal",
        spec: SyntheticSpec {
            n: 2000,
            d: 20,
            sep: 0.0,
            sigma_b: 0.0,
        },
        n_labeled: 1100,
        n_unlabeled: 1000,
        overlap_frac: 0.1,
    },
];

pub fn preset(name: &str) -> Result<SyntheticPreset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .copied()
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            Error::Config(format!(
                "unknown synthetic preset `{name}` (known: {})",
                known.join(", ")
            ))
        })
}

pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<EncodedDataset> {
    let SyntheticSpec { n, d, sep, sigma_b } = *spec;
    if n < 4 || d < 2 {
        return Err(Error::Config(format!(
            "synthetic data needs n >= 4 and d >= 2, got n = {n}, d = {d}"
        )));
    }
    if !(sep >= 0.0 && sep.is_finite() && sigma_b >= 0.0 && sigma_b.is_finite()) {
        return Err(Error::Config(format!(
            "separation and σ_B must be finite and non-negative, got {sep} and {sigma_b}"
        )));
    }
    let mut rng = rng::rng_for(seed, "synthetic");

    let mut labels: Vec<i8> = (0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect();
    labels.shuffle(&mut rng);
    let signs: Vec<f64> = (0..d)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();

    let perm = feature_permutation(d, seed);
    let b_features = &perm[d.div_ceil(2)..];
    let mut direction: Vec<f64> = b_features
        .iter()
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let mut x = Matrix::zeros(n, d);
    for (i, &y) in labels.iter().enumerate() {
        let row = x.row_mut(i);
        for (f, v) in row.iter_mut().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            *v = f64::from(y) * signs[f] * sep / 2.0 + noise;
        }
        let u: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_b;
        for (&f, dir) in b_features.iter().zip(&direction) {
            row[f] += u * dir;
        }
    }
    min_max_in_place(&mut x);

    let mut ds = EncodedDataset::new("synthetic", x, Some(labels))?;
    ds.feature_names = (0..d).map(|f| format!("f{f}")).collect();
    Ok(ds)
}

fn min_max_in_place(x: &mut Matrix) {
    for c in 0..x.cols() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in 0..x.rows() {
            lo = lo.min(x.get(r, c));
            hi = hi.max(x.get(r, c));
        }
        let span = hi - lo;
        for r in 0..x.rows() {
            let v = if span > 0.0 {
                (x.get(r, c) - lo) / span
            } else {
                0.0
            };
            x.set(r, c, v);
        }
    }
}
