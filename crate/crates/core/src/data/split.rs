//! Vertical (feature-wise) split into a labeled source view and an unlabeled
//! target view that share a small set of co-occurring samples.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::EncodedDataset;
use crate::rng;
use crate::{Error, Result};

/// Seeded feature order shared by the split and the synthetic generator:
/// party A takes the first `⌈d/2⌉` entries, party B the rest.
pub fn feature_permutation(d: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut rng::rng_for(seed, "feature-split"));
    perm
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub features_a: Vec<usize>,
    pub features_b: Vec<usize>,
    /// Dataset row of each party-A sample, in party-A order.
    pub samples_a: Vec<usize>,
    /// Dataset row of each party-B sample, in party-B order.
    pub samples_b: Vec<usize>,
    /// `(position in samples_a, position in samples_b)` for each shared sample.
    pub overlap: Vec<(usize, usize)>,
    pub seed: u64,
}

pub fn overlap_count(n_labeled: usize, n_unlabeled: usize, overlap_frac: f64) -> usize {
    (overlap_frac * n_labeled.min(n_unlabeled) as f64).round() as usize
}

pub fn vertical_split(
    ds: &EncodedDataset,
    n_labeled: usize,
    n_unlabeled: usize,
    overlap_frac: f64,
    seed: u64,
) -> Result<SplitPlan> {
    let d = ds.x.cols();
    let n = ds.x.rows();
    if d < 2 {
        return Err(Error::Split(format!("need at least 2 features, have {d}")));
    }
    if !(0.0..=1.0).contains(&overlap_frac) {
        return Err(Error::Split(format!(
            "overlap fraction {overlap_frac} outside [0, 1]"
        )));
    }
    if n_labeled == 0 || n_unlabeled == 0 {
        return Err(Error::Split("both parties need at least one sample".into()));
    }
    let overlap = overlap_count(n_labeled, n_unlabeled, overlap_frac);
    let needed = n_labeled + n_unlabeled - overlap;
    if needed > n {
        return Err(Error::Split(format!(
            "{n_labeled} labeled + {n_unlabeled} unlabeled − {overlap} shared = {needed} \
             samples, dataset has {n}"
        )));
    }

    let perm = feature_permutation(d, seed);
    let half = d.div_ceil(2);
    let mut features_a = perm[..half].to_vec();
    let mut features_b = perm[half..].to_vec();
    features_a.sort_unstable();
    features_b.sort_unstable();

    let mut rng = rng::rng_for(seed, "sample-split");
    let drawn = index::sample(&mut rng, n, needed).into_vec();
    let (shared, rest) = drawn.split_at(overlap);
    let (only_a, only_b) = rest.split_at(n_labeled - overlap);

    let mut samples_a: Vec<usize> = shared.iter().chain(only_a).copied().collect();
    let mut samples_b: Vec<usize> = shared.iter().chain(only_b).copied().collect();
    samples_a.shuffle(&mut rng);
    samples_b.shuffle(&mut rng);

    let position = |list: &[usize]| {
        let mut pos = std::collections::HashMap::with_capacity(list.len());
        for (i, &row) in list.iter().enumerate() {
            pos.insert(row, i);
        }
        pos
    };
    let pos_a = position(&samples_a);
    let pos_b = position(&samples_b);
    let overlap = shared.iter().map(|row| (pos_a[row], pos_b[row])).collect();

    Ok(SplitPlan {
        features_a,
        features_b,
        samples_a,
        samples_b,
        overlap,
        seed,
    })
}

/// Target-side labels, kept away from party B for scoring only.
#[derive(Debug, Clone, PartialEq)]
pub struct SealedLabels {
    labels: Vec<i8>,
    eval_rows: Vec<usize>,
}

impl SealedLabels {
    /// Label of every party-B sample, in party-B order.
    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    /// Party-B rows whose labels never entered training (the non-shared ones).
    pub fn eval_rows(&self) -> &[usize] {
        &self.eval_rows
    }

    pub fn eval_labels(&self) -> Vec<i8> {
        self.eval_rows.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Both parties' datasets as laid out by a [`SplitPlan`].
#[derive(Debug, Clone)]
pub struct PartyViews {
    pub a: EncodedDataset,
    pub overlap_a: Vec<usize>,
    pub b: EncodedDataset,
    pub overlap_b: Vec<usize>,
    pub sealed: SealedLabels,
}

impl SplitPlan {
    pub fn materialize(&self, ds: &EncodedDataset) -> Result<PartyViews> {
        let labels =
            ds.y.as_ref()
                .ok_or_else(|| Error::Split("source data must be labeled".into()))?;
        let a = ds.subset(&self.samples_a, &self.features_a)?;
        let mut b = ds.subset(&self.samples_b, &self.features_b)?;
        b.y = None;
        let b_labels: Vec<i8> = self.samples_b.iter().map(|&r| labels[r]).collect();
        let shared: std::collections::HashSet<usize> =
            self.overlap.iter().map(|&(_, j)| j).collect();
        let eval_rows = (0..self.samples_b.len())
            .filter(|j| !shared.contains(j))
            .collect();
        Ok(PartyViews {
            a,
            overlap_a: self.overlap.iter().map(|&(i, _)| i).collect(),
            b,
            overlap_b: self.overlap.iter().map(|&(_, j)| j).collect(),
            sealed: SealedLabels {
                labels: b_labels,
                eval_rows,
            },
        })
    }
}
