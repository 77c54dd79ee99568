use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Samples scoring at or above this value are called positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    /// From `(0, 0)` at threshold `+∞` to `(1, 1)`, one point per distinct score.
    pub roc: Vec<RocPoint>,
}

/// Area under the ROC curve, by ranking with tied groups counted as ½.
///
/// Labels must be ±1 with both classes present.
pub fn roc_auc(scores: &[f64], labels: &[i8]) -> Result<AucResult> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(Error::Label(f64::from(bad)));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Evaluation("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Evaluation(
            "AUC needs at least one positive and one negative sample".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    // Walk from the highest score down; within a tie group every
    // positive/negative pair counts half.
    let mut doubled: u64 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut roc = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut start = 0;
    while start < order.len() {
        let s = scores[order[start]];
        let mut end = start;
        let (mut gp, mut gn) = (0u64, 0u64);
        while end < order.len() && scores[order[end]] == s {
            if labels[order[end]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            end += 1;
        }
        // Positives in this group beat every negative below it.
        doubled += 2 * gp * (n_neg - fp - gn) + gp * gn;
        tp += gp;
        fp += gn;
        roc.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
        start = end;
    }
    let auc = doubled as f64 / (2 * n_pos * n_neg) as f64;
    Ok(AucResult { auc, roc })
}

/// AUC when the sign of the score carries no meaning: `max(ξ, 1 − ξ)`.
pub fn orientation_free_auc(scores: &[f64], labels: &[i8]) -> Result<f64> {
    let auc = roc_auc(scores, labels)?.auc;
    Ok(auc.max(1.0 - auc))
}
