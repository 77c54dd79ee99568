//! Loss terms of the joint objective and the prototype scoring rule.
//!
//! ```text
//! J = J_pred + γ·J_align + (λ/2)·(R_A + R_B)
//! ```
//!
//! `J_pred` is the logistic loss of B's overlap latents scored against the
//! source prototype with A's labels, `J_align` pulls the two parties' latents
//! of the same sample together, and `R_*` are squared weight norms.

use serde::{Deserialize, Serialize};

use crate::nn::{dot, Matrix, MlpModel};
use crate::{Error, Result};

/// Above this margin `ln(1 + e^m)` is evaluated as `m + ln(1 + e^-m)`.
const LOGISTIC_OVERFLOW_MARGIN: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentKind {
    /// `Σ ‖z_A − z_B‖²`
    #[default]
    SquaredDistance,
    /// `Σ −z_A · z_B`
    NegativeInnerProduct,
}

impl std::str::FromStr for AlignmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_distance" | "squared-distance" => Ok(AlignmentKind::SquaredDistance),
            "negative_inner_product" | "negative-inner-product" => {
                Ok(AlignmentKind::NegativeInnerProduct)
            }
            other => Err(Error::Config(format!("unknown alignment kind `{other}`"))),
        }
    }
}

/// Components of one evaluation of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub j_b: f64,
    pub j_ab: f64,
    pub j_a_reg: f64,
    pub j_b_reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// True when `total` is exactly what [`total_loss`] gives for the parts.
    pub fn is_consistent(&self, gamma: f64, lambda: f64) -> bool {
        let again = total_loss(
            self.j_b,
            self.j_ab,
            self.j_a_reg,
            self.j_b_reg,
            gamma,
            lambda,
        );
        again.total.to_bits() == self.total.to_bits()
    }
}

pub fn check_label(y: f64) -> Result<()> {
    if y == 1.0 || y == -1.0 {
        Ok(())
    } else {
        Err(Error::Label(y))
    }
}

/// `ln(1 + exp(−score·label))` and its derivative with respect to `score`.
pub fn logistic_loss(score: f64, label: f64) -> Result<(f64, f64)> {
    check_label(label)?;
    let margin = -score * label;
    let loss = if margin > LOGISTIC_OVERFLOW_MARGIN {
        margin + (-margin).exp().ln_1p()
    } else {
        margin.exp().ln_1p()
    };
    // σ(margin), evaluated on the side that cannot overflow.
    let sigma = if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    };
    Ok((loss, -label * sigma))
}

/// Label-weighted mean of the source latents, `φ = (1/n) Σ y_i z_i`.
pub fn compute_prototype(z: &Matrix, labels: &[i8]) -> Result<Vec<f64>> {
    if labels.len() != z.rows() {
        return Err(Error::Alignment(format!(
            "{} labels for {} latent rows",
            labels.len(),
            z.rows()
        )));
    }
    if z.rows() == 0 {
        return Err(Error::InsufficientData(
            "prototype needs at least one labeled latent".into(),
        ));
    }
    let mut phi = vec![0.0; z.cols()];
    for (row, &y) in z.iter_rows().zip(labels) {
        let y = f64::from(y);
        check_label(y)?;
        for (p, v) in phi.iter_mut().zip(row) {
            *p += y * v;
        }
    }
    let n = z.rows() as f64;
    phi.iter_mut().for_each(|p| *p /= n);
    Ok(phi)
}

/// `score_j = φ · z_j` for every row.
pub fn prediction_score(prototype: &[f64], z: &Matrix) -> Result<Vec<f64>> {
    if prototype.len() != z.cols() {
        return Err(Error::Dimension(format!(
            "prototype has length {} but latents have {} columns",
            prototype.len(),
            z.cols()
        )));
    }
    Ok(z.iter_rows().map(|row| dot(prototype, row)).collect())
}

/// Score ≥ 0 is the attack class.
pub fn classify(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

/// Summed logistic loss over the overlap and its gradient per score.
pub fn prediction_loss(labels: &[i8], scores: &[f64]) -> Result<(f64, Vec<f64>)> {
    if labels.len() != scores.len() {
        return Err(Error::Alignment(format!(
            "{} labels for {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(scores.len());
    for (&y, &s) in labels.iter().zip(scores) {
        let (l, g) = logistic_loss(s, f64::from(y))?;
        total += l;
        grad.push(g);
    }
    Ok((total, grad))
}

/// Alignment penalty between paired latents and its gradient for each side.
pub fn alignment_loss(
    z_a: &Matrix,
    z_b: &Matrix,
    kind: AlignmentKind,
) -> Result<(f64, Matrix, Matrix)> {
    if z_a.shape() != z_b.shape() {
        return Err(Error::Alignment(format!(
            "paired latents have shapes {:?} and {:?}",
            z_a.shape(),
            z_b.shape()
        )));
    }
    let (rows, cols) = z_a.shape();
    let mut grad_a = Matrix::zeros(rows, cols);
    let mut grad_b = Matrix::zeros(rows, cols);
    let mut total = 0.0;
    match kind {
        AlignmentKind::SquaredDistance => {
            for (i, (a, b)) in z_a.data().iter().zip(z_b.data()).enumerate() {
                let diff = a - b;
                total += diff * diff;
                grad_a.data_mut()[i] = 2.0 * diff;
                grad_b.data_mut()[i] = -2.0 * diff;
            }
        }
        AlignmentKind::NegativeInnerProduct => {
            for (i, (a, b)) in z_a.data().iter().zip(z_b.data()).enumerate() {
                total -= a * b;
                grad_a.data_mut()[i] = -b;
                grad_b.data_mut()[i] = -a;
            }
        }
    }
    Ok((total, grad_a, grad_b))
}

/// Sum of squared Frobenius norms of all weight matrices.
pub fn regularization(model: &MlpModel) -> f64 {
    model.weight_norm_sq()
}

pub fn total_loss(
    j_b: f64,
    j_ab: f64,
    j_a_reg: f64,
    j_b_reg: f64,
    gamma: f64,
    lambda: f64,
) -> LossBreakdown {
    LossBreakdown {
        j_b,
        j_ab,
        j_a_reg,
        j_b_reg,
        total: j_b + gamma * j_ab + (lambda / 2.0) * (j_a_reg + j_b_reg),
    }
}
