//! Party-side state for one training iteration.
//!
//! Each party runs `begin_iteration` (forward pass, produces what the peer
//! needs), then `compute_gradients` once the peer's latents are in hand, then
//! `apply`. The forward cache is consumed by `compute_gradients`, so asking for
//! gradients twice, or before the exchange, is a protocol-order error.

use serde::{Deserialize, Serialize};

use super::loss::{
    alignment_loss, compute_prototype, prediction_loss, prediction_score, AlignmentKind,
};
use crate::data::EncodedDataset;
use crate::nn::{Activation, ForwardCache, Matrix, MlpModel, ParamGrads};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Step size on summed (not averaged) gradients, so the stable range
    /// shrinks as the overlap set grows.
    pub learning_rate: f64,
    /// Alignment weight γ.
    pub gamma: f64,
    /// Regularization weight λ.
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once `J_prev − J` falls to this or below.
    pub tolerance: f64,
    /// The stop test is skipped before this many iterations.
    pub warmup: usize,
    pub alignment: AlignmentKind,
    /// Also ship raw gradient frames each iteration. Receivers discard them.
    pub exchange_gradients: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 2e-4,
            gamma: 1.0,
            lambda: 0.001,
            max_iter: 200,
            tolerance: 1e-6,
            warmup: 10,
            alignment: AlignmentKind::SquaredDistance,
            exchange_gradients: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.max_iter < 1 {
            return bad("max_iter must be at least 1".into());
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return bad(format!("tolerance must be >= 0, got {}", self.tolerance));
        }
        if self.warmup >= self.max_iter {
            return bad(format!(
                "warmup ({}) must be below max_iter ({})",
                self.warmup, self.max_iter
            ));
        }
        Ok(())
    }
}

/// Architecture shared by both parties' feature extractors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSpec {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
}

impl Default for ExtractorSpec {
    fn default() -> Self {
        ExtractorSpec {
            hidden: vec![64],
            latent_dim: 32,
            activation: Activation::Tanh,
        }
    }
}

impl ExtractorSpec {
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.latent_dim);
        dims
    }

    pub fn init(&self, input_dim: usize, seed: u64) -> Result<MlpModel> {
        MlpModel::init(&self.layer_dims(input_dim), self.activation, seed)
    }
}

/// What A ships to B each iteration: overlap latents, their labels, and φ.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentShare {
    pub z: Matrix,
    pub labels: Vec<i8>,
    pub prototype: Vec<f64>,
}

/// One party's view of the loss terms it can compute locally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalLoss {
    pub j_b: f64,
    pub j_ab: f64,
    /// Squared weight norm of this party's own model.
    pub own_reg: f64,
}

fn check_overlap(overlap: &[usize], rows: usize, who: &str) -> Result<()> {
    if let Some(&bad) = overlap.iter().find(|&&i| i >= rows) {
        return Err(Error::Split(format!(
            "party {who} overlap index {bad} out of range for {rows} samples"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct SourceState {
    cache: ForwardCache,
    prototype: Vec<f64>,
}

/// Labeled source party.
#[derive(Debug, Clone)]
pub struct PartyA {
    model: MlpModel,
    x: Matrix,
    labels: Vec<i8>,
    overlap: Vec<usize>,
    state: Option<SourceState>,
}

impl PartyA {
    pub fn new(model: MlpModel, data: EncodedDataset, overlap: Vec<usize>) -> Result<Self> {
        let labels = data
            .y
            .ok_or_else(|| Error::Config("source party needs a labeled dataset".into()))?;
        if labels.is_empty() {
            return Err(Error::InsufficientData("source dataset is empty".into()));
        }
        if model.input_dim() != data.x.cols() {
            return Err(Error::Dimension(format!(
                "source model expects {} features, data has {}",
                model.input_dim(),
                data.x.cols()
            )));
        }
        check_overlap(&overlap, data.x.rows(), "A")?;
        Ok(PartyA {
            model,
            x: data.x,
            labels,
            overlap,
            state: None,
        })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn into_model(self) -> MlpModel {
        self.model
    }

    pub fn overlap_len(&self) -> usize {
        self.overlap.len()
    }

    /// φ for the current model over the full labeled set.
    pub fn prototype(&self) -> Result<Vec<f64>> {
        compute_prototype(&self.model.predict(&self.x)?, &self.labels)
    }

    /// Forward pass over every labeled sample; returns the overlap share.
    pub fn begin_iteration(&mut self) -> Result<LatentShare> {
        let (z, cache) = self.model.forward(&self.x)?;
        let prototype = compute_prototype(&z, &self.labels)?;
        let share = LatentShare {
            z: z.select_rows(&self.overlap)?,
            labels: self.overlap.iter().map(|&i| self.labels[i]).collect(),
            prototype: prototype.clone(),
        };
        self.state = Some(SourceState { cache, prototype });
        Ok(share)
    }

    /// Gradient of the joint objective with respect to A's parameters.
    ///
    /// `remote` holds B's overlap latents, row-aligned with A's overlap list.
    pub fn compute_gradients(
        &mut self,
        remote: &Matrix,
        hyper: &HyperParams,
    ) -> Result<(LocalLoss, ParamGrads)> {
        let state = self.state.take().ok_or_else(|| {
            Error::ProtocolOrder("source gradients requested before its forward pass".into())
        })?;
        let k = self.model.output_dim();
        if remote.shape() != (self.overlap.len(), k) {
            return Err(Error::Alignment(format!(
                "expected {}x{k} target latents, got {}x{}",
                self.overlap.len(),
                remote.rows(),
                remote.cols()
            )));
        }
        let z = state.cache.output();
        let overlap_labels: Vec<i8> = self.overlap.iter().map(|&i| self.labels[i]).collect();
        let scores = prediction_score(&state.prototype, remote)?;
        let (j_b, dscore) = prediction_loss(&overlap_labels, &scores)?;
        let own_overlap = z.select_rows(&self.overlap)?;
        let (j_ab, dalign, _) = alignment_loss(&own_overlap, remote, hyper.alignment)?;

        // ∂J_pred/∂φ = Σ_j g_j z_B,j, and ∂φ/∂z_A,i = y_i / n.
        let mut dproto = vec![0.0; k];
        for (row, g) in remote.iter_rows().zip(&dscore) {
            for (d, v) in dproto.iter_mut().zip(row) {
                *d += g * v;
            }
        }
        let n = self.x.rows() as f64;
        let mut upstream = Matrix::zeros(z.rows(), k);
        for (i, &y) in self.labels.iter().enumerate() {
            let w = f64::from(y) / n;
            for (u, d) in upstream.row_mut(i).iter_mut().zip(&dproto) {
                *u = w * d;
            }
        }
        for (j, &i) in self.overlap.iter().enumerate() {
            for (u, d) in upstream.row_mut(i).iter_mut().zip(dalign.row(j)) {
                *u += hyper.gamma * d;
            }
        }

        let mut grads = self.model.backward(&state.cache, &upstream)?;
        grads.add_weight_decay(&self.model, hyper.lambda)?;
        let loss = LocalLoss {
            j_b,
            j_ab,
            own_reg: self.model.weight_norm_sq(),
        };
        Ok((loss, grads))
    }

    pub fn apply(&mut self, grads: &ParamGrads, learning_rate: f64) -> Result<()> {
        self.model.sgd_step(grads, learning_rate)
    }

    /// Scores target latents against the current prototype.
    pub fn score(&self, remote: &Matrix) -> Result<Vec<f64>> {
        prediction_score(&self.prototype()?, remote)
    }
}

#[derive(Debug, Clone)]
struct TargetState {
    cache: ForwardCache,
    share: LatentShare,
}

/// Unlabeled target party. Never sees labels except the overlap labels A sends.
#[derive(Debug, Clone)]
pub struct PartyB {
    model: MlpModel,
    x: Matrix,
    overlap: Vec<usize>,
    x_overlap: Matrix,
    state: Option<TargetState>,
}

impl PartyB {
    /// Rejects datasets that still carry labels: B's evaluation labels live
    /// in a sealed record that never reaches this type.
    pub fn new(model: MlpModel, data: EncodedDataset, overlap: Vec<usize>) -> Result<Self> {
        if data.y.is_some() {
            return Err(Error::Config(
                "target party must be given an unlabeled dataset".into(),
            ));
        }
        if model.input_dim() != data.x.cols() {
            return Err(Error::Dimension(format!(
                "target model expects {} features, data has {}",
                model.input_dim(),
                data.x.cols()
            )));
        }
        check_overlap(&overlap, data.x.rows(), "B")?;
        let x_overlap = data.x.select_rows(&overlap)?;
        Ok(PartyB {
            model,
            x: data.x,
            overlap,
            x_overlap,
            state: None,
        })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn into_model(self) -> MlpModel {
        self.model
    }

    pub fn features(&self) -> &Matrix {
        &self.x
    }

    pub fn overlap_len(&self) -> usize {
        self.overlap.len()
    }

    /// Takes A's share, runs the overlap forward pass, returns B's latents.
    pub fn begin_iteration(&mut self, share: LatentShare) -> Result<Matrix> {
        let k = self.model.output_dim();
        if share.z.shape() != (self.overlap.len(), k)
            || share.labels.len() != self.overlap.len()
            || share.prototype.len() != k
        {
            return Err(Error::Alignment(format!(
                "source share ({}x{} latents, {} labels, prototype {}) does not fit \
                 {} overlap samples with latent dim {k}",
                share.z.rows(),
                share.z.cols(),
                share.labels.len(),
                share.prototype.len(),
                self.overlap.len()
            )));
        }
        let (z, cache) = self.model.forward(&self.x_overlap)?;
        self.state = Some(TargetState { cache, share });
        Ok(z)
    }

    pub fn compute_gradients(&mut self, hyper: &HyperParams) -> Result<(LocalLoss, ParamGrads)> {
        let state = self.state.take().ok_or_else(|| {
            Error::ProtocolOrder("target gradients requested before the latent exchange".into())
        })?;
        let z = state.cache.output();
        let share = &state.share;
        let scores = prediction_score(&share.prototype, z)?;
        let (j_b, dscore) = prediction_loss(&share.labels, &scores)?;
        let (j_ab, _, dalign) = alignment_loss(&share.z, z, hyper.alignment)?;

        let mut upstream = dalign;
        upstream.scale(hyper.gamma);
        for (j, g) in dscore.iter().enumerate() {
            for (u, p) in upstream.row_mut(j).iter_mut().zip(&share.prototype) {
                *u += g * p;
            }
        }

        let mut grads = self.model.backward(&state.cache, &upstream)?;
        grads.add_weight_decay(&self.model, hyper.lambda)?;
        let loss = LocalLoss {
            j_b,
            j_ab,
            own_reg: self.model.weight_norm_sq(),
        };
        Ok((loss, grads))
    }

    pub fn apply(&mut self, grads: &ParamGrads, learning_rate: f64) -> Result<()> {
        self.model.sgd_step(grads, learning_rate)
    }

    pub fn latents(&self, x: &Matrix) -> Result<Matrix> {
        self.model.predict(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(x: Matrix, y: Vec<i8>) -> EncodedDataset {
        EncodedDataset::new("t", x, Some(y)).unwrap()
    }

    fn unlabeled(x: Matrix) -> EncodedDataset {
        EncodedDataset::new("t", x, None).unwrap()
    }

    #[test]
    fn hyper_validation() {
        assert!(HyperParams::default().validate().is_ok());
        let mut h = HyperParams::default();
        h.warmup = h.max_iter;
        assert!(h.validate().is_err());
        let h = HyperParams {
            learning_rate: 0.0,
            ..HyperParams::default()
        };
        assert!(h.validate().is_err());
        let h = HyperParams {
            max_iter: 0,
            warmup: 0,
            ..HyperParams::default()
        };
        assert!(h.validate().is_err());
    }

    #[test]
    fn target_rejects_labeled_data() {
        let model = MlpModel::init(&[2, 3], Activation::Tanh, 0).unwrap();
        let ds = labeled(Matrix::zeros(2, 2), vec![1, -1]);
        assert!(matches!(
            PartyB::new(model, ds, vec![0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn source_requires_labels() {
        let model = MlpModel::init(&[2, 3], Activation::Tanh, 0).unwrap();
        assert!(PartyA::new(model, unlabeled(Matrix::zeros(2, 2)), vec![0]).is_err());
    }

    #[test]
    fn gradients_before_exchange_are_rejected() {
        let h = HyperParams::default();
        let ma = MlpModel::init(&[2, 3], Activation::Tanh, 0).unwrap();
        let mb = MlpModel::init(&[2, 3], Activation::Tanh, 1).unwrap();
        let mut a = PartyA::new(ma, labeled(Matrix::zeros(2, 2), vec![1, -1]), vec![0, 1]).unwrap();
        let mut b = PartyB::new(mb, unlabeled(Matrix::zeros(2, 2)), vec![0, 1]).unwrap();

        assert!(matches!(
            a.compute_gradients(&Matrix::zeros(2, 3), &h),
            Err(Error::ProtocolOrder(_))
        ));
        assert!(matches!(
            b.compute_gradients(&h),
            Err(Error::ProtocolOrder(_))
        ));

        let share = a.begin_iteration().unwrap();
        let zb = b.begin_iteration(share).unwrap();
        a.compute_gradients(&zb, &h).unwrap();
        b.compute_gradients(&h).unwrap();
        // The cache is consumed; a second request in the same iteration fails.
        assert!(matches!(
            a.compute_gradients(&zb, &h),
            Err(Error::ProtocolOrder(_))
        ));
        assert!(matches!(
            b.compute_gradients(&h),
            Err(Error::ProtocolOrder(_))
        ));
    }

    #[test]
    fn mismatched_share_is_an_alignment_error() {
        let ma = MlpModel::init(&[2, 3], Activation::Tanh, 0).unwrap();
        let mb = MlpModel::init(&[2, 3], Activation::Tanh, 1).unwrap();
        let mut a = PartyA::new(
            ma,
            labeled(Matrix::zeros(3, 2), vec![1, -1, 1]),
            vec![0, 1, 2],
        )
        .unwrap();
        let mut b = PartyB::new(mb, unlabeled(Matrix::zeros(2, 2)), vec![0, 1]).unwrap();
        let share = a.begin_iteration().unwrap();
        assert!(matches!(b.begin_iteration(share), Err(Error::Alignment(_))));
    }

    #[test]
    fn lambda_only_gradient_is_weight_decay() {
        let h = HyperParams {
            gamma: 0.0,
            lambda: 0.3,
            ..HyperParams::default()
        };
        let ma = MlpModel::init(&[2, 4, 3], Activation::Tanh, 5).unwrap();
        let mb = MlpModel::init(&[3, 4, 3], Activation::Tanh, 6).unwrap();
        let x = Matrix::from_rows(&[[0.2, 0.9], [0.7, 0.1]]).unwrap();
        let mut a = PartyA::new(ma.clone(), labeled(x, vec![1, -1]), vec![]).unwrap();
        let mut b = PartyB::new(mb.clone(), unlabeled(Matrix::zeros(2, 3)), vec![]).unwrap();
        let share = a.begin_iteration().unwrap();
        let zb = b.begin_iteration(share).unwrap();
        let (la, ga) = a.compute_gradients(&zb, &h).unwrap();
        let (lb, gb) = b.compute_gradients(&h).unwrap();
        assert_eq!(la.j_b, 0.0);
        assert_eq!(lb.j_ab, 0.0);
        for (model, grads) in [(&ma, &ga), (&mb, &gb)] {
            for (g, w) in grads.weights.iter().zip(model.weights()) {
                for (gv, wv) in g.data().iter().zip(w.data()) {
                    assert_eq!(*gv, 0.3 * wv);
                }
            }
            assert!(grads.biases.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn all_terms_off_give_zero_gradients() {
        let h = HyperParams {
            gamma: 0.0,
            lambda: 0.0,
            ..HyperParams::default()
        };
        let ma = MlpModel::init(&[2, 3], Activation::Tanh, 0).unwrap();
        let mb = MlpModel::init(&[2, 3], Activation::Tanh, 1).unwrap();
        let x = Matrix::from_rows(&[[0.5, 0.1]]).unwrap();
        let mut a = PartyA::new(ma, labeled(x.clone(), vec![1]), vec![]).unwrap();
        let mut b = PartyB::new(mb, unlabeled(x), vec![]).unwrap();
        let share = a.begin_iteration().unwrap();
        let zb = b.begin_iteration(share).unwrap();
        assert_eq!(a.compute_gradients(&zb, &h).unwrap().1.max_abs(), 0.0);
        assert_eq!(b.compute_gradients(&h).unwrap().1.max_abs(), 0.0);
    }
}
