use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::nn::{Activation, Matrix, MlpModel, ParamGrads};
use crate::{rng, Error, Result};

/// Default code size: `max(2, ⌈n/8⌉)`.
pub fn default_latent_dim(n: usize) -> usize {
    n.div_ceil(8).max(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeConfig {
    /// Code size; `None` picks [`default_latent_dim`].
    pub latent_dim: Option<usize>,
    pub hidden: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            latent_dim: None,
            hidden: 64,
            activation: Activation::Tanh,
            epochs: 200,
            learning_rate: 0.01,
            batch_size: 32,
        }
    }
}

/// `n → hidden → m` encoder and `m → hidden → n` decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub encoder: MlpModel,
    pub decoder: MlpModel,
}

impl Autoencoder {
    pub fn init(input_dim: usize, cfg: &AeConfig, seed: u64) -> Result<Self> {
        let m = cfg
            .latent_dim
            .unwrap_or_else(|| default_latent_dim(input_dim));
        let encoder = MlpModel::init(
            &[input_dim, cfg.hidden, m],
            cfg.activation,
            rng::derive(seed, "ae-encoder"),
        )?;
        let decoder = MlpModel::init(
            &[m, cfg.hidden, input_dim],
            cfg.activation,
            rng::derive(seed, "ae-decoder"),
        )?;
        Autoencoder::from_parts(encoder, decoder)
    }

    pub fn from_parts(encoder: MlpModel, decoder: MlpModel) -> Result<Self> {
        if encoder.output_dim() != decoder.input_dim()
            || decoder.output_dim() != encoder.input_dim()
        {
            return Err(Error::Dimension(format!(
                "encoder {:?} and decoder {:?} do not compose",
                encoder.layer_dims(),
                decoder.layer_dims()
            )));
        }
        Ok(Autoencoder { encoder, decoder })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.encoder.predict(x)
    }

    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        self.decoder.predict(&self.encoder.predict(x)?)
    }

    /// `Σ_rows ‖x − g(f(x))‖²`
    pub fn reconstruction_error(&self, x: &Matrix) -> Result<f64> {
        let r = self.reconstruct(x)?;
        Ok(r.data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    /// Summed squared reconstruction error and its gradients for both halves.
    pub fn loss_and_grads(&self, x: &Matrix) -> Result<(f64, ParamGrads, ParamGrads)> {
        let (code, enc_cache) = self.encoder.forward(x)?;
        let (recon, dec_cache) = self.decoder.forward(&code)?;
        let mut upstream = recon;
        let mut loss = 0.0;
        for (u, t) in upstream.data_mut().iter_mut().zip(x.data()) {
            let diff = *u - t;
            loss += diff * diff;
            *u = 2.0 * diff;
        }
        let (dec_grads, dcode) = self.decoder.backward_with_input(&dec_cache, &upstream)?;
        let enc_grads = self.encoder.backward(&enc_cache, &dcode)?;
        Ok((loss, enc_grads, dec_grads))
    }
}

/// Mini-batch SGD on the squared reconstruction error, stepping along the
/// batch-mean gradient.
///
/// Returns the model and one trace entry per epoch: the sum of the batch
/// losses seen during that epoch (each measured before its update).
pub fn train_autoencoder(x: &Matrix, cfg: &AeConfig, seed: u64) -> Result<(Autoencoder, Vec<f64>)> {
    if x.rows() == 0 {
        return Err(Error::InsufficientData(
            "autoencoder needs at least one row".into(),
        ));
    }
    if cfg.latent_dim == Some(0) || cfg.hidden == 0 || cfg.batch_size == 0 {
        return Err(Error::Config(
            "latent dim, hidden width and batch size must be positive".into(),
        ));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate must be > 0, got {}",
            cfg.learning_rate
        )));
    }
    let mut ae = Autoencoder::init(x.cols(), cfg, seed)?;
    let mut rng = rng::rng_for(seed, "ae-batches");
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select_rows(batch)?;
            let (loss, ge, gd) = ae.loss_and_grads(&xb)?;
            if !loss.is_finite() || !ge.is_finite() || !gd.is_finite() {
                return Err(Error::Divergence {
                    iteration: epoch,
                    loss,
                });
            }
            epoch_loss += loss;
            // Step along the batch-mean gradient.
            let step = cfg.learning_rate / batch.len() as f64;
            ae.encoder.sgd_step(&ge, step)?;
            ae.decoder.sgd_step(&gd, step)?;
        }
        trace.push(epoch_loss);
    }
    Ok((ae, trace))
}
