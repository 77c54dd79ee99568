//! Unsupervised baseline: autoencoder compression followed by 2-means
//! clustering, scored by the difference of centroid distances.

mod autoencoder;
mod kmeans;

pub use autoencoder::{default_latent_dim, train_autoencoder, AeConfig, Autoencoder};
pub use kmeans::{anomaly_score, kmeans, KMeansModel, DEFAULT_MAX_ITERS};

use serde::{Deserialize, Serialize};

use crate::nn::Matrix;
use crate::{rng, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UdlConfig {
    pub autoencoder: AeConfig,
    pub kmeans_max_iters: usize,
}

impl Default for UdlConfig {
    fn default() -> Self {
        UdlConfig {
            autoencoder: AeConfig::default(),
            kmeans_max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UdlOutcome {
    pub autoencoder: Autoencoder,
    pub kmeans: KMeansModel,
    /// Epoch-level reconstruction error.
    pub trace: Vec<f64>,
    /// One anomaly score per input row.
    pub scores: Vec<f64>,
}

/// Trains the autoencoder on `x`, clusters the codes with k = 2 and scores
/// every row. Cluster identity is arbitrary, so the sign of the scores is too.
pub fn run_udl(x: &Matrix, cfg: &UdlConfig, seed: u64) -> Result<UdlOutcome> {
    let (ae, trace) = train_autoencoder(x, &cfg.autoencoder, rng::derive(seed, "udl-ae"))?;
    let z = ae.encode(x)?;
    let km = kmeans(&z, 2, rng::derive(seed, "udl-kmeans"), cfg.kmeans_max_iters)?;
    let scores = anomaly_score(&z, &km)?;
    Ok(UdlOutcome {
        autoencoder: ae,
        kmeans: km,
        trace,
        scores,
    })
}
