//! Two-party federated transfer learning for intrusion detection.
//!
//! A labeled *source* party (A) and an unlabeled *target* party (B) hold
//! different feature views of their traffic records. Each trains its own
//! feature extractor into a shared latent space; only latents, overlap
//! labels and loss scalars cross the wire. The crate also carries the
//! unsupervised autoencoder + 2-means baseline, the ROC/AUC and
//! significance-number evaluation, and the seeded experiment harness that
//! compares the two.
//!
//! Module map:
//!
//! - [`nn`]: dense MLP kernel (matrices, forward/backward, SGD).
//! - [`ftl`]: losses, prototype scoring, party state machines, training and
//!   prediction loops.
//! - [`transport`]: the `FTL1` wire format plus in-process and TCP channels.
//! - [`udl`]: autoencoder and k-means baseline.
//! - [`data`]: CSV ingestion, feature encoding, vertical split, synthetic data.
//! - [`eval`]: AUC, normal quantiles, significance numbers, experiment harness.

pub mod data;
pub mod error;
pub mod eval;
pub mod ftl;
pub mod nn;
pub mod rng;
pub mod transport;
pub mod udl;

pub use error::{Error, Result};
pub use ftl::{HyperParams, LossBreakdown, PartyA, PartyB};
pub use nn::{Activation, Matrix, MlpModel, ParamGrads};
pub use transport::{Channel, FtlMessage, TransportError};
