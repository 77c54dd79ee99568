//! Federated transfer learning between a labeled source party (A) and an
//! unlabeled target party (B).
//!
//! Scoring uses the source *prototype* `φ = (1/n) Σ y_i z_A,i`; a target
//! sample is scored `φ · z_B` and classified as an attack when the score is
//! non-negative.

mod loss;
mod party;
mod train;

pub use loss::{
    alignment_loss, check_label, classify, compute_prototype, logistic_loss, prediction_loss,
    prediction_score, regularization, total_loss, AlignmentKind, LossBreakdown,
};
pub use party::{ExtractorSpec, HyperParams, LatentShare, LocalLoss, PartyA, PartyB};
pub use train::{
    predict_ftl, request_predictions, run_party_a, run_party_b, serve_predictions, train_ftl,
    Prediction, TraceRecord,
};
