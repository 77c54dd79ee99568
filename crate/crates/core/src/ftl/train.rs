//! Training and prediction loops driven over a [`Channel`].
//!
//! Per training iteration:
//!
//! ```text
//! A → B  LatentsA { overlap latents, overlap labels, prototype }
//! B → A  LatentsB { overlap latents }
//! A → B  LossReportA           (+ GradientsA with exchange_gradients)
//! B → A  LossReportB           (+ GradientsB with exchange_gradients)
//!        both apply their own SGD step
//! A → B  Stop                  (only when A's stop test fires)
//! ```
//!
//! Prediction: B sends `PredictRequest` with its latents, A answers with
//! `PredictResponse`, and B closes the session with `Stop`.

use serde::{Deserialize, Serialize};

use super::loss::{classify, total_loss, LossBreakdown};
use super::party::{HyperParams, LatentShare, LocalLoss, PartyA, PartyB};
use crate::nn::{Matrix, ParamGrads};
use crate::transport::{in_process_pair, Channel, FtlMessage, TransportError};
use crate::{Error, Result};

/// One row of a loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: LossBreakdown,
}

fn grads_to_frames(g: &ParamGrads) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(2 * g.weights.len());
    for (w, b) in g.weights.iter().zip(&g.biases) {
        out.push(w.clone());
        out.push(Matrix::from_vec(1, b.len(), b.clone()).expect("bias row"));
    }
    out
}

fn partial_report(local: &LocalLoss, a_side: bool, hyper: &HyperParams) -> LossBreakdown {
    let (ra, rb) = if a_side {
        (local.own_reg, 0.0)
    } else {
        (0.0, local.own_reg)
    };
    total_loss(local.j_b, local.j_ab, ra, rb, hyper.gamma, hyper.lambda)
}

fn unexpected(got: &FtlMessage, expected: &str) -> TransportError {
    TransportError::Unexpected {
        got: got.kind(),
        expected: expected.to_string(),
    }
}

fn lift<T>(iteration: usize, r: std::result::Result<T, TransportError>) -> Result<T> {
    r.map_err(|e| Error::transport(iteration, e))
}

fn apply_or_diverge(result: Result<()>, iteration: usize, loss: f64) -> Result<()> {
    match result {
        Err(Error::Numeric(_)) => Err(Error::Divergence { iteration, loss }),
        other => other,
    }
}

/// Party A's side of the training protocol. Returns the loss trace.
pub fn run_party_a<C: Channel + ?Sized>(
    party: &mut PartyA,
    ch: &mut C,
    hyper: &HyperParams,
) -> Result<Vec<TraceRecord>> {
    hyper.validate()?;
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    for iteration in 1..=hyper.max_iter {
        let share = party.begin_iteration()?;
        lift(
            iteration,
            ch.send(&FtlMessage::LatentsA {
                z: share.z,
                labels: share.labels,
                prototype: share.prototype,
            }),
        )?;
        let zb = match lift(iteration, ch.recv())? {
            FtlMessage::LatentsB { z } => z,
            other => return Err(Error::transport(iteration, unexpected(&other, "LatentsB"))),
        };
        let (local, grads) = party.compute_gradients(&zb, hyper)?;
        lift(
            iteration,
            ch.send(&FtlMessage::LossReportA(partial_report(
                &local, true, hyper,
            ))),
        )?;
        if hyper.exchange_gradients {
            lift(
                iteration,
                ch.send(&FtlMessage::GradientsA(grads_to_frames(&grads))),
            )?;
        }
        let report_b = match lift(iteration, ch.recv())? {
            FtlMessage::LossReportB(l) => l,
            other => {
                return Err(Error::transport(
                    iteration,
                    unexpected(&other, "LossReportB"),
                ))
            }
        };
        if hyper.exchange_gradients {
            match lift(iteration, ch.recv())? {
                FtlMessage::GradientsB(_) => {}
                other => {
                    return Err(Error::transport(
                        iteration,
                        unexpected(&other, "GradientsB"),
                    ))
                }
            }
        }

        let loss = total_loss(
            local.j_b,
            local.j_ab,
            local.own_reg,
            report_b.j_b_reg,
            hyper.gamma,
            hyper.lambda,
        );
        if !loss.total.is_finite() {
            let _ = ch.send(&FtlMessage::Stop);
            return Err(Error::Divergence {
                iteration,
                loss: loss.total,
            });
        }
        apply_or_diverge(
            party.apply(&grads, hyper.learning_rate),
            iteration,
            loss.total,
        )?;
        trace.push(TraceRecord { iteration, loss });
        log::debug!("iteration {iteration}: J = {}", loss.total);

        let converged = iteration >= hyper.warmup && prev - loss.total <= hyper.tolerance;
        if converged || iteration == hyper.max_iter {
            lift(iteration, ch.send(&FtlMessage::Stop))?;
            break;
        }
        prev = loss.total;
    }
    Ok(trace)
}

/// Party B's side of the training protocol. Runs until A sends `Stop`.
pub fn run_party_b<C: Channel + ?Sized>(
    party: &mut PartyB,
    ch: &mut C,
    hyper: &HyperParams,
) -> Result<Vec<TraceRecord>> {
    hyper.validate()?;
    let mut trace = Vec::new();
    let mut iteration = 0;
    loop {
        iteration += 1;
        let share = match lift(iteration, ch.recv())? {
            FtlMessage::Stop => break,
            FtlMessage::LatentsA {
                z,
                labels,
                prototype,
            } => LatentShare {
                z,
                labels,
                prototype,
            },
            other => {
                return Err(Error::transport(
                    iteration,
                    unexpected(&other, "LatentsA or Stop"),
                ))
            }
        };
        let zb = party.begin_iteration(share)?;
        lift(iteration, ch.send(&FtlMessage::LatentsB { z: zb }))?;
        let report_a = match lift(iteration, ch.recv())? {
            FtlMessage::LossReportA(l) => l,
            other => {
                return Err(Error::transport(
                    iteration,
                    unexpected(&other, "LossReportA"),
                ))
            }
        };
        if hyper.exchange_gradients {
            match lift(iteration, ch.recv())? {
                FtlMessage::GradientsA(_) => {}
                other => {
                    return Err(Error::transport(
                        iteration,
                        unexpected(&other, "GradientsA"),
                    ))
                }
            }
        }
        let (local, grads) = party.compute_gradients(hyper)?;
        lift(
            iteration,
            ch.send(&FtlMessage::LossReportB(partial_report(
                &local, false, hyper,
            ))),
        )?;
        if hyper.exchange_gradients {
            lift(
                iteration,
                ch.send(&FtlMessage::GradientsB(grads_to_frames(&grads))),
            )?;
        }

        // A's prediction and alignment terms are authoritative; B computes the
        // same values from the same bits.
        let loss = total_loss(
            report_a.j_b,
            report_a.j_ab,
            report_a.j_a_reg,
            local.own_reg,
            hyper.gamma,
            hyper.lambda,
        );
        if !loss.total.is_finite() {
            return Err(Error::Divergence {
                iteration,
                loss: loss.total,
            });
        }
        apply_or_diverge(
            party.apply(&grads, hyper.learning_rate),
            iteration,
            loss.total,
        )?;
        trace.push(TraceRecord { iteration, loss });
    }
    Ok(trace)
}

/// Trains both parties in this process, B on a helper thread, over an
/// in-process channel. Returns A's trace (B's is identical).
pub fn train_ftl(a: &mut PartyA, b: &mut PartyB, hyper: &HyperParams) -> Result<Vec<TraceRecord>> {
    hyper.validate()?;
    let (mut ch_a, mut ch_b) = in_process_pair();
    std::thread::scope(|s| {
        let handle = s.spawn(move || run_party_b(b, &mut ch_b, hyper));
        let trace_a = run_party_a(a, &mut ch_a, hyper);
        drop(ch_a);
        let trace_b = handle.join().expect("party B thread panicked");
        let trace_a = trace_a?;
        let trace_b = trace_b?;
        debug_assert_eq!(trace_a, trace_b);
        Ok(trace_a)
    })
}

/// B-side prediction scores and their classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub labels: Vec<i8>,
}

/// B asks A to score its latents for `x`, then ends the session.
pub fn request_predictions<C: Channel + ?Sized>(
    party: &PartyB,
    x: &Matrix,
    ch: &mut C,
) -> Result<Prediction> {
    let z = party.latents(x)?;
    let n = z.rows();
    lift(0, ch.send(&FtlMessage::PredictRequest { z }))?;
    let scores = match lift(0, ch.recv())? {
        FtlMessage::PredictResponse { scores } => scores,
        other => return Err(Error::transport(0, unexpected(&other, "PredictResponse"))),
    };
    lift(0, ch.send(&FtlMessage::Stop))?;
    if scores.len() != n {
        return Err(Error::Alignment(format!(
            "asked for {n} scores, received {}",
            scores.len()
        )));
    }
    let labels = scores.iter().map(|&s| classify(s)).collect();
    Ok(Prediction { scores, labels })
}

/// A answers prediction requests until B sends `Stop`.
pub fn serve_predictions<C: Channel + ?Sized>(party: &PartyA, ch: &mut C) -> Result<usize> {
    let prototype = party.prototype()?;
    let mut served = 0;
    loop {
        match lift(served, ch.recv())? {
            FtlMessage::Stop => return Ok(served),
            FtlMessage::PredictRequest { z } => {
                let scores = super::loss::prediction_score(&prototype, &z)?;
                lift(served, ch.send(&FtlMessage::PredictResponse { scores }))?;
                served += 1;
            }
            other => {
                return Err(Error::transport(
                    served,
                    unexpected(&other, "PredictRequest or Stop"),
                ))
            }
        }
    }
}

/// Runs the prediction exchange in-process.
pub fn predict_ftl(a: &PartyA, b: &PartyB, x: &Matrix) -> Result<Prediction> {
    let (mut ch_a, mut ch_b) = in_process_pair();
    std::thread::scope(|s| {
        let server = s.spawn(move || serve_predictions(a, &mut ch_a));
        let pred = request_predictions(b, x, &mut ch_b);
        drop(ch_b);
        let served = server.join().expect("party A thread panicked");
        let pred = pred?;
        served?;
        Ok(pred)
    })
}
