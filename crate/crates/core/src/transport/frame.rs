//! `FTL1` frame encoding.
//!
//! ```text
//! frame   = "FTL1" | kind: u8 | len: u32 LE | payload[len]
//! matrix  = rows: u32 LE | cols: u32 LE | rows*cols f64 LE, row-major
//! labels  = n: u32 LE | n i8 (each -1 or +1)
//! loss    = j_b, j_ab, j_a_reg, j_b_reg, total as f64 LE
//! ```
//!
//! Payload per kind:
//!
//! | kind | byte | payload |
//! |------|------|---------|
//! | `LatentsA` | 0x01 | matrix (overlap latents), labels, matrix `1 x k` (prototype) |
//! | `LatentsB` | 0x02 | matrix |
//! | `LossReportA` / `LossReportB` | 0x03 / 0x04 | loss |
//! | `GradientsA` / `GradientsB` | 0x05 / 0x06 | count: u32 LE, then that many matrices |
//! | `Stop` | 0x07 | empty |
//! | `PredictRequest` | 0x08 | matrix (target latents) |
//! | `PredictResponse` | 0x09 | matrix `n x 1` (scores) |

use crate::ftl::LossBreakdown;
use crate::nn::Matrix;

use super::TransportError;

pub const MAGIC: [u8; 4] = *b"FTL1";
pub const HEADER_LEN: usize = 9;
pub const MAX_PAYLOAD: usize = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageKind {
    LatentsA = 0x01,
    LatentsB = 0x02,
    LossReportA = 0x03,
    LossReportB = 0x04,
    GradientsA = 0x05,
    GradientsB = 0x06,
    Stop = 0x07,
    PredictRequest = 0x08,
    PredictResponse = 0x09,
}

impl TryFrom<u8> for MessageKind {
    type Error = TransportError;

    fn try_from(b: u8) -> Result<Self, TransportError> {
        use MessageKind::*;
        Ok(match b {
            0x01 => LatentsA,
            0x02 => LatentsB,
            0x03 => LossReportA,
            0x04 => LossReportB,
            0x05 => GradientsA,
            0x06 => GradientsB,
            0x07 => Stop,
            0x08 => PredictRequest,
            0x09 => PredictResponse,
            other => {
                return Err(TransportError::Protocol(format!(
                    "unknown message kind 0x{other:02x}"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FtlMessage {
    LatentsA {
        z: Matrix,
        labels: Vec<i8>,
        prototype: Vec<f64>,
    },
    LatentsB {
        z: Matrix,
    },
    LossReportA(LossBreakdown),
    LossReportB(LossBreakdown),
    GradientsA(Vec<Matrix>),
    GradientsB(Vec<Matrix>),
    Stop,
    PredictRequest {
        z: Matrix,
    },
    PredictResponse {
        scores: Vec<f64>,
    },
}

impl FtlMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            FtlMessage::LatentsA { .. } => MessageKind::LatentsA,
            FtlMessage::LatentsB { .. } => MessageKind::LatentsB,
            FtlMessage::LossReportA(_) => MessageKind::LossReportA,
            FtlMessage::LossReportB(_) => MessageKind::LossReportB,
            FtlMessage::GradientsA(_) => MessageKind::GradientsA,
            FtlMessage::GradientsB(_) => MessageKind::GradientsB,
            FtlMessage::Stop => MessageKind::Stop,
            FtlMessage::PredictRequest { .. } => MessageKind::PredictRequest,
            FtlMessage::PredictResponse { .. } => MessageKind::PredictResponse,
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), TransportError> {
    let v = u32::try_from(v).map_err(|_| TransportError::Size(v))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) -> Result<(), TransportError> {
    put_u32(out, m.rows())?;
    put_u32(out, m.cols())?;
    put_f64s(out, m.data());
    Ok(())
}

fn put_loss(out: &mut Vec<u8>, l: &LossBreakdown) {
    put_f64s(out, &[l.j_b, l.j_ab, l.j_a_reg, l.j_b_reg, l.total]);
}

fn matrix_bytes(m: &Matrix) -> usize {
    8 + 8 * m.data().len()
}

fn payload_len(m: &FtlMessage) -> usize {
    match m {
        FtlMessage::LatentsA {
            z,
            labels,
            prototype,
        } => matrix_bytes(z) + 4 + labels.len() + 8 + 8 * prototype.len(),
        FtlMessage::LatentsB { z } | FtlMessage::PredictRequest { z } => matrix_bytes(z),
        FtlMessage::LossReportA(_) | FtlMessage::LossReportB(_) => 40,
        FtlMessage::GradientsA(ms) | FtlMessage::GradientsB(ms) => {
            4 + ms.iter().map(matrix_bytes).sum::<usize>()
        }
        FtlMessage::Stop => 0,
        FtlMessage::PredictResponse { scores } => 8 + 8 * scores.len(),
    }
}

pub fn encode_message(m: &FtlMessage) -> Result<Vec<u8>, TransportError> {
    let len = payload_len(m);
    if len > MAX_PAYLOAD {
        return Err(TransportError::Size(len));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + len);
    out.extend_from_slice(&MAGIC);
    out.push(m.kind() as u8);
    put_u32(&mut out, len)?;
    match m {
        FtlMessage::LatentsA {
            z,
            labels,
            prototype,
        } => {
            put_matrix(&mut out, z)?;
            put_u32(&mut out, labels.len())?;
            for &y in labels {
                if y != 1 && y != -1 {
                    return Err(TransportError::Protocol(format!("label {y} is not ±1")));
                }
                out.push(y as u8);
            }
            put_u32(&mut out, 1)?;
            put_u32(&mut out, prototype.len())?;
            put_f64s(&mut out, prototype);
        }
        FtlMessage::LatentsB { z } | FtlMessage::PredictRequest { z } => put_matrix(&mut out, z)?,
        FtlMessage::LossReportA(l) | FtlMessage::LossReportB(l) => put_loss(&mut out, l),
        FtlMessage::GradientsA(ms) | FtlMessage::GradientsB(ms) => {
            put_u32(&mut out, ms.len())?;
            for g in ms {
                put_matrix(&mut out, g)?;
            }
        }
        FtlMessage::Stop => {}
        FtlMessage::PredictResponse { scores } => {
            put_u32(&mut out, scores.len())?;
            put_u32(&mut out, 1)?;
            put_f64s(&mut out, scores);
        }
    }
    debug_assert_eq!(out.len(), HEADER_LEN + len);
    Ok(out)
}

/// Validated frame header: kind and payload length.
pub fn decode_header(h: &[u8; HEADER_LEN]) -> Result<(MessageKind, usize), TransportError> {
    if h[..4] != MAGIC {
        return Err(TransportError::Protocol(format!(
            "bad magic {:02x?}, expected \"FTL1\"",
            &h[..4]
        )));
    }
    let kind = MessageKind::try_from(h[4])?;
    let len = u32::from_le_bytes([h[5], h[6], h[7], h[8]]) as usize;
    if len > MAX_PAYLOAD {
        return Err(TransportError::Size(len));
    }
    Ok((kind, len))
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TransportError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| {
            TransportError::Framing(format!(
                "payload ends after {} bytes, needed {} more at offset {}",
                self.buf.len(),
                n,
                self.at
            ))
        })?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, TransportError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, TransportError> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| TransportError::Framing(format!("{n} floats overflow")))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn matrix(&mut self) -> Result<Matrix, TransportError> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| TransportError::Framing(format!("{rows}x{cols} overflows")))?;
        let data = self.f64s(n)?;
        Matrix::from_vec(rows, cols, data).map_err(|e| TransportError::Framing(e.to_string()))
    }

    fn labels(&mut self) -> Result<Vec<i8>, TransportError> {
        let n = self.u32()?;
        self.take(n)?
            .iter()
            .map(|&b| match b as i8 {
                y @ (1 | -1) => Ok(y),
                y => Err(TransportError::Protocol(format!("label {y} is not ±1"))),
            })
            .collect()
    }

    fn loss(&mut self) -> Result<LossBreakdown, TransportError> {
        let v = self.f64s(5)?;
        Ok(LossBreakdown {
            j_b: v[0],
            j_ab: v[1],
            j_a_reg: v[2],
            j_b_reg: v[3],
            total: v[4],
        })
    }
}

/// Decodes the payload of an already-validated header.
pub fn decode_payload(kind: MessageKind, payload: &[u8]) -> Result<FtlMessage, TransportError> {
    let mut r = Reader {
        buf: payload,
        at: 0,
    };
    let msg = match kind {
        MessageKind::LatentsA => {
            let z = r.matrix()?;
            let labels = r.labels()?;
            let proto = r.matrix()?;
            if proto.rows() != 1 {
                return Err(TransportError::Framing(format!(
                    "prototype must be a single row, got {} rows",
                    proto.rows()
                )));
            }
            FtlMessage::LatentsA {
                z,
                labels,
                prototype: proto.into_data(),
            }
        }
        MessageKind::LatentsB => FtlMessage::LatentsB { z: r.matrix()? },
        MessageKind::PredictRequest => FtlMessage::PredictRequest { z: r.matrix()? },
        MessageKind::LossReportA => FtlMessage::LossReportA(r.loss()?),
        MessageKind::LossReportB => FtlMessage::LossReportB(r.loss()?),
        MessageKind::GradientsA | MessageKind::GradientsB => {
            let n = r.u32()?;
            let ms = (0..n).map(|_| r.matrix()).collect::<Result<Vec<_>, _>>()?;
            if kind == MessageKind::GradientsA {
                FtlMessage::GradientsA(ms)
            } else {
                FtlMessage::GradientsB(ms)
            }
        }
        MessageKind::Stop => FtlMessage::Stop,
        MessageKind::PredictResponse => {
            let m = r.matrix()?;
            if m.cols() != 1 {
                return Err(TransportError::Framing(format!(
                    "scores must be a single column, got {} columns",
                    m.cols()
                )));
            }
            FtlMessage::PredictResponse {
                scores: m.into_data(),
            }
        }
    };
    if r.at != payload.len() {
        return Err(TransportError::Framing(format!(
            "{} trailing payload bytes after {:?}",
            payload.len() - r.at,
            kind
        )));
    }
    Ok(msg)
}

/// Decodes the first frame in `bytes`, returning it and the bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(FtlMessage, usize), TransportError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(TransportError::Protocol("bad magic".into()));
        }
        return Err(TransportError::Framing(format!(
            "{} bytes is shorter than a frame header",
            bytes.len()
        )));
    }
    let (kind, len) = decode_header(bytes[..HEADER_LEN].try_into().unwrap())?;
    let end = HEADER_LEN + len;
    if bytes.len() < end {
        return Err(TransportError::Framing(format!(
            "length field says {len} payload bytes but only {} remain",
            bytes.len() - HEADER_LEN
        )));
    }
    Ok((decode_payload(kind, &bytes[HEADER_LEN..end])?, end))
}

/// Decodes exactly one frame; trailing bytes are a framing error.
pub fn decode_message(bytes: &[u8]) -> Result<FtlMessage, TransportError> {
    let (msg, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(TransportError::Framing(format!(
            "{} bytes after the frame",
            bytes.len() - used
        )));
    }
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_is_header_only() {
        let b = encode_message(&FtlMessage::Stop).unwrap();
        assert_eq!(b, [0x46, 0x54, 0x4C, 0x31, 0x07, 0, 0, 0, 0]);
        assert_eq!(decode_message(&b).unwrap(), FtlMessage::Stop);
    }

    #[test]
    fn bad_magic_is_protocol_error() {
        let mut b = encode_message(&FtlMessage::Stop).unwrap();
        b[0] = b'X';
        assert!(matches!(
            decode_message(&b),
            Err(TransportError::Protocol(_))
        ));
    }

    #[test]
    fn unknown_kind_is_protocol_error() {
        let mut b = encode_message(&FtlMessage::Stop).unwrap();
        b[4] = 0x0A;
        assert!(matches!(
            decode_message(&b),
            Err(TransportError::Protocol(_))
        ));
    }

    #[test]
    fn long_length_field_is_framing_error() {
        let mut b = encode_message(&FtlMessage::LatentsB {
            z: Matrix::from_rows(&[[1.0]]).unwrap(),
        })
        .unwrap();
        b[5] += 1;
        assert!(matches!(
            decode_message(&b),
            Err(TransportError::Framing(_))
        ));
    }

    #[test]
    fn bad_label_byte_is_rejected() {
        let msg = FtlMessage::LatentsA {
            z: Matrix::zeros(1, 1),
            labels: vec![1],
            prototype: vec![0.5],
        };
        let mut b = encode_message(&msg).unwrap();
        // header (9) + matrix (8 + 8) + label count (4)
        b[9 + 16 + 4] = 0;
        assert!(matches!(
            decode_message(&b),
            Err(TransportError::Protocol(_))
        ));
    }

    #[test]
    fn oversized_payload_is_refused() {
        let mut h = [0u8; HEADER_LEN];
        h[..4].copy_from_slice(&MAGIC);
        h[4] = 0x02;
        h[5..9].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_header(&h), Err(TransportError::Size(_))));
    }
}
