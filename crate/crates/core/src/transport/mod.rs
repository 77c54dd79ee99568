//! Ordered, reliable duplex channel between the two parties.
//!
//! Two realizations share the [`Channel`] trait: an in-process pair backed by
//! `std::sync::mpsc` and a framed TCP stream. Both carry the exact `FTL1`
//! bytes produced by [`encode_message`], so a run observes the same values
//! whichever one it uses.
//!
//! TCP convention: party A listens, party B dials.

mod frame;
mod tcp;

use std::sync::mpsc;
use std::time::Duration;

pub use frame::{
    decode_frame, decode_header, decode_message, decode_payload, encode_message, FtlMessage,
    MessageKind, HEADER_LEN, MAGIC, MAX_PAYLOAD,
};
pub use tcp::{TcpAcceptor, TcpChannel};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("timed out waiting for a message")]
    Timeout,
    #[error("peer closed the connection")]
    ConnectionClosed,
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("framing error: {0}")]
    Framing(String),
    #[error("payload of {0} bytes exceeds the 2^31-byte limit")]
    Size(usize),
    #[error("unexpected {got:?}, expected {expected}")]
    Unexpected { got: MessageKind, expected: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Labeled source; listens.
    A,
    /// Unlabeled target; dials.
    B,
}

impl Role {
    fn byte(self) -> u8 {
        match self {
            Role::A => b'A',
            Role::B => b'B',
        }
    }
}

/// One endpoint of a party-to-party link.
pub trait Channel: Send {
    /// Sends one full frame.
    fn send(&mut self, msg: &FtlMessage) -> Result<(), TransportError>;

    /// Blocks for the next frame, up to the configured timeout.
    fn recv(&mut self) -> Result<FtlMessage, TransportError>;

    fn set_timeout(&mut self, timeout: Duration);
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn send(&mut self, msg: &FtlMessage) -> Result<(), TransportError> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<FtlMessage, TransportError> {
        (**self).recv()
    }

    fn set_timeout(&mut self, timeout: Duration) {
        (**self).set_timeout(timeout)
    }
}

/// In-process endpoint. Frames are encoded on send and decoded on receive,
/// exactly as over TCP.
pub struct InProcChannel {
    tx: mpsc::Sender<Vec<u8>>,
    rx: mpsc::Receiver<Vec<u8>>,
    timeout: Duration,
}

/// Creates a connected `(A, B)` endpoint pair.
pub fn in_process_pair() -> (InProcChannel, InProcChannel) {
    let (tx_ab, rx_ab) = mpsc::channel();
    let (tx_ba, rx_ba) = mpsc::channel();
    (
        InProcChannel {
            tx: tx_ab,
            rx: rx_ba,
            timeout: DEFAULT_TIMEOUT,
        },
        InProcChannel {
            tx: tx_ba,
            rx: rx_ab,
            timeout: DEFAULT_TIMEOUT,
        },
    )
}

impl Channel for InProcChannel {
    fn send(&mut self, msg: &FtlMessage) -> Result<(), TransportError> {
        let bytes = encode_message(msg)?;
        self.tx
            .send(bytes)
            .map_err(|_| TransportError::ConnectionClosed)
    }

    fn recv(&mut self) -> Result<FtlMessage, TransportError> {
        match self.rx.recv_timeout(self.timeout) {
            Ok(bytes) => decode_message(&bytes),
            Err(mpsc::RecvTimeoutError::Timeout) => Err(TransportError::Timeout),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(TransportError::ConnectionClosed),
        }
    }

    fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }
}

/// Opens the TCP side for `role`: A binds and accepts one peer, B dials
/// (retrying until `timeout` so start order does not matter).
pub fn connect(addr: &str, role: Role, timeout: Duration) -> Result<TcpChannel, TransportError> {
    match role {
        Role::A => TcpAcceptor::bind(addr)?.accept(timeout),
        Role::B => TcpChannel::dial(addr, timeout),
    }
}
