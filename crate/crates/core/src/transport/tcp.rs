use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use super::frame::{decode_header, decode_payload, encode_message, HEADER_LEN, MAGIC};
use super::{Channel, FtlMessage, Role, TransportError, DEFAULT_TIMEOUT};

const POLL: Duration = Duration::from_millis(10);
const CONNECT_ATTEMPT: Duration = Duration::from_millis(250);

fn map_io(e: io::Error) -> TransportError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => TransportError::Timeout,
        io::ErrorKind::UnexpectedEof
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::BrokenPipe => TransportError::ConnectionClosed,
        _ => TransportError::Io(e),
    }
}

/// Listening side held by party A until the peer dials in.
pub struct TcpAcceptor {
    listener: TcpListener,
}

impl TcpAcceptor {
    pub fn bind(addr: &str) -> Result<Self, TransportError> {
        let listener = TcpListener::bind(addr)?;
        Ok(TcpAcceptor { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, TransportError> {
        Ok(self.listener.local_addr()?)
    }

    /// Waits for one peer and completes the handshake as party A.
    pub fn accept(self, timeout: Duration) -> Result<TcpChannel, TransportError> {
        self.listener.set_nonblocking(true)?;
        let deadline = Instant::now() + timeout;
        let stream = loop {
            match self.listener.accept() {
                Ok((s, _)) => break s,
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(TransportError::Timeout);
                    }
                    thread::sleep(POLL);
                }
                Err(e) => return Err(e.into()),
            }
        };
        stream.set_nonblocking(false)?;
        let mut ch = TcpChannel::wrap(stream, timeout)?;
        ch.expect_hello(Role::B)?;
        ch.send_hello(Role::A)?;
        ch.timeout = DEFAULT_TIMEOUT;
        ch.stream.set_read_timeout(Some(DEFAULT_TIMEOUT))?;
        Ok(ch)
    }
}

/// Framed TCP endpoint.
pub struct TcpChannel {
    stream: TcpStream,
    timeout: Duration,
}

impl TcpChannel {
    fn wrap(stream: TcpStream, timeout: Duration) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        Ok(TcpChannel { stream, timeout })
    }

    /// Dials party A, retrying refused connections until `timeout`.
    pub fn dial(addr: &str, timeout: Duration) -> Result<Self, TransportError> {
        let deadline = Instant::now() + timeout;
        let addrs: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
        let stream = loop {
            let attempt = addrs
                .iter()
                .find_map(|a| TcpStream::connect_timeout(a, CONNECT_ATTEMPT).ok());
            if let Some(s) = attempt {
                break s;
            }
            if Instant::now() >= deadline {
                return Err(TransportError::Timeout);
            }
            thread::sleep(POLL);
        };
        let mut ch = TcpChannel::wrap(stream, timeout)?;
        ch.send_hello(Role::B)?;
        ch.expect_hello(Role::A)?;
        ch.set_timeout(DEFAULT_TIMEOUT);
        Ok(ch)
    }

    fn send_hello(&mut self, role: Role) -> Result<(), TransportError> {
        let mut hello = MAGIC.to_vec();
        hello.push(role.byte());
        self.stream.write_all(&hello).map_err(map_io)?;
        self.stream.flush().map_err(map_io)
    }

    fn expect_hello(&mut self, peer: Role) -> Result<(), TransportError> {
        let mut hello = [0u8; 5];
        self.stream.read_exact(&mut hello).map_err(map_io)?;
        if hello[..4] != MAGIC {
            return Err(TransportError::Handshake(format!(
                "peer greeted with {:02x?}",
                &hello[..4]
            )));
        }
        if hello[4] != peer.byte() {
            return Err(TransportError::Handshake(format!(
                "peer announced role {:?}, expected {:?}",
                hello[4] as char, peer
            )));
        }
        Ok(())
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, msg: &FtlMessage) -> Result<(), TransportError> {
        let bytes = encode_message(msg)?;
        self.stream.write_all(&bytes).map_err(map_io)?;
        self.stream.flush().map_err(map_io)
    }

    fn recv(&mut self) -> Result<FtlMessage, TransportError> {
        let mut header = [0u8; HEADER_LEN];
        self.stream.read_exact(&mut header).map_err(map_io)?;
        let (kind, len) = decode_header(&header)?;
        let mut payload = vec![0u8; len];
        self.stream
            .read_exact(&mut payload)
            .map_err(|e| match map_io(e) {
                TransportError::ConnectionClosed => TransportError::Framing(format!(
                    "connection closed inside a {len}-byte payload"
                )),
                other => other,
            })?;
        decode_payload(kind, &payload)
    }

    fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
        // A zero duration is rejected by the socket API; clamp to 1 µs.
        let t = timeout.max(Duration::from_micros(1));
        let _ = self.stream.set_read_timeout(Some(t));
    }
}
