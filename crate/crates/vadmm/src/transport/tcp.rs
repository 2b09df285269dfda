//! Framed TCP backend.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::link::{Link, TransportError};
use super::message::{decode, encode, Message};

/// One framed TCP connection with a read deadline.
pub struct TcpLink {
    stream: TcpStream,
    buf: Vec<u8>,
    timeout: Duration,
}

impl TcpLink {
    pub fn from_stream(stream: TcpStream, timeout: Duration) -> Result<Self, TransportError> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        Ok(Self { stream, buf: Vec::new(), timeout })
    }

    /// Connect to a coordinator, retrying until it starts listening or the
    /// deadline passes.
    pub fn connect<A: ToSocketAddrs + Clone>(addr: A, timeout: Duration) -> Result<Self, TransportError> {
        let deadline = Instant::now() + timeout;
        loop {
            match TcpStream::connect(addr.clone()) {
                Ok(stream) => return Self::from_stream(stream, timeout),
                Err(err) => {
                    if Instant::now() >= deadline {
                        return Err(TransportError::Io(err));
                    }
                    std::thread::sleep(Duration::from_millis(20));
                }
            }
        }
    }
}

impl Link for TcpLink {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.stream.write_all(&encode(msg))?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let mut chunk = [0u8; 64 * 1024];
        loop {
            if let Some((msg, used)) = decode(&self.buf)? {
                self.buf.drain(..used);
                return Ok(msg);
            }
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(TransportError::Closed),
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(err) if err.kind() == ErrorKind::WouldBlock || err.kind() == ErrorKind::TimedOut => {
                    return Err(TransportError::Timeout(self.timeout))
                }
                Err(err) => return Err(TransportError::Io(err)),
            }
        }
    }
}

/// Bind `addr` and accept exactly `n_parties` connections within the
/// deadline. Returned links are in accept order; registration sorts them.
pub fn listen_for_parties<A: ToSocketAddrs>(
    addr: A,
    n_parties: usize,
    timeout: Duration,
) -> Result<Vec<TcpLink>, TransportError> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    let mut links = Vec::with_capacity(n_parties);
    while links.len() < n_parties {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                links.push(TcpLink::from_stream(stream, timeout)?);
            }
            Err(err) if err.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(TransportError::Timeout(timeout));
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(err) => return Err(TransportError::Io(err)),
        }
    }
    Ok(links)
}

/// Bind an ephemeral local port and return (listener address, links future).
/// Convenience for loopback tests and examples.
pub fn bind_ephemeral() -> Result<(TcpListener, std::net::SocketAddr), TransportError> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    Ok((listener, addr))
}

/// Accept parties on an already-bound listener (same contract as
/// [`listen_for_parties`]).
pub fn accept_parties(
    listener: &TcpListener,
    n_parties: usize,
    timeout: Duration,
) -> Result<Vec<TcpLink>, TransportError> {
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    let mut links = Vec::with_capacity(n_parties);
    while links.len() < n_parties {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                links.push(TcpLink::from_stream(stream, timeout)?);
            }
            Err(err) if err.kind() == ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    return Err(TransportError::Timeout(timeout));
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(err) => return Err(TransportError::Io(err)),
        }
    }
    Ok(links)
}
