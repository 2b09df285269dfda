//! Message links: the trait both backends implement, the deterministic
//! in-process bus, and a frame-recording wrapper for leakage tests.
//!
//! Both backends move *encoded* frames, so the codec is on the path either
//! way and the TCP and bus runs see byte-identical traffic.

use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use thiserror::Error;

use super::message::{decode, encode, Message, ProtocolError};
use crate::engine::EngineError;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("timed out after {0:?} waiting for a frame")]
    Timeout(Duration),
    #[error("peer closed the connection")]
    Closed,
    #[error("registration rejected: {0}")]
    RegistrationRejected(String),
    #[error("duplicate share from party {party} for iteration {iteration}")]
    DuplicateShare { party: u16, iteration: u32 },
    #[error("out-of-order message from party {party}: expected iteration {expected}, got {got}")]
    OutOfOrder { party: u16, expected: u32, got: u32 },
    #[error("unexpected {got} frame from party {party} while waiting for {expected}")]
    Unexpected { party: u16, expected: &'static str, got: &'static str },
    #[error("payload length {got} does not match the registered sample count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A bidirectional, ordered, reliable message channel to one peer.
pub trait Link {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Message, TransportError>;
}

/// In-process bus endpoint carrying encoded frames over channels.
pub struct ChannelLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Duration,
}

/// Connected pair of bus endpoints.
pub fn link_pair(timeout: Duration) -> (ChannelLink, ChannelLink) {
    let (atx, brx) = std::sync::mpsc::channel();
    let (btx, arx) = std::sync::mpsc::channel();
    (ChannelLink { tx: atx, rx: arx, timeout }, ChannelLink { tx: btx, rx: brx, timeout })
}

impl Link for ChannelLink {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.tx.send(encode(msg)).map_err(|_| TransportError::Closed)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let frame = match self.rx.recv_timeout(self.timeout) {
            Ok(f) => f,
            Err(RecvTimeoutError::Timeout) => return Err(TransportError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(TransportError::Closed),
        };
        match decode(&frame)? {
            Some((msg, used)) if used == frame.len() => Ok(msg),
            _ => Err(TransportError::Protocol(ProtocolError::BadLength {
                kind: super::message::MessageKind::Ack,
                len: frame.len() as u32,
                reason: "bus frame did not decode to exactly one message",
            })),
        }
    }
}

/// Wraps a link and keeps a copy of every encoded frame that crosses it.
/// Test instrumentation for asserting what actually leaves a party.
pub struct RecordingLink<L: Link> {
    inner: L,
    pub sent: Vec<Vec<u8>>,
    pub received: Vec<Vec<u8>>,
}

impl<L: Link> RecordingLink<L> {
    pub fn new(inner: L) -> Self {
        Self { inner, sent: Vec::new(), received: Vec::new() }
    }

    pub fn sent_messages(&self) -> Vec<Message> {
        self.sent.iter().map(|f| decode(f).unwrap().unwrap().0).collect()
    }
}

impl<L: Link> Link for RecordingLink<L> {
    fn send(&mut self, msg: &Message) -> Result<(), TransportError> {
        self.sent.push(encode(msg));
        self.inner.send(msg)
    }

    fn recv(&mut self) -> Result<Message, TransportError> {
        let msg = self.inner.recv()?;
        self.received.push(encode(&msg));
        Ok(msg)
    }
}
