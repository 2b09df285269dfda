//! Wire-level protocol unit between the coordinator and the parties.
//!
//! Every message travels as one frame:
//!
//! ```text
//! +-------+---------+------+-----------+----------+-------------+---------+
//! | magic | version | kind | iteration | party_id | payload_len | payload |
//! | 2 B   | 1 B     | 1 B  | 4 B LE    | 2 B LE   | 4 B LE      | n B     |
//! +-------+---------+------+-----------+----------+-------------+---------+
//! ```
//!
//! The payload is a concatenation of IEEE-754 doubles, little-endian; how
//! many vectors it holds is implied by the kind (BROADCAST carries two
//! equal-length vectors, PUSH_SHARE one, REGISTER one length-1 vector with
//! the party's sample count, ACK and SHUTDOWN none). `party_id` 0 is the
//! coordinator; parties use 1..=M on the wire.

use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x56, 0x41];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;
/// Upper bound on a sane payload; anything above is a corrupt frame.
const MAX_PAYLOAD: u32 = 1 << 30;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("bad magic bytes {found:02x?}")]
    BadMagic { found: [u8; 2] },
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message kind {0}")]
    BadKind(u8),
    #[error("payload length {len} invalid for kind {kind:?}: {reason}")]
    BadLength { kind: MessageKind, len: u32, reason: &'static str },
    #[error("register payload must hold a nonnegative integral sample count")]
    BadRegisterPayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Register = 1,
    Ack = 2,
    Broadcast = 3,
    PushShare = 4,
    Shutdown = 5,
}

impl MessageKind {
    fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Self::Register),
            2 => Some(Self::Ack),
            3 => Some(Self::Broadcast),
            4 => Some(Self::PushShare),
            5 => Some(Self::Shutdown),
            _ => None,
        }
    }
}

/// Decoded protocol message. Vector payloads are plain `Vec<f64>` so that
/// encode/decode round-trips are bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Register { party_id: u16, n_samples: u64 },
    Ack { party_id: u16 },
    Broadcast { iteration: u32, aggregate: Vec<f64>, dual: Vec<f64> },
    PushShare { iteration: u32, party_id: u16, share: Vec<f64> },
    Shutdown { iteration: u32 },
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Register { .. } => MessageKind::Register,
            Message::Ack { .. } => MessageKind::Ack,
            Message::Broadcast { .. } => MessageKind::Broadcast,
            Message::PushShare { .. } => MessageKind::PushShare,
            Message::Shutdown { .. } => MessageKind::Shutdown,
        }
    }

    pub fn iteration(&self) -> u32 {
        match self {
            Message::Register { .. } | Message::Ack { .. } => 0,
            Message::Broadcast { iteration, .. }
            | Message::PushShare { iteration, .. }
            | Message::Shutdown { iteration } => *iteration,
        }
    }
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let (kind, iteration, party_id) = match msg {
        Message::Register { party_id, .. } => (MessageKind::Register, 0u32, *party_id),
        Message::Ack { party_id } => (MessageKind::Ack, 0, *party_id),
        Message::Broadcast { iteration, .. } => (MessageKind::Broadcast, *iteration, 0),
        Message::PushShare { iteration, party_id, .. } => (MessageKind::PushShare, *iteration, *party_id),
        Message::Shutdown { iteration } => (MessageKind::Shutdown, *iteration, 0),
    };
    let mut payload: Vec<u8> = Vec::new();
    match msg {
        Message::Register { n_samples, .. } => put_f64s(&mut payload, &[*n_samples as f64]),
        Message::Ack { .. } | Message::Shutdown { .. } => {}
        Message::Broadcast { aggregate, dual, .. } => {
            debug_assert_eq!(aggregate.len(), dual.len());
            put_f64s(&mut payload, aggregate);
            put_f64s(&mut payload, dual);
        }
        Message::PushShare { share, .. } => put_f64s(&mut payload, share),
    }

    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&MAGIC);
    frame.push(VERSION);
    frame.push(kind as u8);
    frame.extend_from_slice(&iteration.to_le_bytes());
    frame.extend_from_slice(&party_id.to_le_bytes());
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.extend_from_slice(&payload);
    frame
}

fn put_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn get_f64s(buf: &[u8]) -> Vec<f64> {
    buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

/// Try to decode one frame from the front of `buf`.
///
/// Returns `Ok(None)` when the buffer holds only a prefix of a frame (read
/// more and retry), `Ok(Some((message, consumed)))` on success, and a
/// [`ProtocolError`] for malformed input. Never panics on arbitrary bytes.
pub fn decode(buf: &[u8]) -> Result<Option<(Message, usize)>, ProtocolError> {
    if buf.len() < HEADER_LEN {
        return Ok(None);
    }
    let magic = [buf[0], buf[1]];
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic { found: magic });
    }
    if buf[2] != VERSION {
        return Err(ProtocolError::BadVersion(buf[2]));
    }
    let kind = MessageKind::from_u8(buf[3]).ok_or(ProtocolError::BadKind(buf[3]))?;
    let iteration = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    let party_id = u16::from_le_bytes(buf[8..10].try_into().unwrap());
    let payload_len = u32::from_le_bytes(buf[10..14].try_into().unwrap());
    if payload_len % 8 != 0 {
        return Err(ProtocolError::BadLength { kind, len: payload_len, reason: "not a multiple of 8" });
    }
    if payload_len > MAX_PAYLOAD {
        return Err(ProtocolError::BadLength { kind, len: payload_len, reason: "exceeds frame cap" });
    }
    let total = HEADER_LEN + payload_len as usize;
    if buf.len() < total {
        return Ok(None);
    }
    let payload = &buf[HEADER_LEN..total];

    let msg = match kind {
        MessageKind::Register => {
            if payload_len != 8 {
                return Err(ProtocolError::BadLength { kind, len: payload_len, reason: "expected one value" });
            }
            let raw = f64::from_le_bytes(payload.try_into().unwrap());
            if !(raw.is_finite() && raw >= 0.0 && raw.fract() == 0.0 && raw <= u64::MAX as f64) {
                return Err(ProtocolError::BadRegisterPayload);
            }
            Message::Register { party_id, n_samples: raw as u64 }
        }
        MessageKind::Ack => {
            if payload_len != 0 {
                return Err(ProtocolError::BadLength { kind, len: payload_len, reason: "expected empty payload" });
            }
            Message::Ack { party_id }
        }
        MessageKind::Broadcast => {
            let count = (payload_len / 8) as usize;
            if count % 2 != 0 {
                return Err(ProtocolError::BadLength { kind, len: payload_len, reason: "expected two equal vectors" });
            }
            let half = count / 2 * 8;
            Message::Broadcast {
                iteration,
                aggregate: get_f64s(&payload[..half]),
                dual: get_f64s(&payload[half..]),
            }
        }
        MessageKind::PushShare => Message::PushShare { iteration, party_id, share: get_f64s(payload) },
        MessageKind::Shutdown => {
            if payload_len != 0 {
                return Err(ProtocolError::BadLength { kind, len: payload_len, reason: "expected empty payload" });
            }
            Message::Shutdown { iteration }
        }
    };
    Ok(Some((msg, total)))
}
