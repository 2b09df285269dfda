//! Coordinator/party message protocol with two interchangeable backends: a
//! deterministic in-process bus and framed TCP. For any configuration and
//! seed the two backends (and the plain in-process engine) produce bitwise
//! identical traces.

pub mod coordinator;
pub mod link;
pub mod message;
pub mod party;
pub mod tcp;

pub use coordinator::{coordinator_serve, CoordinatorSetup};
pub use link::{link_pair, ChannelLink, Link, RecordingLink, TransportError};
pub use message::{decode, encode, Message, MessageKind, ProtocolError};
pub use party::{party_serve, PartySetup};
pub use tcp::{accept_parties, bind_ephemeral, listen_for_parties, TcpLink};
