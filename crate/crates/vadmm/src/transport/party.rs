//! Party-side protocol loop.
//!
//! Each iteration: pull the broadcast (aggregate, dual), recover the
//! coupling term by subtracting the locally cached share (the one-vector
//! communication trick), solve the x subproblem, cache and push the new
//! share. The model block x_m never leaves this function except as the
//! return value to the local caller.

use nalgebra::DVector;

use super::link::{Link, TransportError};
use super::message::Message;
use crate::dataset::PartyShard;
use crate::engine::{party_update, EngineError};
use crate::privacy::GaussianNoise;
use crate::subsolvers::XSolver;

pub struct PartySetup<'a> {
    pub shard: &'a PartyShard,
    /// Wire id, 1-based (0 is the coordinator).
    pub wire_id: u16,
    pub lambda: f64,
    pub rho: f64,
    pub ball: Option<f64>,
    pub noise: Option<GaussianNoise>,
}

/// Serve one party until the coordinator shuts the run down; returns the
/// final local model block.
pub fn party_serve<K: Link>(link: &mut K, setup: PartySetup<'_>) -> Result<DVector<f64>, TransportError> {
    let shard = setup.shard;
    let n = shard.n_samples();
    link.send(&Message::Register { party_id: setup.wire_id, n_samples: n as u64 })?;
    match link.recv()? {
        Message::Ack { party_id } if party_id == setup.wire_id => {}
        Message::Ack { party_id } => {
            return Err(TransportError::RegistrationRejected(format!(
                "acknowledged as party {party_id}, expected {}",
                setup.wire_id
            )))
        }
        other => {
            return Err(TransportError::Unexpected {
                party: 0,
                expected: "ACK",
                got: match other {
                    Message::Register { .. } => "REGISTER",
                    Message::Broadcast { .. } => "BROADCAST",
                    Message::PushShare { .. } => "PUSH_SHARE",
                    Message::Shutdown { .. } => "SHUTDOWN",
                    Message::Ack { .. } => unreachable!(),
                },
            })
        }
    }

    let solver = XSolver::new(shard, setup.lambda, setup.rho)
        .map_err(|source| EngineError::Party { party: setup.wire_id as usize - 1, epoch: 1, source })?;
    let mut noise = setup.noise;
    let mut x = DVector::<f64>::zeros(shard.width());
    let mut cached_share = DVector::<f64>::zeros(n);
    let mut expected = 1u32;

    loop {
        match link.recv()? {
            Message::Broadcast { iteration, aggregate, dual } => {
                if iteration != expected {
                    return Err(TransportError::OutOfOrder { party: 0, expected, got: iteration });
                }
                if aggregate.len() != n || dual.len() != n {
                    return Err(TransportError::LengthMismatch { expected: n, got: aggregate.len() });
                }
                let aggregate = DVector::from_vec(aggregate);
                let dual = DVector::from_vec(dual);
                let (new_x, new_share) =
                    party_update(&solver, shard, &cached_share, &x, &aggregate, &dual, setup.ball, noise.as_mut())
                        .map_err(|source| EngineError::Party {
                            party: setup.wire_id as usize - 1,
                            epoch: iteration as usize,
                            source,
                        })?;
                link.send(&Message::PushShare {
                    iteration,
                    party_id: setup.wire_id,
                    share: new_share.as_slice().to_vec(),
                })?;
                x = new_x;
                cached_share = new_share;
                expected += 1;
            }
            Message::Shutdown { .. } => return Ok(x),
            other => {
                return Err(TransportError::Unexpected {
                    party: 0,
                    expected: "BROADCAST or SHUTDOWN",
                    got: match other {
                        Message::Register { .. } => "REGISTER",
                        Message::Ack { .. } => "ACK",
                        Message::PushShare { .. } => "PUSH_SHARE",
                        Message::Broadcast { .. } | Message::Shutdown { .. } => unreachable!(),
                    },
                })
            }
        }
    }
}
