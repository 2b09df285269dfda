//! Central-node protocol loop.
//!
//! Per iteration the coordinator broadcasts (sum of shares - z, y), collects
//! one share frame from every party, reduces them in ascending party order
//! and runs the z and y updates. All protocol math uses the *received*
//! shares. The shards handed in here serve the measurement plane only: the
//! coordinator deterministically replays each party's x-update so the
//! emitted diagnostics match the in-process engine bit for bit — nothing
//! beyond the broadcast ever flows back over the wire.

use nalgebra::DVector;

use super::link::{Link, TransportError};
use super::message::Message;
use crate::dataset::PartyShard;
use crate::engine::{
    center_update, diagnostics, init_state, party_update, sum_vectors, AssumptionReport, DiagnosticsRecord,
    EngineError, EngineState, HyperParams, RunTrace,
};
use crate::objective::{LossProfile, SeparableLoss};
use crate::privacy::GaussianNoise;
use crate::subsolvers::XSolver;

/// Everything the central node needs for a run. `shards` are the parties'
/// blocks, used for diagnostics replay and the assumption report.
pub struct CoordinatorSetup<'a, L: SeparableLoss> {
    pub shards: &'a [PartyShard],
    pub loss: &'a L,
    pub hyper: &'a HyperParams,
    pub ball: Option<f64>,
    pub noise_sigmas: Option<&'a [f64]>,
}

/// Run the coordinator over the given links (any order; registration sorts
/// them by wire party id 1..=M). Emits the same diagnostics trace as
/// [`crate::engine::run`] on identical inputs.
pub fn coordinator_serve<K, L, F>(
    links: Vec<K>,
    setup: &CoordinatorSetup<'_, L>,
    mut on_epoch: F,
) -> Result<RunTrace, TransportError>
where
    K: Link,
    L: SeparableLoss,
    F: FnMut(&EngineState, &DiagnosticsRecord),
{
    let shards = setup.shards;
    let hyper = setup.hyper;
    let n_parties = shards.len();
    let n = shards[0].n_samples();
    assert_eq!(links.len(), n_parties, "one link per party");

    let mut links = register_parties(links, n_parties, n)?;

    let profile = LossProfile { lipschitz: setup.loss.lipschitz(), convex: setup.loss.convex() };
    let assumption: AssumptionReport =
        crate::engine::assumption_check(shards, hyper, &profile).map_err(EngineError::Dataset)?;

    let solvers: Vec<XSolver<'_>> = shards
        .iter()
        .enumerate()
        .map(|(m, s)| XSolver::new(s, hyper.lambda, hyper.rho).map_err(|source| EngineError::Party { party: m, epoch: 1, source }))
        .collect::<Result<_, _>>()?;
    let mut noise: Option<Vec<GaussianNoise>> = setup.noise_sigmas.map(|sigmas| {
        assert_eq!(sigmas.len(), n_parties, "one sigma per party");
        sigmas.iter().enumerate().map(|(m, &s)| GaussianNoise::for_party(s, hyper.seed, m)).collect()
    });

    let mut state = init_state(shards);
    let mut records: Vec<DiagnosticsRecord> = Vec::with_capacity(hyper.max_epochs);
    let mut b1_exceedances = 0usize;
    let mut last_iteration = 0u32;

    for t in 0..hyper.max_epochs {
        let iteration = t as u32 + 1;
        last_iteration = iteration;
        let total = sum_vectors(&state.shares);
        let aggregate = &total - &state.z;
        let broadcast = Message::Broadcast {
            iteration,
            aggregate: aggregate.as_slice().to_vec(),
            dual: state.y.as_slice().to_vec(),
        };
        for link in links.iter_mut() {
            link.send(&broadcast)?;
        }

        let received = collect_shares(&mut links, iteration, n)?;

        // Measurement replay of the party updates; protocol math below uses
        // only the received shares.
        let mut new_x = Vec::with_capacity(n_parties);
        for (m, shard) in shards.iter().enumerate() {
            let party_noise = noise.as_mut().map(|ns| &mut ns[m]);
            let (x, _replayed) = party_update(
                &solvers[m],
                shard,
                &state.shares[m],
                &state.x[m],
                &aggregate,
                &state.y,
                setup.ball,
                party_noise,
            )
            .map_err(|source| EngineError::Party { party: m, epoch: t + 1, source })?;
            new_x.push(x);
        }

        let w = sum_vectors(&received);
        let (z, y) = center_update(setup.loss, &state.y, &w, hyper.rho)
            .map_err(|source| EngineError::Center { epoch: t + 1, source })?;
        state = EngineState { x: new_x, shares: received, z, y, t: t + 1 };

        let record = diagnostics(&state, shards, setup.loss, hyper, setup.ball);
        if let Some(radius) = setup.ball {
            let mut over = state.z.norm() > radius || state.y.norm() > radius;
            over |= state.x.iter().any(|x| x.norm() > radius + 1e-9);
            if over {
                b1_exceedances += 1;
            }
        }
        on_epoch(&state, &record);
        records.push(record);
        if let Some(tol) = hyper.lyapunov_tol {
            if record.lyapunov <= tol {
                break;
            }
        }
    }

    let shutdown = Message::Shutdown { iteration: last_iteration + 1 };
    for link in links.iter_mut() {
        link.send(&shutdown)?;
    }

    Ok(RunTrace { records, final_state: state, assumption, b1_exceedances })
}

/// Consume REGISTER frames, validate ids and sample counts and return the
/// links reordered by wire party id (1..=M), each acknowledged.
fn register_parties<K: Link>(links: Vec<K>, n_parties: usize, n: usize) -> Result<Vec<K>, TransportError> {
    let mut slots: Vec<Option<K>> = (0..n_parties).map(|_| None).collect();
    for mut link in links {
        let msg = link.recv()?;
        match msg {
            Message::Register { party_id, n_samples } => {
                if party_id == 0 || party_id as usize > n_parties {
                    return Err(TransportError::RegistrationRejected(format!(
                        "party id {party_id} outside 1..={n_parties}"
                    )));
                }
                if n_samples as usize != n {
                    return Err(TransportError::RegistrationRejected(format!(
                        "party {party_id} registered {n_samples} samples, coordinator holds {n}"
                    )));
                }
                let slot = &mut slots[party_id as usize - 1];
                if slot.is_some() {
                    return Err(TransportError::RegistrationRejected(format!("party id {party_id} registered twice")));
                }
                *slot = Some(link);
            }
            other => {
                return Err(TransportError::Unexpected {
                    party: 0,
                    expected: "REGISTER",
                    got: kind_name(&other),
                })
            }
        }
    }
    let mut ordered = Vec::with_capacity(n_parties);
    for (idx, slot) in slots.into_iter().enumerate() {
        let mut link = slot.ok_or_else(|| {
            TransportError::RegistrationRejected(format!("party id {} never registered", idx + 1))
        })?;
        link.send(&Message::Ack { party_id: idx as u16 + 1 })?;
        ordered.push(link);
    }
    Ok(ordered)
}

fn collect_shares<K: Link>(links: &mut [K], iteration: u32, n: usize) -> Result<Vec<DVector<f64>>, TransportError> {
    let mut shares = Vec::with_capacity(links.len());
    for (idx, link) in links.iter_mut().enumerate() {
        let wire_id = idx as u16 + 1;
        match link.recv()? {
            Message::PushShare { iteration: got, party_id, share } => {
                if party_id != wire_id {
                    return Err(TransportError::RegistrationRejected(format!(
                        "share from party {party_id} arrived on the link registered to {wire_id}"
                    )));
                }
                if got < iteration {
                    return Err(TransportError::DuplicateShare { party: party_id, iteration: got });
                }
                if got > iteration {
                    return Err(TransportError::OutOfOrder { party: party_id, expected: iteration, got });
                }
                if share.len() != n {
                    return Err(TransportError::LengthMismatch { expected: n, got: share.len() });
                }
                shares.push(DVector::from_vec(share));
            }
            other => {
                return Err(TransportError::Unexpected {
                    party: wire_id,
                    expected: "PUSH_SHARE",
                    got: kind_name(&other),
                })
            }
        }
    }
    Ok(shares)
}

fn kind_name(msg: &Message) -> &'static str {
    match msg {
        Message::Register { .. } => "REGISTER",
        Message::Ack { .. } => "ACK",
        Message::Broadcast { .. } => "BROADCAST",
        Message::PushShare { .. } => "PUSH_SHARE",
        Message::Shutdown { .. } => "SHUTDOWN",
    }
}
