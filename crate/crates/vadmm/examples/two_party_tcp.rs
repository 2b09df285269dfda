//! The same run three ways: plain in-process engine, coordinator and
//! parties over loopback TCP, and the in-process message bus. All three
//! traces are bit-identical — the wire moves exactly one share vector per
//! party per iteration and nothing else.
//!
//! ```bash
//! cargo run --release --example two_party_tcp
//! ```

use std::time::Duration;

use vadmm::dataset::{relabel, vertical_split, PartitionSpec};
use vadmm::engine::{self, HyperParams};
use vadmm::harness::fixtures::a9a_200;
use vadmm::objective::LogisticLoss;
use vadmm::transport::{
    accept_parties, bind_ephemeral, coordinator_serve, link_pair, party_serve, CoordinatorSetup, PartySetup, TcpLink,
};

const TIMEOUT: Duration = Duration::from_secs(15);

fn main() {
    let pair = a9a_200(1);
    let (train, _) = relabel(&pair.train).unwrap();
    let spec = PartitionSpec::new(vec![66, 57]).unwrap();
    let shards = vertical_split(&train, &spec).unwrap();
    let loss = LogisticLoss::new(train.labels().clone(), 1.0);
    let hyper = HyperParams { rho: 1.0, lambda: 0.02, max_epochs: 12, lyapunov_tol: None, seed: 1 };

    let engine_trace = engine::run(&shards, &loss, &hyper, None, None, |_, _| {}).unwrap();

    // Loopback TCP: one thread per party, coordinator on this thread.
    let (listener, addr) = bind_ephemeral().unwrap();
    println!("coordinator listening on {addr}");
    let mut handles = Vec::new();
    for (idx, shard) in shards.iter().enumerate() {
        let shard = shard.clone();
        let h = hyper;
        handles.push(std::thread::spawn(move || {
            let mut link = TcpLink::connect(addr, TIMEOUT).unwrap();
            party_serve(
                &mut link,
                PartySetup { shard: &shard, wire_id: idx as u16 + 1, lambda: h.lambda, rho: h.rho, ball: None, noise: None },
            )
            .unwrap()
        }));
    }
    let links = accept_parties(&listener, shards.len(), TIMEOUT).unwrap();
    let setup = CoordinatorSetup { shards: &shards, loss: &loss, hyper: &hyper, ball: None, noise_sigmas: None };
    let tcp_trace = coordinator_serve(links, &setup, |_, record| {
        println!("tcp epoch {:2}: objective {:.6} primal {:.3e}", record.t, record.objective, record.primal_residual);
    })
    .unwrap();
    for handle in handles {
        handle.join().unwrap();
    }

    // In-process bus, same protocol code over channels.
    let mut coordinator_links = Vec::new();
    let mut handles = Vec::new();
    for (idx, shard) in shards.iter().enumerate() {
        let (coord_end, mut party_end) = link_pair(TIMEOUT);
        coordinator_links.push(coord_end);
        let shard = shard.clone();
        let h = hyper;
        handles.push(std::thread::spawn(move || {
            party_serve(
                &mut party_end,
                PartySetup { shard: &shard, wire_id: idx as u16 + 1, lambda: h.lambda, rho: h.rho, ball: None, noise: None },
            )
            .unwrap()
        }));
    }
    let bus_trace = coordinator_serve(coordinator_links, &setup, |_, _| {}).unwrap();
    for handle in handles {
        handle.join().unwrap();
    }

    let mut identical = true;
    for ((a, b), c) in engine_trace.records.iter().zip(&tcp_trace.records).zip(&bus_trace.records) {
        identical &= a.objective.to_bits() == b.objective.to_bits()
            && b.objective.to_bits() == c.objective.to_bits()
            && a.lyapunov.to_bits() == b.lyapunov.to_bits()
            && b.lyapunov.to_bits() == c.lyapunov.to_bits();
    }
    println!("\nengine / tcp / bus traces bitwise identical: {identical}");
}
