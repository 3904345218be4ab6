//! Writes a synthetic 17-network corpus with the sizes of the WTC radio
//! networks (actors, events, ICR counts, specialization), with events drawn
//! from a fixed model.
//!
//! Usage: cargo run -p rem-core --example make_fixtures [OUT_DIR]

use std::path::PathBuf;

use rem_core::event_data::{write_network_meta, write_networks_csv};
use rem_core::simulation::{derive_seed, simulate_trajectory};
use rem_core::{Actor, ActorTable, EventSequence, KnockoutCondition, ModelSpec, Network, TermId};

const NETWORKS: [(&str, usize, usize, usize, bool); 17] = [
    ("Newark Maintenance", 27, 77, 1, false),
    ("PATH Radio Comm", 32, 70, 2, false),
    ("WTC Operations", 130, 562, 2, false),
    ("Newark Operations Terminals", 138, 1012, 6, false),
    ("PATH Control Desk", 229, 1066, 16, false),
    ("Newark Facility Management", 237, 1100, 7, false),
    ("WTC Vertical Trans", 246, 780, 3, false),
    ("WTC Maintenance Electric", 256, 864, 16, false),
    ("Newark Police", 24, 83, 2, true),
    ("NJSPEN 2", 32, 149, 5, true),
    ("WTC Police", 37, 481, 3, true),
    ("Newark CPD", 50, 271, 8, true),
    ("PATH Police", 93, 689, 3, true),
    ("Newark Command", 111, 320, 3, true),
    ("WTC Security", 118, 582, 12, true),
    ("NJSPEN 1", 166, 575, 15, true),
    ("Lincoln Tunnel Police", 229, 1145, 10, true),
];

const MASTER_SEED: u64 = 20010911;

fn main() -> rem_core::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"));
    std::fs::create_dir_all(&out).map_err(|e| rem_core::RemError::Io {
        path: out.clone(),
        source: e,
    })?;
    let spec = ModelSpec::new(vec![
        TermId::NTDegRec,
        TermId::RRecSnd,
        TermId::RSndSnd,
        TermId::PSABBA,
        TermId::PSABAY,
        TermId::ICR,
    ])?;
    let theta = [4.0, 1.5, 1.0, 3.5, 1.5, 1.0];
    let mut networks = Vec::new();
    for (k, &(name, n, m, n_icr, specialist)) in NETWORKS.iter().enumerate() {
        let actors: Vec<Actor> = (0..n)
            .map(|a| Actor {
                actor_id: format!("A{:03}", a + 1),
                icr: a * n_icr % n < n_icr,
            })
            .collect();
        let actors = ActorTable::new(name, actors)?;
        assert_eq!(actors.n_icr(), n_icr, "{name}");
        let seed = derive_seed(MASTER_SEED, &[k as u64]);
        let t = simulate_trajectory(&theta, &spec, &actors, m, &KnockoutCondition::full(), seed)?;
        let events = EventSequence::new(&actors, t.events)?;
        networks.push(Network {
            actors,
            events,
            specialist: Some(specialist),
        });
        eprintln!("{name}: {n} actors, {m} events");
    }
    write_networks_csv(&out.join("events.csv"), &out.join("actors.csv"), &networks)?;
    write_network_meta(&out.join("meta.csv"), &networks)?;
    Ok(())
}
