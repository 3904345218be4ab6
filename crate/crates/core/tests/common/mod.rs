#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rem_core::simulation::simulate_trajectory;
use rem_core::{ActorTable, Event, EventSequence, KnockoutCondition, ModelSpec, TermId};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Actor table with `n` actors, roughly a third of them ICR.
pub fn random_actors(rng: &mut impl Rng, id: &str, n: usize) -> ActorTable {
    let icr: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    ActorTable::synthetic(id, &icr).unwrap()
}

/// Uniform random events, biased towards replies and repeated pairs so that
/// p-shifts, recency and triadic terms all get exercised.
pub fn random_events(rng: &mut impl Rng, n: usize, m: usize) -> Vec<Event> {
    let mut out: Vec<Event> = Vec::with_capacity(m);
    for _ in 0..m {
        let e = match (out.last(), rng.random_range(0..4)) {
            (Some(l), 0) => Event::new(l.receiver, l.sender),
            (Some(l), 1) => {
                let j = loop {
                    let j = rng.random_range(0..n);
                    if j != l.receiver {
                        break j;
                    }
                };
                Event::new(l.receiver, j)
            }
            (Some(_), 2) if out.len() > 2 => out[rng.random_range(0..out.len())],
            _ => {
                let i = rng.random_range(0..n);
                let j = loop {
                    let j = rng.random_range(0..n);
                    if j != i {
                        break j;
                    }
                };
                Event::new(i, j)
            }
        };
        out.push(e);
    }
    out
}

pub fn spec(terms: &[TermId]) -> ModelSpec {
    ModelSpec::new(terms.to_vec()).unwrap()
}

/// Events drawn from the model at fixed coefficients.
pub fn simulate(actors: &ActorTable, spec: &ModelSpec, theta: &[f64], m: usize, seed: u64) -> EventSequence {
    let t = simulate_trajectory(theta, spec, actors, m, &KnockoutCondition::full(), seed).unwrap();
    EventSequence::new(actors, t.events).unwrap()
}

/// Independent log-likelihood: direct softmax over from-scratch statistics.
pub fn naive_log_lik(actors: &ActorTable, events: &[Event], terms: &[TermId], theta: &[f64]) -> f64 {
    let n = actors.len();
    let mut total = 0.0;
    for (t, e) in events.iter().enumerate() {
        let history = &events[..t];
        let mut etas = Vec::new();
        let mut obs = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let row = rem_core::statistics::naive::stat_row(history, actors, i, j, terms);
                let eta: f64 = row.iter().zip(theta).map(|(u, b)| u * b).sum();
                if i == e.sender && j == e.receiver {
                    obs = eta;
                }
                etas.push(eta);
            }
        }
        let max = etas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + etas.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += obs - lse;
    }
    total
}
