//! From-scratch statistic evaluation over an event prefix.
//!
//! Every call rescans the history. This is the reference against which the
//! incremental [`HistoryState`](super::HistoryState) is checked; it is far
//! too slow for fitting.

use crate::event_data::{ActorTable, Event};

use super::TermId;

fn count(history: &[Event], i: usize, j: usize) -> usize {
    history
        .iter()
        .filter(|e| e.sender == i && e.receiver == j)
        .count()
}

fn rank_among_recent(history: &[Event], j: usize, alter_of: impl Fn(&Event) -> Option<usize>) -> f64 {
    let mut seen: Vec<usize> = Vec::new();
    for e in history.iter().rev() {
        if let Some(alter) = alter_of(e) {
            if !seen.contains(&alter) {
                seen.push(alter);
                if alter == j {
                    return 1.0 / seen.len() as f64;
                }
            }
        }
    }
    0.0
}

fn intermediaries(n: usize, i: usize, j: usize, linked: impl Fn(usize) -> bool) -> f64 {
    (0..n).filter(|&k| k != i && k != j && linked(k)).count() as f64
}

/// Value of `term` for candidate `(i, j)` given the events in `history`.
pub fn term_value(history: &[Event], actors: &ActorTable, i: usize, j: usize, term: TermId) -> f64 {
    let n = actors.len();
    let m = history.len();
    let has = |a: usize, b: usize| count(history, a, b) > 0;
    let last = history.last();
    let pshift = |hit: fn(usize, usize, usize, usize) -> bool| match last {
        Some(e) if hit(e.sender, e.receiver, i, j) => 1.0,
        _ => 0.0,
    };
    match term {
        TermId::NTDegRec => {
            if m == 0 {
                0.0
            } else {
                let volume = history
                    .iter()
                    .filter(|e| e.sender == j || e.receiver == j)
                    .count();
                volume as f64 / (2 * m) as f64
            }
        }
        TermId::FrPSndSnd => {
            let sent = history.iter().filter(|e| e.sender == i).count();
            if sent == 0 {
                0.0
            } else {
                count(history, i, j) as f64 / sent as f64
            }
        }
        TermId::RRecSnd => {
            rank_among_recent(history, j, |e| (e.receiver == i).then_some(e.sender))
        }
        TermId::RSndSnd => rank_among_recent(history, j, |e| (e.sender == i).then_some(e.receiver)),
        TermId::OTPSnd => intermediaries(n, i, j, |k| has(i, k) && has(k, j)),
        TermId::ITPSnd => intermediaries(n, i, j, |k| has(k, i) && has(j, k)),
        TermId::OSPSnd => intermediaries(n, i, j, |k| has(i, k) && has(j, k)),
        TermId::ISPSnd => intermediaries(n, i, j, |k| has(k, i) && has(k, j)),
        TermId::PSABBA => pshift(|a, b, i, j| i == b && j == a),
        TermId::PSABBY => pshift(|a, b, i, j| i == b && j != a && j != b),
        TermId::PSABXA => pshift(|a, b, i, j| j == a && i != a && i != b),
        TermId::PSABXB => pshift(|a, b, i, j| j == b && i != a && i != b),
        TermId::PSABAY => pshift(|a, b, i, j| i == a && j != a && j != b),
        TermId::ICR => (usize::from(actors.icr(i)) + usize::from(actors.icr(j))) as f64,
    }
}

pub fn stat_row(history: &[Event], actors: &ActorTable, i: usize, j: usize, terms: &[TermId]) -> Vec<f64> {
    terms
        .iter()
        .map(|&t| term_value(history, actors, i, j, t))
        .collect()
}
