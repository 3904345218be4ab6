//! Event-history statistics.
//!
//! [`HistoryState`] accumulates the past of one event sequence and answers
//! statistic queries for any candidate dyad in O(1). The [`naive`] module
//! recomputes the same quantities directly from an event prefix and serves as
//! the reference implementation in tests.

pub mod naive;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{RemError, Result};
use crate::event_data::{ActorTable, Event};
use crate::inference::ModelSpec;

/// Model terms, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TermId {
    NTDegRec,
    FrPSndSnd,
    RRecSnd,
    RSndSnd,
    OTPSnd,
    ITPSnd,
    OSPSnd,
    ISPSnd,
    PSABBA,
    PSABBY,
    PSABXA,
    PSABXB,
    PSABAY,
    ICR,
}

impl TermId {
    pub const ALL: [TermId; 14] = [
        TermId::NTDegRec,
        TermId::FrPSndSnd,
        TermId::RRecSnd,
        TermId::RSndSnd,
        TermId::OTPSnd,
        TermId::ITPSnd,
        TermId::OSPSnd,
        TermId::ISPSnd,
        TermId::PSABBA,
        TermId::PSABBY,
        TermId::PSABXA,
        TermId::PSABXB,
        TermId::PSABAY,
        TermId::ICR,
    ];

    pub const PSHIFTS: [TermId; 5] = [
        TermId::PSABBA,
        TermId::PSABBY,
        TermId::PSABXA,
        TermId::PSABXB,
        TermId::PSABAY,
    ];

    /// Serialization name used in every output file.
    pub fn name(self) -> &'static str {
        match self {
            TermId::NTDegRec => "NTDegRec",
            TermId::FrPSndSnd => "FrPSndSnd",
            TermId::RRecSnd => "RRecSnd",
            TermId::RSndSnd => "RSndSnd",
            TermId::OTPSnd => "OTPSnd",
            TermId::ITPSnd => "ITPSnd",
            TermId::OSPSnd => "OSPSnd",
            TermId::ISPSnd => "ISPSnd",
            TermId::PSABBA => "PSAB-BA",
            TermId::PSABBY => "PSAB-BY",
            TermId::PSABXA => "PSAB-XA",
            TermId::PSABXB => "PSAB-XB",
            TermId::PSABAY => "PSAB-AY",
            TermId::ICR => "ICR",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_pshift(self) -> bool {
        TermId::PSHIFTS.contains(&self)
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TermId {
    type Err = RemError;

    /// Accepts the canonical names and the hyphen-free p-shift spellings.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        TermId::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s || t.name().replace('-', "") == s)
            .ok_or_else(|| RemError::UnknownTerm(s.to_string()))
    }
}

impl Serialize for TermId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for TermId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Received,
    Sent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Triad {
    Otp,
    Itp,
    Osp,
    Isp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PShift {
    AbBa,
    AbBy,
    AbXa,
    AbXb,
    AbAy,
}

impl PShift {
    /// Indicator for candidate `(i, j)` following `last`.
    pub fn holds(self, last: Event, i: usize, j: usize) -> bool {
        let (a, b) = (last.sender, last.receiver);
        match self {
            PShift::AbBa => i == b && j == a,
            PShift::AbBy => i == b && j != a && j != b,
            PShift::AbXa => j == a && i != a && i != b,
            PShift::AbXb => j == b && i != a && i != b,
            PShift::AbAy => i == a && j != a && j != b,
        }
    }
}

/// Sufficient statistics of an event history.
///
/// Square matrices are stored row-major as `n * n` vectors indexed by
/// `sender * n + receiver`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryState {
    n: usize,
    dyad_count: Vec<u32>,
    out_degree: Vec<u32>,
    in_degree: Vec<u32>,
    recency_in: Vec<Vec<usize>>,
    recency_out: Vec<Vec<usize>>,
    // 1-based position of an alter in the recency lists, 0 when absent
    rank_in: Vec<u32>,
    rank_out: Vec<u32>,
    // distinct-intermediary counts on the binarized history
    otp: Vec<u32>,
    osp: Vec<u32>,
    isp: Vec<u32>,
    last_event: Option<Event>,
    n_past_events: usize,
}

impl HistoryState {
    pub fn new(n_actors: usize) -> Self {
        let sq = n_actors * n_actors;
        HistoryState {
            n: n_actors,
            dyad_count: vec![0; sq],
            out_degree: vec![0; n_actors],
            in_degree: vec![0; n_actors],
            recency_in: vec![Vec::new(); n_actors],
            recency_out: vec![Vec::new(); n_actors],
            rank_in: vec![0; sq],
            rank_out: vec![0; sq],
            otp: vec![0; sq],
            osp: vec![0; sq],
            isp: vec![0; sq],
            last_event: None,
            n_past_events: 0,
        }
    }

    /// State after replaying `events` from an empty history.
    pub fn replay(n_actors: usize, events: &[Event]) -> Result<Self> {
        let mut s = HistoryState::new(n_actors);
        for &e in events {
            s.update(e)?;
        }
        Ok(s)
    }

    pub fn n_actors(&self) -> usize {
        self.n
    }

    pub fn n_past_events(&self) -> usize {
        self.n_past_events
    }

    pub fn last_event(&self) -> Option<Event> {
        self.last_event
    }

    pub fn dyad_count(&self, i: usize, j: usize) -> u32 {
        self.dyad_count[i * self.n + j]
    }

    pub fn out_degree(&self, i: usize) -> u32 {
        self.out_degree[i]
    }

    pub fn in_degree(&self, i: usize) -> u32 {
        self.in_degree[i]
    }

    /// Distinct actors that have sent to `i`, most recent first.
    pub fn recency_in(&self, i: usize) -> &[usize] {
        &self.recency_in[i]
    }

    /// Distinct actors that `i` has sent to, most recent first.
    pub fn recency_out(&self, i: usize) -> &[usize] {
        &self.recency_out[i]
    }

    fn check_actor(&self, a: usize) -> Result<()> {
        if a < self.n {
            Ok(())
        } else {
            Err(RemError::ActorOutOfRange(a))
        }
    }

    /// Appends one event to the history.
    pub fn update(&mut self, event: Event) -> Result<()> {
        let Event {
            sender: a,
            receiver: b,
        } = event;
        self.check_actor(a)?;
        self.check_actor(b)?;
        if a == b {
            return Err(RemError::SelfLoopDyad(a));
        }
        let n = self.n;
        if self.dyad_count[a * n + b] == 0 {
            self.add_edge(a, b);
        }
        self.dyad_count[a * n + b] += 1;
        self.out_degree[a] += 1;
        self.in_degree[b] += 1;
        move_to_front(&mut self.recency_out[a], &mut self.rank_out[a * n..(a + 1) * n], b);
        move_to_front(&mut self.recency_in[b], &mut self.rank_in[b * n..(b + 1) * n], a);
        self.last_event = Some(event);
        self.n_past_events += 1;
        Ok(())
    }

    // Triadic counts gained when a -> b first appears in the binarized graph.
    fn add_edge(&mut self, a: usize, b: usize) {
        let n = self.n;
        for k in 0..n {
            // b -> k closes a -> b -> k
            if k != a && self.dyad_count[b * n + k] > 0 {
                self.otp[a * n + k] += 1;
            }
            // k -> a closes k -> a -> b
            if k != b && self.dyad_count[k * n + a] > 0 {
                self.otp[k * n + b] += 1;
            }
            // k -> b: a and k share out-partner b
            if k != a && self.dyad_count[k * n + b] > 0 {
                self.osp[a * n + k] += 1;
                self.osp[k * n + a] += 1;
            }
            // a -> k: b and k share in-partner a
            if k != b && self.dyad_count[a * n + k] > 0 {
                self.isp[b * n + k] += 1;
                self.isp[k * n + b] += 1;
            }
        }
    }

    /// Receiver's share of all past sending and receiving volume.
    pub fn ntdegrec(&self, j: usize) -> f64 {
        if self.n_past_events == 0 {
            return 0.0;
        }
        f64::from(self.in_degree[j] + self.out_degree[j]) / (2 * self.n_past_events) as f64
    }

    /// Fraction of `i`'s past sends that went to `j`.
    pub fn persistence(&self, i: usize, j: usize) -> f64 {
        let out = self.out_degree[i];
        if out == 0 {
            return 0.0;
        }
        f64::from(self.dyad_count[i * self.n + j]) / f64::from(out)
    }

    /// Inverse rank of `j` among `i`'s distinct past in- or out-alters.
    pub fn recency(&self, i: usize, j: usize, direction: Direction) -> f64 {
        let rank = match direction {
            Direction::Received => self.rank_in[i * self.n + j],
            Direction::Sent => self.rank_out[i * self.n + j],
        };
        if rank == 0 {
            0.0
        } else {
            1.0 / f64::from(rank)
        }
    }

    pub fn triadic(&self, i: usize, j: usize, kind: Triad) -> f64 {
        let n = self.n;
        let count = match kind {
            Triad::Otp => self.otp[i * n + j],
            Triad::Itp => self.otp[j * n + i],
            Triad::Osp => self.osp[i * n + j],
            Triad::Isp => self.isp[i * n + j],
        };
        f64::from(count)
    }

    pub fn pshift(&self, i: usize, j: usize, kind: PShift) -> f64 {
        match self.last_event {
            Some(last) if kind.holds(last, i, j) => 1.0,
            _ => 0.0,
        }
    }

    /// Value of one term for candidate `(i, j)`. Does not check `i != j`.
    pub fn term_value(&self, actors: &ActorTable, i: usize, j: usize, term: TermId) -> f64 {
        match term {
            TermId::NTDegRec => self.ntdegrec(j),
            TermId::FrPSndSnd => self.persistence(i, j),
            TermId::RRecSnd => self.recency(i, j, Direction::Received),
            TermId::RSndSnd => self.recency(i, j, Direction::Sent),
            TermId::OTPSnd => self.triadic(i, j, Triad::Otp),
            TermId::ITPSnd => self.triadic(i, j, Triad::Itp),
            TermId::OSPSnd => self.triadic(i, j, Triad::Osp),
            TermId::ISPSnd => self.triadic(i, j, Triad::Isp),
            TermId::PSABBA => self.pshift(i, j, PShift::AbBa),
            TermId::PSABBY => self.pshift(i, j, PShift::AbBy),
            TermId::PSABXA => self.pshift(i, j, PShift::AbXa),
            TermId::PSABXB => self.pshift(i, j, PShift::AbXb),
            TermId::PSABAY => self.pshift(i, j, PShift::AbAy),
            TermId::ICR => stat_icr(actors, i, j),
        }
    }

    /// Writes the statistics of `terms` for `(i, j)` into `out`.
    pub fn fill_row(&self, actors: &ActorTable, i: usize, j: usize, terms: &[TermId], out: &mut [f64]) {
        for (slot, &t) in out.iter_mut().zip(terms) {
            *slot = self.term_value(actors, i, j, t);
        }
    }
}

fn move_to_front(list: &mut Vec<usize>, ranks: &mut [u32], alter: usize) {
    let old = ranks[alter] as usize;
    let end = if old == 0 { list.len() } else { old - 1 };
    for &other in &list[..end] {
        ranks[other] += 1;
    }
    if old == 0 {
        list.insert(0, alter);
    } else {
        list[..old].rotate_right(1);
    }
    ranks[alter] = 1;
}

/// Number of ICR actors among sender and receiver.
pub fn stat_icr(actors: &ActorTable, i: usize, j: usize) -> f64 {
    f64::from(u8::from(actors.icr(i)) + u8::from(actors.icr(j)))
}

/// Statistic values of one candidate dyad, aligned with a model's terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatVector {
    terms: Vec<TermId>,
    values: Vec<f64>,
}

impl StatVector {
    pub fn get(&self, term: TermId) -> Option<f64> {
        self.terms
            .iter()
            .position(|&t| t == term)
            .map(|k| self.values[k])
    }

    pub fn terms(&self) -> &[TermId] {
        &self.terms
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn stat_vector(
    state: &HistoryState,
    actors: &ActorTable,
    i: usize,
    j: usize,
    spec: &ModelSpec,
) -> Result<StatVector> {
    state.check_actor(i)?;
    state.check_actor(j)?;
    if i == j {
        return Err(RemError::SelfLoopDyad(i));
    }
    let terms = spec.terms().to_vec();
    let mut values = vec![0.0; terms.len()];
    state.fill_row(actors, i, j, &terms, &mut values);
    Ok(StatVector { terms, values })
}

/// Canonical dyad numbering: senders in actor order, then receivers,
/// skipping the diagonal.
pub fn dyad_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i != j);
    i * (n - 1) + if j < i { j } else { j - 1 }
}

pub fn dyad_at(n: usize, d: usize) -> (usize, usize) {
    let i = d / (n - 1);
    let r = d % (n - 1);
    (i, if r < i { r } else { r + 1 })
}
