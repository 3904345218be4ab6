//! Dyadic event sequences and actor tables.
//!
//! Networks are read from two CSV files (or one JSON document) and validated
//! up front. After loading, actors are addressed by their position in the
//! actor table; that position is the canonical actor index used everywhere
//! else (dyad ordering, tie-breaking, output order).
//!
//! CSV layouts:
//!
//! ```text
//! network_id,order,sender,receiver
//! network_id,actor_id,icr
//! ```
//!
//! Lines starting with `#` are treated as comments.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{RemError, Result};

pub const EVENTS_HEADER: [&str; 4] = ["network_id", "order", "sender", "receiver"];
pub const ACTORS_HEADER: [&str; 3] = ["network_id", "actor_id", "icr"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub actor_id: String,
    pub icr: bool,
}

/// The fixed set of communicants of one network. This is the risk set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorTable {
    network_id: String,
    actors: Vec<Actor>,
    index: HashMap<String, usize>,
}

impl ActorTable {
    pub fn new(network_id: impl Into<String>, actors: Vec<Actor>) -> Result<Self> {
        let network_id = network_id.into();
        let mut index = HashMap::with_capacity(actors.len());
        for (i, a) in actors.iter().enumerate() {
            if index.insert(a.actor_id.clone(), i).is_some() {
                return Err(RemError::DuplicateActor {
                    network: network_id,
                    actor: a.actor_id.clone(),
                });
            }
        }
        if actors.len() < 2 {
            return Err(RemError::InvalidNetwork {
                network: network_id,
                message: format!("need at least 2 actors, found {}", actors.len()),
            });
        }
        Ok(ActorTable {
            network_id,
            actors,
            index,
        })
    }

    /// Actors named `a0, a1, ...` with the given ICR flags.
    pub fn synthetic(network_id: impl Into<String>, icr: &[bool]) -> Result<Self> {
        let actors = icr
            .iter()
            .enumerate()
            .map(|(i, &icr)| Actor {
                actor_id: format!("a{i}"),
                icr,
            })
            .collect();
        ActorTable::new(network_id, actors)
    }

    pub fn network_id(&self) -> &str {
        &self.network_id
    }

    pub fn len(&self) -> usize {
        self.actors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actors.is_empty()
    }

    pub fn actors(&self) -> &[Actor] {
        &self.actors
    }

    pub fn id(&self, index: usize) -> &str {
        &self.actors[index].actor_id
    }

    pub fn icr(&self, index: usize) -> bool {
        self.actors[index].icr
    }

    pub fn index_of(&self, actor_id: &str) -> Option<usize> {
        self.index.get(actor_id).copied()
    }

    pub fn n_icr(&self) -> usize {
        self.actors.iter().filter(|a| a.icr).count()
    }

    /// Number of ordered pairs without self-loops.
    pub fn n_dyads(&self) -> usize {
        self.len() * (self.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub sender: usize,
    pub receiver: usize,
}

impl Event {
    pub fn new(sender: usize, receiver: usize) -> Self {
        Event { sender, receiver }
    }
}

/// Ordered dyadic events. Position in the list is the clock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSequence {
    network_id: String,
    events: Vec<Event>,
}

impl EventSequence {
    /// Builds a sequence over `actors`, checking every event against the risk set.
    pub fn new(actors: &ActorTable, events: Vec<Event>) -> Result<Self> {
        let network = actors.network_id().to_string();
        if events.is_empty() {
            return Err(RemError::InvalidNetwork {
                network,
                message: "event sequence is empty".into(),
            });
        }
        for (t, e) in events.iter().enumerate() {
            for a in [e.sender, e.receiver] {
                if a >= actors.len() {
                    return Err(RemError::UnknownActor {
                        network,
                        order: t as i64,
                        actor: format!("#{a}"),
                    });
                }
            }
            if e.sender == e.receiver {
                return Err(RemError::SelfLoop {
                    network,
                    order: t as i64,
                    actor: actors.id(e.sender).to_string(),
                });
            }
        }
        Ok(EventSequence {
            network_id: network,
            events,
        })
    }

    pub fn network_id(&self) -> &str {
        &self.network_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// One loaded network: its risk set, its events and optional metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub actors: ActorTable,
    pub events: EventSequence,
    pub specialist: Option<bool>,
}

impl Network {
    pub fn id(&self) -> &str {
        self.actors.network_id()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub network_id: String,
    pub specialist: Option<bool>,
    pub n_actors: usize,
    pub n_events: usize,
    pub n_icr: usize,
    pub pct_icr: f64,
}

pub fn summarize(actors: &ActorTable, events: &EventSequence) -> NetworkMeta {
    let n_icr = actors.n_icr();
    NetworkMeta {
        network_id: actors.network_id().to_string(),
        specialist: None,
        n_actors: actors.len(),
        n_events: events.len(),
        n_icr,
        pct_icr: 100.0 * n_icr as f64 / actors.len() as f64,
    }
}

pub fn summarize_network(network: &Network) -> NetworkMeta {
    NetworkMeta {
        specialist: network.specialist,
        ..summarize(&network.actors, &network.events)
    }
}

/// Per-network summaries plus their column means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<NetworkMeta>,
    pub mean_actors: f64,
    pub mean_events: f64,
    pub mean_pct_icr: f64,
}

pub const SUMMARY_HEADER: [&str; 5] = ["network", "actors", "events", "pct_icr", "specialization"];

impl SummaryTable {
    pub fn new(rows: Vec<NetworkMeta>) -> Result<Self> {
        if rows.is_empty() {
            return Err(RemError::InvalidArgument("no networks to summarize".into()));
        }
        let k = rows.len() as f64;
        let mean = |f: &dyn Fn(&NetworkMeta) -> f64| rows.iter().map(f).sum::<f64>() / k;
        Ok(SummaryTable {
            mean_actors: mean(&|r| r.n_actors as f64),
            mean_events: mean(&|r| r.n_events as f64),
            mean_pct_icr: mean(&|r| r.pct_icr),
            rows,
        })
    }

    /// Display rows: counts as integers, percentages to two decimals, and a
    /// final `Mean` row.
    pub fn formatted(&self) -> Vec<[String; 5]> {
        let mut out: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.network_id.clone(),
                    r.n_actors.to_string(),
                    r.n_events.to_string(),
                    format!("{:.2}", r.pct_icr),
                    match r.specialist {
                        Some(true) => "Specialist",
                        Some(false) => "Non Spec.",
                        None => "",
                    }
                    .to_string(),
                ]
            })
            .collect();
        out.push([
            "Mean".to_string(),
            format!("{:.0}", self.mean_actors),
            format!("{:.0}", self.mean_events),
            format!("{:.2}", self.mean_pct_icr),
            String::new(),
        ]);
        out
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| RemError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> RemError {
    RemError::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = rdr
        .headers()
        .map_err(|e| malformed(path, 1, e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(malformed(
            path,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn records(
    path: &Path,
    rdr: &mut csv::Reader<File>,
    width: usize,
) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(malformed(
                path,
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        out.push((line, rec));
    }
    Ok(out)
}

/// Reads every network found in a pair of CSV files.
///
/// Networks are returned in order of first appearance in the actors file.
/// The actors file is authoritative for the risk set, so actors that never
/// appear in an event are still part of it.
pub fn load_networks(events_path: &Path, actors_path: &Path) -> Result<Vec<Network>> {
    let mut rdr = csv_reader(actors_path)?;
    check_header(actors_path, &mut rdr, &ACTORS_HEADER)?;
    let mut order: Vec<String> = Vec::new();
    let mut actor_rows: HashMap<String, Vec<Actor>> = HashMap::new();
    for (line, rec) in records(actors_path, &mut rdr, 3)? {
        let network = rec[0].to_string();
        let actor_id = rec[1].to_string();
        if network.is_empty() || actor_id.is_empty() {
            return Err(malformed(actors_path, line, "empty network_id or actor_id"));
        }
        let icr = match &rec[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(malformed(
                    actors_path,
                    line,
                    format!("icr must be 0 or 1, found `{other}`"),
                ))
            }
        };
        let rows = actor_rows.entry(network.clone()).or_insert_with(|| {
            order.push(network.clone());
            Vec::new()
        });
        if rows.iter().any(|a| a.actor_id == actor_id) {
            return Err(RemError::DuplicateActor {
                network,
                actor: actor_id,
            });
        }
        rows.push(Actor { actor_id, icr });
    }

    let mut tables = HashMap::new();
    for network in &order {
        let actors = actor_rows.remove(network).unwrap_or_default();
        tables.insert(network.clone(), ActorTable::new(network.clone(), actors)?);
    }

    let mut rdr = csv_reader(events_path)?;
    check_header(events_path, &mut rdr, &EVENTS_HEADER)?;
    let mut events: HashMap<String, (i64, Vec<Event>)> = HashMap::new();
    for (line, rec) in records(events_path, &mut rdr, 4)? {
        let network = &rec[0];
        let order_value: i64 = rec[1].parse().map_err(|_| {
            malformed(events_path, line, format!("order `{}` is not an integer", &rec[1]))
        })?;
        let table = tables.get(network).ok_or_else(|| {
            malformed(
                events_path,
                line,
                format!("network `{network}` has no actors"),
            )
        })?;
        let resolve = |name: &str| -> Result<usize> {
            if name.contains(';') || name.contains('|') {
                return Err(malformed(
                    events_path,
                    line,
                    format!("group target `{name}`; expand one-to-many events into dyadic rows"),
                ));
            }
            table.index_of(name).ok_or_else(|| RemError::UnknownActor {
                network: network.to_string(),
                order: order_value,
                actor: name.to_string(),
            })
        };
        let sender = resolve(&rec[2])?;
        let receiver = resolve(&rec[3])?;
        if sender == receiver {
            return Err(RemError::SelfLoop {
                network: network.to_string(),
                order: order_value,
                actor: rec[2].to_string(),
            });
        }
        let (last, list) = events
            .entry(network.to_string())
            .or_insert((i64::MIN, Vec::new()));
        if !list.is_empty() && order_value <= *last {
            return Err(malformed(
                events_path,
                line,
                format!("order {order_value} does not increase (previous {last})"),
            ));
        }
        *last = order_value;
        list.push(Event { sender, receiver });
    }

    let mut out = Vec::with_capacity(order.len());
    for network in order {
        let actors = tables.remove(&network).expect("table built above");
        let list = events.remove(&network).map(|(_, l)| l).unwrap_or_default();
        let events = EventSequence::new(&actors, list)?;
        out.push(Network {
            actors,
            events,
            specialist: None,
        });
    }
    if let Some(network) = events.keys().next() {
        return Err(RemError::InvalidNetwork {
            network: network.clone(),
            message: "events reference a network absent from the actors file".into(),
        });
    }
    Ok(out)
}

/// Loads a pair of files that must describe exactly one network.
pub fn load_network(events_path: &Path, actors_path: &Path) -> Result<(ActorTable, EventSequence)> {
    let mut networks = load_networks(events_path, actors_path)?;
    match networks.len() {
        1 => {
            let n = networks.pop().expect("length checked");
            Ok((n.actors, n.events))
        }
        k => Err(RemError::InvalidNetwork {
            network: actors_path.display().to_string(),
            message: format!("expected one network, found {k}"),
        }),
    }
}

/// Reads `network_id,specialist` metadata (specialist ∈ {0,1}).
pub fn load_network_meta(path: &Path) -> Result<HashMap<String, bool>> {
    let mut rdr = csv_reader(path)?;
    check_header(path, &mut rdr, &["network_id", "specialist"])?;
    let mut out = HashMap::new();
    for (line, rec) in records(path, &mut rdr, 2)? {
        let flag = match &rec[1] {
            "0" => false,
            "1" => true,
            other => {
                return Err(malformed(
                    path,
                    line,
                    format!("specialist must be 0 or 1, found `{other}`"),
                ))
            }
        };
        out.insert(rec[0].to_string(), flag);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonEvent {
    order: i64,
    sender: String,
    receiver: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonNetwork {
    network_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    specialist: Option<bool>,
    actors: Vec<Actor>,
    events: Vec<JsonEvent>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonDoc {
    Many(Vec<JsonNetwork>),
    One(JsonNetwork),
}

fn from_json_network(doc: JsonNetwork) -> Result<Network> {
    let actors = ActorTable::new(doc.network_id.clone(), doc.actors)?;
    let mut last = i64::MIN;
    let mut events = Vec::with_capacity(doc.events.len());
    for (k, e) in doc.events.into_iter().enumerate() {
        if k > 0 && e.order <= last {
            return Err(RemError::InvalidNetwork {
                network: doc.network_id,
                message: format!("event order {} does not increase (previous {last})", e.order),
            });
        }
        last = e.order;
        let resolve = |name: &str| {
            actors.index_of(name).ok_or_else(|| RemError::UnknownActor {
                network: doc.network_id.clone(),
                order: e.order,
                actor: name.to_string(),
            })
        };
        let sender = resolve(&e.sender)?;
        let receiver = resolve(&e.receiver)?;
        if sender == receiver {
            return Err(RemError::SelfLoop {
                network: doc.network_id,
                order: e.order,
                actor: e.sender,
            });
        }
        events.push(Event { sender, receiver });
    }
    let events = EventSequence::new(&actors, events)?;
    Ok(Network {
        actors,
        events,
        specialist: doc.specialist,
    })
}

/// Reads one network object or an array of them.
pub fn load_networks_json(path: &Path) -> Result<Vec<Network>> {
    let file = File::open(path).map_err(|e| RemError::io(path, e))?;
    let doc: JsonDoc = serde_json::from_reader(BufReader::new(file))?;
    match doc {
        JsonDoc::One(n) => Ok(vec![from_json_network(n)?]),
        JsonDoc::Many(ns) => ns.into_iter().map(from_json_network).collect(),
    }
}

fn to_json_network(network: &Network) -> JsonNetwork {
    JsonNetwork {
        network_id: network.id().to_string(),
        specialist: network.specialist,
        actors: network.actors.actors().to_vec(),
        events: network
            .events
            .events()
            .iter()
            .enumerate()
            .map(|(t, e)| JsonEvent {
                order: t as i64 + 1,
                sender: network.actors.id(e.sender).to_string(),
                receiver: network.actors.id(e.receiver).to_string(),
            })
            .collect(),
    }
}

pub fn write_networks_json(path: &Path, networks: &[Network]) -> Result<()> {
    let docs: Vec<JsonNetwork> = networks.iter().map(to_json_network).collect();
    let text = serde_json::to_string_pretty(&docs)?;
    std::fs::write(path, text + "\n").map_err(|e| RemError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| RemError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> RemError {
    RemError::io(path, std::io::Error::other(e))
}

/// Writes networks in the canonical CSV layout; `order` is renumbered from 1.
pub fn write_networks_csv(events_path: &Path, actors_path: &Path, networks: &[Network]) -> Result<()> {
    let mut w = csv_writer(actors_path)?;
    w.write_record(ACTORS_HEADER)
        .map_err(|e| csv_err(actors_path, e))?;
    for n in networks {
        for a in n.actors.actors() {
            w.write_record([n.id(), &a.actor_id, if a.icr { "1" } else { "0" }])
                .map_err(|e| csv_err(actors_path, e))?;
        }
    }
    w.flush().map_err(|e| RemError::io(actors_path, e))?;

    let mut w = csv_writer(events_path)?;
    w.write_record(EVENTS_HEADER)
        .map_err(|e| csv_err(events_path, e))?;
    for n in networks {
        for (t, e) in n.events.events().iter().enumerate() {
            w.write_record([
                n.id(),
                &(t + 1).to_string(),
                n.actors.id(e.sender),
                n.actors.id(e.receiver),
            ])
            .map_err(|e| csv_err(events_path, e))?;
        }
    }
    w.flush().map_err(|e| RemError::io(events_path, e))
}

/// Writes `network_id,specialist` rows for networks that carry the flag.
pub fn write_network_meta(path: &Path, networks: &[Network]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| RemError::io(path, e))?;
    let mut text = String::from("network_id,specialist\n");
    for n in networks {
        if let Some(s) = n.specialist {
            text.push_str(&format!("{},{}\n", n.id(), u8::from(s)));
        }
    }
    f.write_all(text.as_bytes()).map_err(|e| RemError::io(path, e))
}
