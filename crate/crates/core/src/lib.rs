//! Ordinal relational event models for dyadic communication sequences.
//!
//! The crate covers the whole pipeline: loading coded event lists
//! ([`event_data`]), history statistics ([`statistics`]), penalized
//! likelihood fits with a Laplace posterior ([`inference`]), AICc term
//! selection ([`selection`]), posterior-predictive knock-out simulation
//! ([`simulation`]) and concentration / adequacy metrics ([`analysis`]).

pub mod analysis;
pub mod error;
pub mod event_data;
pub mod inference;
pub mod selection;
pub mod simulation;
pub mod statistics;

pub use error::{RemError, Result};
pub use event_data::{Actor, ActorTable, Event, EventSequence, Network, NetworkMeta, SummaryTable};
pub use inference::{FitOptions, FitResult, ModelSpec, PriorSpec, RemData};
pub use selection::{SelectionOptions, SelectionTrace};
pub use simulation::{ConditionName, KnockoutCondition, Trajectory};
pub use statistics::{HistoryState, StatVector, TermId};
