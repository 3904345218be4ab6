//! Posterior-predictive trajectories and mechanism knock-out experiments.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RemError, Result};
use crate::event_data::{ActorTable, Event};
use crate::inference::{FitResult, ModelSpec};
use crate::statistics::{dyad_index, HistoryState, TermId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionName {
    Full,
    PaRemoved,
    PsRemoved,
    IcrRemoved,
    AllRemoved,
}

impl ConditionName {
    pub const ALL: [ConditionName; 5] = [
        ConditionName::Full,
        ConditionName::PaRemoved,
        ConditionName::PsRemoved,
        ConditionName::IcrRemoved,
        ConditionName::AllRemoved,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionName::Full => "full",
            ConditionName::PaRemoved => "pa_removed",
            ConditionName::PsRemoved => "ps_removed",
            ConditionName::IcrRemoved => "icr_removed",
            ConditionName::AllRemoved => "all_removed",
        }
    }

    pub fn zeroed_terms(self) -> Vec<TermId> {
        match self {
            ConditionName::Full => Vec::new(),
            ConditionName::PaRemoved => vec![TermId::NTDegRec],
            ConditionName::PsRemoved => TermId::PSHIFTS.to_vec(),
            ConditionName::IcrRemoved => vec![TermId::ICR],
            ConditionName::AllRemoved => {
                let mut t = vec![TermId::NTDegRec];
                t.extend(TermId::PSHIFTS);
                t.push(TermId::ICR);
                t
            }
        }
    }
}

impl fmt::Display for ConditionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionName {
    type Err = RemError;

    fn from_str(s: &str) -> Result<Self> {
        ConditionName::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| RemError::InvalidArgument(format!("unknown knock-out condition `{s}`")))
    }
}

/// A named set of coefficients forced to zero during simulation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnockoutCondition {
    pub name: ConditionName,
    pub zeroed_terms: Vec<TermId>,
}

impl KnockoutCondition {
    pub fn new(name: ConditionName) -> Self {
        KnockoutCondition {
            name,
            zeroed_terms: name.zeroed_terms(),
        }
    }

    pub fn full() -> Self {
        KnockoutCondition::new(ConditionName::Full)
    }

    /// Full model plus the four knock-outs.
    pub fn standard() -> Vec<Self> {
        ConditionName::ALL.into_iter().map(KnockoutCondition::new).collect()
    }

    /// Whether the condition removes anything from `spec`.
    pub fn applies_to(&self, spec: &ModelSpec) -> bool {
        self.zeroed_terms.iter().any(|&t| spec.contains(t))
    }

    pub fn apply(&self, spec: &ModelSpec, theta: &[f64]) -> Vec<f64> {
        spec.terms()
            .iter()
            .zip(theta)
            .map(|(t, &v)| if self.zeroed_terms.contains(t) { 0.0 } else { v })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub network_id: String,
    pub condition: ConditionName,
    pub replicate: usize,
    pub seed: u64,
    /// Coefficients actually used, after knock-out.
    pub theta: Vec<f64>,
    pub events: Vec<Event>,
}

impl Trajectory {
    /// Per-actor volume: events sent plus events received.
    pub fn volumes(&self, n_actors: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_actors];
        for e in &self.events {
            v[e.sender] += 1.0;
            v[e.receiver] += 1.0;
        }
        v
    }
}

/// SplitMix64 finalizer over `master` and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// One draw from the Gaussian posterior approximation.
///
/// Negative eigenvalues of the covariance are clipped to zero.
pub fn sample_parameters(fit: &FitResult, seed: u64) -> Result<Vec<f64>> {
    let k = fit.mode.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let cov = fit.covariance_matrix();
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(RemError::NonFinite("covariance entry".into()));
    }
    let eig = SymmetricEigen::new((&cov + cov.transpose()) * 0.5);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if eig.eigenvalues.iter().any(|&v| v < -1e-10 * top.max(1e-300)) {
        warn!("covariance is not positive semi-definite; clipping negative eigenvalues");
    }
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let scaled = DVector::from_iterator(k, root.iter().zip(z.iter()).map(|(r, z)| r * z));
    let delta = &eig.eigenvectors * scaled;
    Ok(fit.mode.iter().zip(delta.iter()).map(|(m, d)| m + d).collect())
}

/// Sequential categorical sampler with cached per-dyad predictors.
///
/// The receiver-volume term changes for every dyad at every step through its
/// denominator, so it is kept out of the cache and added per receiver.
pub(crate) struct Sampler<'a> {
    actors: &'a ActorTable,
    terms: Vec<TermId>,
    coefs: Vec<f64>,
    pa_coef: f64,
    state: HistoryState,
    rest: Vec<f64>,
    weights: Vec<f64>,
    row: Vec<f64>,
}

impl<'a> Sampler<'a> {
    pub(crate) fn new(actors: &'a ActorTable, spec: &ModelSpec, theta: &[f64]) -> Result<Self> {
        if theta.len() != spec.len() {
            return Err(RemError::DimensionMismatch {
                expected: spec.len(),
                got: theta.len(),
            });
        }
        if let Some(v) = theta.iter().find(|v| !v.is_finite()) {
            return Err(RemError::NonFinite(format!("coefficient {v}")));
        }
        let mut terms = Vec::new();
        let mut coefs = Vec::new();
        let mut pa_coef = 0.0;
        for (&t, &b) in spec.terms().iter().zip(theta) {
            if t == TermId::NTDegRec {
                pa_coef = b;
            } else {
                terms.push(t);
                coefs.push(b);
            }
        }
        let n = actors.len();
        let mut s = Sampler {
            actors,
            row: vec![0.0; terms.len()],
            terms,
            coefs,
            pa_coef,
            state: HistoryState::new(n),
            rest: vec![0.0; actors.n_dyads()],
            weights: vec![0.0; actors.n_dyads()],
        };
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s.refresh(i, j);
                }
            }
        }
        Ok(s)
    }

    fn refresh(&mut self, i: usize, j: usize) {
        self.state.fill_row(self.actors, i, j, &self.terms, &mut self.row);
        let v = self.row.iter().zip(&self.coefs).map(|(u, b)| u * b).sum();
        self.rest[dyad_index(self.actors.len(), i, j)] = v;
    }

    /// Linear predictor of every dyad at the current state.
    #[cfg(test)]
    pub(crate) fn predictors(&self) -> Vec<f64> {
        let n = self.actors.len();
        let pa: Vec<f64> = (0..n)
            .map(|j| self.pa_coef * self.state.ntdegrec(j))
            .collect();
        self.rest
            .iter()
            .enumerate()
            .map(|(d, r)| r + pa[crate::statistics::dyad_at(n, d).1])
            .collect()
    }

    pub(crate) fn draw(&mut self, rng: &mut impl Rng) -> Result<Event> {
        let n = self.actors.len();
        let pa: Vec<f64> = (0..n)
            .map(|j| self.pa_coef * self.state.ntdegrec(j))
            .collect();
        let mut max = f64::NEG_INFINITY;
        let mut d = 0;
        for i in 0..n {
            for (j, p) in pa.iter().enumerate() {
                if i != j {
                    let v = self.rest[d] + p;
                    self.weights[d] = v;
                    max = max.max(v);
                    d += 1;
                }
            }
        }
        if !max.is_finite() {
            return Err(RemError::NonFinite(format!("linear predictor maximum {max}")));
        }
        let mut total = 0.0;
        for w in self.weights.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        if !(total.is_finite() && total > 0.0) {
            return Err(RemError::NonFinite(format!("normalizing constant {total}")));
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (d, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                chosen = Some(d);
                acc += w;
                if u < acc {
                    break;
                }
            }
        }
        let (i, j) = crate::statistics::dyad_at(n, chosen.expect("total > 0"));
        Ok(Event::new(i, j))
    }

    pub(crate) fn advance(&mut self, event: Event) -> Result<()> {
        let prev = self.state.last_event();
        self.state.update(event)?;
        let n = self.actors.len();
        let mut touched = vec![event.sender, event.receiver];
        if let Some(p) = prev {
            touched.extend([p.sender, p.receiver]);
        }
        touched.sort_unstable();
        touched.dedup();
        for &a in &touched {
            for x in 0..n {
                if x != a {
                    self.refresh(a, x);
                    self.refresh(x, a);
                }
            }
        }
        Ok(())
    }
}

fn simulate_once(
    actors: &ActorTable,
    spec: &ModelSpec,
    theta: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<Event>> {
    let mut sampler = Sampler::new(actors, spec, theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::with_capacity(m);
    for _ in 0..m {
        let e = sampler.draw(&mut rng)?;
        sampler.advance(e)?;
        events.push(e);
    }
    Ok(events)
}

const MAX_RETRIES: u64 = 10;

/// Draws `m` events sequentially from the model with the condition's terms
/// set to zero.
pub fn simulate_trajectory(
    theta: &[f64],
    spec: &ModelSpec,
    actors: &ActorTable,
    m: usize,
    condition: &KnockoutCondition,
    seed: u64,
) -> Result<Trajectory> {
    if m == 0 {
        return Err(RemError::InvalidArgument("trajectory length must be at least 1".into()));
    }
    if theta.len() != spec.len() {
        return Err(RemError::DimensionMismatch {
            expected: spec.len(),
            got: theta.len(),
        });
    }
    if let Some(v) = theta.iter().find(|v| !v.is_finite()) {
        return Err(RemError::NonFinite(format!("coefficient {v}")));
    }
    let theta = condition.apply(spec, theta);
    let mut attempt_seed = seed;
    let mut attempt = 0;
    let events = loop {
        match simulate_once(actors, spec, &theta, m, attempt_seed) {
            Ok(ev) => break ev,
            Err(e) if e.is_numerical_error() && attempt < MAX_RETRIES => {
                attempt += 1;
                attempt_seed = derive_seed(seed, &[attempt]);
                warn!(
                    "{} {}: numerical failure ({e}); retrying with seed {attempt_seed}",
                    actors.network_id(),
                    condition.name
                );
            }
            Err(e) => return Err(e),
        }
    };
    Ok(Trajectory {
        network_id: actors.network_id().to_string(),
        condition: condition.name,
        replicate: 0,
        seed: attempt_seed,
        theta,
        events,
    })
}

/// `replicates x conditions` trajectories.
///
/// Within a replicate every condition starts from the same parameter draw and
/// the same event-sampling seed, so contrasts between conditions are paired.
pub fn run_knockout_experiment(
    fit: &FitResult,
    actors: &ActorTable,
    m: usize,
    replicates: usize,
    conditions: &[KnockoutCondition],
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    if replicates == 0 {
        return Err(RemError::InvalidArgument("replicates must be at least 1".into()));
    }
    let draws: Vec<(Vec<f64>, u64)> = (0..replicates as u64)
        .map(|r| {
            let theta = sample_parameters(fit, derive_seed(master_seed, &[r, 0]))?;
            Ok((theta, derive_seed(master_seed, &[r, 1])))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, &KnockoutCondition)> = (0..replicates)
        .flat_map(|r| conditions.iter().map(move |c| (r, c)))
        .collect();
    jobs.par_iter()
        .map(|&(r, c)| {
            let (theta, seed) = &draws[r];
            let mut t = simulate_trajectory(theta, &fit.spec, actors, m, c, *seed)?;
            t.replicate = r;
            Ok(t)
        })
        .collect()
}

pub const TRAJECTORY_HEADER: [&str; 7] = [
    "network_id",
    "order",
    "sender",
    "receiver",
    "condition",
    "replicate",
    "seed",
];

pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory, actors: &ActorTable) -> Result<()> {
    let io = |e: csv::Error| RemError::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(TRAJECTORY_HEADER).map_err(io)?;
    let rep = trajectory.replicate.to_string();
    let seed = trajectory.seed.to_string();
    for (t, e) in trajectory.events.iter().enumerate() {
        w.write_record([
            trajectory.network_id.as_str(),
            &(t + 1).to_string(),
            actors.id(e.sender),
            actors.id(e.receiver),
            trajectory.condition.as_str(),
            &rep,
            &seed,
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| RemError::io(path, e))
}

/// Covariance with eigenvalues below zero clipped, for inspection.
pub fn clipped_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}
