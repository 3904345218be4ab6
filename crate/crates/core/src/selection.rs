//! AICc-minimizing term selection.
//!
//! Hill climbing starts from the null model and at every iteration fits all
//! models one addition or deletion away, moving to the one with the lowest
//! AICc until no neighbor improves. Exhaustive search fits every subset.

use std::collections::HashMap;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RemError, Result};
use crate::inference::{fit_map_with, FitOptions, FitResult, ModelSpec, PriorSpec, RemData};
use crate::statistics::TermId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Start,
    Add,
    Remove,
    Stop,
    /// One subset scored during exhaustive search.
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub spec: ModelSpec,
    pub aicc: f64,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term: Option<TermId>,
}

/// A candidate model that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFit {
    pub spec: ModelSpec,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    #[serde(rename = "final")]
    pub final_fit: FitResult,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedFit>,
    pub n_fits: usize,
}

impl SelectionTrace {
    pub fn selected(&self) -> &ModelSpec {
        &self.final_fit.spec
    }

    pub fn final_aicc(&self) -> f64 {
        self.final_fit.aicc.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub fit: FitOptions,
    /// Start neighbor fits from the current mode (new terms at 0).
    pub warm_start: bool,
    /// AICc changes at or below this count as no change.
    pub min_improvement: f64,
    pub exhaustive_cap: usize,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            fit: FitOptions::default(),
            warm_start: false,
            min_improvement: 1e-9,
            exhaustive_cap: 14,
        }
    }
}

fn candidate_list(candidates: &[TermId]) -> Result<Vec<TermId>> {
    let mut c = candidates.to_vec();
    c.sort();
    c.dedup();
    if c.is_empty() {
        return Err(RemError::InvalidArgument("candidate term set is empty".into()));
    }
    Ok(c)
}

enum Scored {
    Ok(FitResult),
    Skipped(String),
}

fn score(data: &RemData<'_>, spec: &ModelSpec, prior: &PriorSpec, fit: &FitOptions) -> Result<Scored> {
    let result = match fit_map_with(data, spec, prior, fit) {
        Ok(r) => r,
        Err(e) if e.is_numerical_error() => return Ok(Scored::Skipped(e.to_string())),
        Err(e) => return Err(e),
    };
    if !result.converged {
        return Ok(Scored::Skipped(format!(
            "fit did not converge (gradient max-norm {:.3e})",
            result.gradient_max_norm
        )));
    }
    if result.aicc.is_none() {
        return Ok(Scored::Skipped(format!(
            "AICc undefined for {} terms and {} events",
            spec.len(),
            result.n_events
        )));
    }
    Ok(Scored::Ok(result))
}

fn warm_start(current: &FitResult, spec: &ModelSpec) -> Vec<f64> {
    spec.terms()
        .iter()
        .map(|&t| current.coefficient(t).unwrap_or(0.0))
        .collect()
}

/// Steepest-descent AICc search from the null model over single-term changes.
///
/// Ties in AICc reduction prefer deletions, then the lowest canonical term.
pub fn hill_climb_select(
    candidates: &[TermId],
    data: &RemData<'_>,
    prior: &PriorSpec,
    options: &SelectionOptions,
) -> Result<SelectionTrace> {
    let candidates = candidate_list(candidates)?;
    let mut cache: HashMap<Vec<TermId>, Scored> = HashMap::new();
    let mut skipped = Vec::new();
    let mut n_fits = 0;

    let null = ModelSpec::null();
    let mut current = match score(data, &null, prior, &options.fit)? {
        Scored::Ok(f) => f,
        Scored::Skipped(reason) => {
            return Err(RemError::Degenerate(format!("null model cannot be scored: {reason}")))
        }
    };
    n_fits += 1;
    let mut steps = vec![SelectionStep {
        spec: null,
        aicc: current.aicc.expect("scored"),
        action: Action::Start,
        term: None,
    }];

    loop {
        let mut moves: Vec<(Action, TermId, ModelSpec)> = Vec::new();
        for &t in current.spec.terms() {
            let spec = ModelSpec::canonical(current.spec.terms().iter().copied().filter(|&x| x != t))?;
            moves.push((Action::Remove, t, spec));
        }
        for &t in &candidates {
            if !current.spec.contains(t) {
                let spec = ModelSpec::canonical(current.spec.terms().iter().copied().chain([t]))?;
                moves.push((Action::Add, t, spec));
            }
        }
        let todo: Vec<&ModelSpec> = moves
            .iter()
            .map(|(_, _, s)| s)
            .filter(|s| !cache.contains_key(s.terms()))
            .collect();
        let fitted: Vec<Result<Scored>> = todo
            .par_iter()
            .map(|spec| {
                let mut fit = options.fit.clone();
                if options.warm_start {
                    fit.start = Some(warm_start(&current, spec));
                }
                score(data, spec, prior, &fit)
            })
            .collect();
        for (spec, r) in todo.into_iter().zip(fitted) {
            let r = r?;
            n_fits += 1;
            if let Scored::Skipped(reason) = &r {
                warn!("skipping {{{}}}: {reason}", spec.names().join(", "));
                skipped.push(SkippedFit {
                    spec: spec.clone(),
                    reason: reason.clone(),
                });
            }
            cache.insert(spec.terms().to_vec(), r);
        }

        let mut best: Option<(Action, TermId, &FitResult)> = None;
        for (action, term, spec) in &moves {
            if let Some(Scored::Ok(fit)) = cache.get(spec.terms()) {
                let a = fit.aicc.expect("scored");
                match best {
                    Some((_, _, b)) if a >= b.aicc.expect("scored") - options.min_improvement => {}
                    _ => best = Some((*action, *term, fit)),
                }
            }
        }
        let current_aicc = current.aicc.expect("scored");
        match best {
            Some((action, term, fit)) if fit.aicc.expect("scored") < current_aicc - options.min_improvement => {
                info!(
                    "{} {term}: AICc {:.4} -> {:.4}",
                    if action == Action::Add { "add" } else { "remove" },
                    current_aicc,
                    fit.aicc.expect("scored")
                );
                let fit = fit.clone();
                steps.push(SelectionStep {
                    spec: fit.spec.clone(),
                    aicc: fit.aicc.expect("scored"),
                    action,
                    term: Some(term),
                });
                current = fit;
            }
            _ => {
                steps.push(SelectionStep {
                    spec: current.spec.clone(),
                    aicc: current_aicc,
                    action: Action::Stop,
                    term: None,
                });
                break;
            }
        }
    }

    Ok(SelectionTrace {
        steps,
        final_fit: current.with_network(data),
        skipped,
        n_fits,
    })
}

/// Fits every subset of the candidates and returns the AICc minimizer.
///
/// Ties prefer fewer terms, then the earlier subset in enumeration order.
pub fn exhaustive_select(
    candidates: &[TermId],
    data: &RemData<'_>,
    prior: &PriorSpec,
    options: &SelectionOptions,
) -> Result<SelectionTrace> {
    let candidates = candidate_list(candidates)?;
    let c = candidates.len();
    if c > options.exhaustive_cap {
        return Err(RemError::InvalidArgument(format!(
            "{c} candidate terms exceed the exhaustive-search cap of {}",
            options.exhaustive_cap
        )));
    }
    if c > 12 {
        warn!("exhaustive search over {c} terms fits {} models", 1usize << c);
    }
    let specs: Vec<ModelSpec> = (0..1usize << c)
        .map(|mask| {
            ModelSpec::canonical(
                candidates
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask & (1 << b) != 0)
                    .map(|(_, &t)| t),
            )
        })
        .collect::<Result<_>>()?;
    let fitted: Vec<Result<Scored>> = specs
        .par_iter()
        .map(|spec| score(data, spec, prior, &options.fit))
        .collect();

    let mut steps = Vec::new();
    let mut skipped = Vec::new();
    let mut best: Option<FitResult> = None;
    for (spec, r) in specs.iter().zip(fitted) {
        match r? {
            Scored::Ok(fit) => {
                let a = fit.aicc.expect("scored");
                steps.push(SelectionStep {
                    spec: spec.clone(),
                    aicc: a,
                    action: Action::Evaluate,
                    term: None,
                });
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let ba = b.aicc.expect("scored");
                        a < ba - options.min_improvement
                            || (a <= ba + options.min_improvement && spec.len() < b.spec.len())
                    }
                };
                if better {
                    best = Some(fit);
                }
            }
            Scored::Skipped(reason) => {
                warn!("skipping {{{}}}: {reason}", spec.names().join(", "));
                skipped.push(SkippedFit {
                    spec: spec.clone(),
                    reason,
                });
            }
        }
    }
    let best = best.ok_or_else(|| RemError::Degenerate("no subset could be scored".into()))?;
    Ok(SelectionTrace {
        steps,
        final_fit: best.with_network(data),
        skipped,
        n_fits: specs.len(),
    })
}

impl FitResult {
    fn with_network(mut self, data: &RemData<'_>) -> Self {
        self.spec = self.spec.with_network(data.actors().network_id());
        self
    }
}
