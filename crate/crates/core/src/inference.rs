//! Ordinal relational event likelihood and Laplace-approximate posterior fits.
//!
//! At every step the observed dyad is treated as one draw from a multinomial
//! over all ordered actor pairs, with probabilities proportional to
//! `exp(theta' u_ij)` where `u_ij` holds the statistics of the history
//! strictly before the step. The coefficients get independent Student-t
//! priors; the fit reports the posterior mode and the inverse negative
//! Hessian of the log posterior there.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{RemError, Result};
use crate::event_data::{ActorTable, EventSequence};
use crate::statistics::{HistoryState, TermId};

/// An ordered set of model terms. The order fixes coefficient indexing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct ModelSpec {
    terms: Vec<TermId>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    network_id: String,
}

impl ModelSpec {
    pub fn new(terms: Vec<TermId>) -> Result<Self> {
        for (k, t) in terms.iter().enumerate() {
            if terms[..k].contains(t) {
                return Err(RemError::DuplicateTerm(*t));
            }
        }
        Ok(ModelSpec {
            terms,
            network_id: String::new(),
        })
    }

    /// Terms sorted into canonical order.
    pub fn canonical(terms: impl IntoIterator<Item = TermId>) -> Result<Self> {
        let mut terms: Vec<TermId> = terms.into_iter().collect();
        terms.sort();
        ModelSpec::new(terms)
    }

    pub fn null() -> Self {
        ModelSpec::default()
    }

    pub fn with_network(mut self, network_id: impl Into<String>) -> Self {
        self.network_id = network_id.into();
        self
    }

    pub fn terms(&self) -> &[TermId] {
        &self.terms
    }

    pub fn network_id(&self) -> &str {
        &self.network_id
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, term: TermId) -> bool {
        self.terms.contains(&term)
    }

    pub fn position(&self, term: TermId) -> Option<usize> {
        self.terms.iter().position(|&t| t == term)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.terms.iter().map(|t| t.name()).collect()
    }
}

/// Independent Student-t prior on every coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub location: f64,
    pub scale: f64,
    pub df: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            location: 0.0,
            scale: 10.0,
            df: 4.0,
        }
    }
}

impl PriorSpec {
    pub fn new(location: f64, scale: f64, df: f64) -> Result<Self> {
        let p = PriorSpec {
            location,
            scale,
            df,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(RemError::InvalidArgument(format!(
                "prior scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.df > 0.0 && self.df.is_finite()) {
            return Err(RemError::InvalidArgument(format!(
                "prior degrees of freedom must be positive, got {}",
                self.df
            )));
        }
        if !self.location.is_finite() {
            return Err(RemError::InvalidArgument("prior location must be finite".into()));
        }
        Ok(())
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let nu = self.df;
        let z = (x - self.location) / self.scale;
        ln_gamma((nu + 1.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * (nu * std::f64::consts::PI).ln()
            - self.scale.ln()
            - (nu + 1.0) / 2.0 * (1.0 + z * z / nu).ln()
    }

    pub fn d_log_density(&self, x: f64) -> f64 {
        let nu = self.df;
        let d = x - self.location;
        -(nu + 1.0) * d / (nu * self.scale * self.scale + d * d)
    }

    pub fn d2_log_density(&self, x: f64) -> f64 {
        let nu = self.df;
        let d = x - self.location;
        let s2 = nu * self.scale * self.scale;
        -(nu + 1.0) * (s2 - d * d) / ((s2 + d * d) * (s2 + d * d))
    }
}

/// How many derivatives an evaluation should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub log_lik: f64,
    pub gradient: DVector<f64>,
    /// Present when requested with [`Order::Hessian`].
    pub hessian: Option<DMatrix<f64>>,
}

/// Precomputed statistics of every step and dyad for a fixed list of terms.
#[derive(Debug, Clone)]
pub struct Design {
    terms: Vec<TermId>,
    n_dyads: usize,
    observed: Vec<usize>,
    rows: Vec<f64>,
}

impl Design {
    pub fn bytes_needed(n_events: usize, n_actors: usize, n_terms: usize) -> usize {
        n_events
            .saturating_mul(n_actors * n_actors.saturating_sub(1))
            .saturating_mul(n_terms)
            .saturating_mul(std::mem::size_of::<f64>())
    }

    pub fn build(actors: &ActorTable, events: &EventSequence, terms: &[TermId]) -> Result<Self> {
        let n = actors.len();
        let n_dyads = actors.n_dyads();
        let k = terms.len();
        let mut rows = Vec::with_capacity(events.len() * n_dyads * k);
        let mut observed = Vec::with_capacity(events.len());
        let mut state = HistoryState::new(n);
        let mut row = vec![0.0; k];
        for &e in events.events() {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        state.fill_row(actors, i, j, terms, &mut row);
                        rows.extend_from_slice(&row);
                    }
                }
            }
            observed.push(crate::statistics::dyad_index(n, e.sender, e.receiver));
            state.update(e)?;
        }
        Ok(Design {
            terms: terms.to_vec(),
            n_dyads,
            observed,
            rows,
        })
    }

    pub fn terms(&self) -> &[TermId] {
        &self.terms
    }
}

struct StepOut {
    log_lik: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

/// Contribution of one step. `rows` holds `n_dyads` rows of width `stride`;
/// `cols` picks the model's columns out of each row.
fn step_contribution(
    rows: &[f64],
    stride: usize,
    cols: &[usize],
    observed: usize,
    theta: &[f64],
    order: Order,
    eta: &mut Vec<f64>,
) -> StepOut {
    let k = cols.len();
    let n_dyads = rows.len() / stride.max(1);
    eta.clear();
    let mut max = f64::NEG_INFINITY;
    for d in 0..n_dyads {
        let row = &rows[d * stride..];
        let v: f64 = cols.iter().zip(theta).map(|(&c, &b)| b * row[c]).sum();
        max = max.max(v);
        eta.push(v);
    }
    let mut z = 0.0;
    for v in eta.iter_mut() {
        *v = (*v - max).exp();
        z += *v;
    }
    // eta now holds unnormalized weights
    let obs_row = &rows[observed * stride..];
    let obs_eta: f64 = cols.iter().zip(theta).map(|(&c, &b)| b * obs_row[c]).sum();
    let log_lik = obs_eta - max - z.ln();

    let mut grad = Vec::new();
    let mut hess = Vec::new();
    if order >= Order::Gradient && k > 0 {
        let mut mean = vec![0.0; k];
        for (d, &w) in eta.iter().enumerate() {
            let row = &rows[d * stride..];
            for (m, &c) in mean.iter_mut().zip(cols) {
                *m += w * row[c];
            }
        }
        for m in mean.iter_mut() {
            *m /= z;
        }
        grad = cols
            .iter()
            .zip(&mean)
            .map(|(&c, &m)| obs_row[c] - m)
            .collect();
        if order >= Order::Hessian {
            hess = vec![0.0; k * k];
            let mut centered = vec![0.0; k];
            for (d, &w) in eta.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let row = &rows[d * stride..];
                for ((x, &c), &m) in centered.iter_mut().zip(cols).zip(&mean) {
                    *x = row[c] - m;
                }
                let p = w / z;
                for a in 0..k {
                    let pa = p * centered[a];
                    if pa == 0.0 {
                        continue;
                    }
                    for b in a..k {
                        hess[a * k + b] -= pa * centered[b];
                    }
                }
            }
            for a in 0..k {
                for b in 0..a {
                    hess[a * k + b] = hess[b * k + a];
                }
            }
        }
    }
    StepOut {
        log_lik,
        grad,
        hess,
    }
}

/// The data a likelihood is evaluated on, optionally with a design cache.
pub struct RemData<'a> {
    actors: &'a ActorTable,
    events: &'a EventSequence,
    design: Option<Design>,
}

/// Default ceiling for the design cache.
pub const DEFAULT_CACHE_BYTES: usize = 512 << 20;

impl<'a> RemData<'a> {
    /// Streams statistics by replaying the history on every evaluation.
    pub fn new(actors: &'a ActorTable, events: &'a EventSequence) -> Self {
        RemData {
            actors,
            events,
            design: None,
        }
    }

    /// Precomputes statistics for `terms` when they fit in `budget_bytes`.
    pub fn with_cache(
        actors: &'a ActorTable,
        events: &'a EventSequence,
        terms: &[TermId],
        budget_bytes: usize,
    ) -> Result<Self> {
        let need = Design::bytes_needed(events.len(), actors.len(), terms.len());
        let design = if need <= budget_bytes && !terms.is_empty() {
            Some(Design::build(actors, events, terms)?)
        } else {
            None
        };
        Ok(RemData {
            actors,
            events,
            design,
        })
    }

    pub fn actors(&self) -> &ActorTable {
        self.actors
    }

    pub fn events(&self) -> &EventSequence {
        self.events
    }

    pub fn is_cached(&self) -> bool {
        self.design.is_some()
    }

    fn cached_columns(&self, spec: &ModelSpec) -> Option<(&Design, Vec<usize>)> {
        let design = self.design.as_ref()?;
        let cols: Option<Vec<usize>> = spec
            .terms()
            .iter()
            .map(|t| design.terms.iter().position(|d| d == t))
            .collect();
        cols.map(|c| (design, c))
    }

    /// Log-likelihood and requested derivatives at `theta`.
    pub fn evaluate(&self, theta: &[f64], spec: &ModelSpec, order: Order) -> Result<Evaluation> {
        let k = spec.len();
        if theta.len() != k {
            return Err(RemError::DimensionMismatch {
                expected: k,
                got: theta.len(),
            });
        }
        if let Some(bad) = theta.iter().find(|v| !v.is_finite()) {
            return Err(RemError::NonFinite(format!("coefficient {bad}")));
        }
        let m = self.events.len();
        let n_dyads = self.actors.n_dyads();
        if k == 0 {
            return Ok(Evaluation {
                log_lik: -(m as f64) * (n_dyads as f64).ln(),
                gradient: DVector::zeros(0),
                hessian: (order >= Order::Hessian).then(|| DMatrix::zeros(0, 0)),
            });
        }

        let steps: Vec<StepOut> = match self.cached_columns(spec) {
            Some((design, cols)) => {
                let stride = design.terms.len();
                let per_step = design.n_dyads * stride;
                (0..m)
                    .into_par_iter()
                    .map_init(Vec::new, |eta, t| {
                        let rows = &design.rows[t * per_step..(t + 1) * per_step];
                        step_contribution(rows, stride, &cols, design.observed[t], theta, order, eta)
                    })
                    .collect()
            }
            None => {
                let n = self.actors.len();
                let cols: Vec<usize> = (0..k).collect();
                let mut rows = vec![0.0; n_dyads * k];
                let mut eta = Vec::with_capacity(n_dyads);
                let mut state = HistoryState::new(n);
                let mut out = Vec::with_capacity(m);
                for &e in self.events.events() {
                    let mut d = 0;
                    for i in 0..n {
                        for j in 0..n {
                            if i != j {
                                state.fill_row(self.actors, i, j, spec.terms(), &mut rows[d * k..(d + 1) * k]);
                                d += 1;
                            }
                        }
                    }
                    let obs = crate::statistics::dyad_index(n, e.sender, e.receiver);
                    out.push(step_contribution(&rows, k, &cols, obs, theta, order, &mut eta));
                    state.update(e)?;
                }
                out
            }
        };

        let mut log_lik = 0.0;
        let mut gradient = DVector::zeros(k);
        let mut hessian = (order >= Order::Hessian).then(|| DMatrix::zeros(k, k));
        for s in &steps {
            log_lik += s.log_lik;
            if order >= Order::Gradient {
                for (g, v) in gradient.iter_mut().zip(&s.grad) {
                    *g += v;
                }
            }
            if let Some(h) = hessian.as_mut() {
                for a in 0..k {
                    for b in 0..k {
                        h[(a, b)] += s.hess[a * k + b];
                    }
                }
            }
        }
        if !log_lik.is_finite() {
            return Err(RemError::NonFinite(format!("log-likelihood {log_lik}")));
        }
        Ok(Evaluation {
            log_lik,
            gradient,
            hessian,
        })
    }

    /// Calls `f(t, observed_dyad, eta)` for every step with the linear
    /// predictor of every dyad in canonical order.
    pub fn for_each_predictor(
        &self,
        theta: &[f64],
        spec: &ModelSpec,
        mut f: impl FnMut(usize, usize, &[f64]),
    ) -> Result<()> {
        let k = spec.len();
        if theta.len() != k {
            return Err(RemError::DimensionMismatch {
                expected: k,
                got: theta.len(),
            });
        }
        let n = self.actors.len();
        let n_dyads = self.actors.n_dyads();
        let mut eta = vec![0.0; n_dyads];
        if let Some((design, cols)) = self.cached_columns(spec) {
            let stride = design.terms.len();
            for t in 0..self.events.len() {
                let rows = &design.rows[t * n_dyads * stride..(t + 1) * n_dyads * stride];
                for (d, v) in eta.iter_mut().enumerate() {
                    let row = &rows[d * stride..];
                    *v = cols.iter().zip(theta).map(|(&c, &b)| b * row[c]).sum();
                }
                f(t, design.observed[t], &eta);
            }
            return Ok(());
        }
        let mut state = HistoryState::new(n);
        let mut row = vec![0.0; k];
        for (t, &e) in self.events.events().iter().enumerate() {
            let mut d = 0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        state.fill_row(self.actors, i, j, spec.terms(), &mut row);
                        eta[d] = row.iter().zip(theta).map(|(u, b)| u * b).sum();
                        d += 1;
                    }
                }
            }
            f(t, crate::statistics::dyad_index(n, e.sender, e.receiver), &eta);
            state.update(e)?;
        }
        Ok(())
    }

    /// Event probabilities over the risk set at step `t`.
    pub fn step_probabilities(&self, theta: &[f64], spec: &ModelSpec, t: usize) -> Result<Vec<f64>> {
        let mut out = None;
        self.for_each_predictor(theta, spec, |s, _, eta| {
            if s == t {
                out = Some(softmax(eta));
            }
        })?;
        out.ok_or_else(|| RemError::InvalidArgument(format!("step {t} is past the sequence end")))
    }
}

/// Max-shifted normalized exponentials.
pub fn softmax(eta: &[f64]) -> Vec<f64> {
    let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = eta.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

pub fn log_likelihood(
    theta: &[f64],
    spec: &ModelSpec,
    events: &EventSequence,
    actors: &ActorTable,
) -> Result<f64> {
    Ok(RemData::new(actors, events)
        .evaluate(theta, spec, Order::Value)?
        .log_lik)
}

pub fn gradient(
    theta: &[f64],
    spec: &ModelSpec,
    events: &EventSequence,
    actors: &ActorTable,
) -> Result<Vec<f64>> {
    Ok(RemData::new(actors, events)
        .evaluate(theta, spec, Order::Gradient)?
        .gradient
        .iter()
        .copied()
        .collect())
}

pub fn hessian(
    theta: &[f64],
    spec: &ModelSpec,
    events: &EventSequence,
    actors: &ActorTable,
) -> Result<DMatrix<f64>> {
    Ok(RemData::new(actors, events)
        .evaluate(theta, spec, Order::Hessian)?
        .hessian
        .expect("requested"))
}

/// Sample-size corrected AIC with `m` events as the sample size.
pub fn aicc(log_lik: f64, k: usize, m: usize) -> Result<f64> {
    if m <= k + 1 {
        return Err(RemError::InadmissibleModel {
            terms: k,
            events: m,
        });
    }
    let kf = k as f64;
    Ok(-2.0 * log_lik + 2.0 * kf + 2.0 * kf * (kf + 1.0) / (m - k - 1) as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence threshold on the max-norm of the log-posterior gradient.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting point; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-6,
            max_iter: 500,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub mode: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub log_lik: f64,
    pub log_posterior: f64,
    /// Absent when the model has too many terms for the sample size.
    pub aicc: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max_norm: f64,
    pub n_events: usize,
    pub n_actors: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let k = self.mode.len();
        DMatrix::from_fn(k, k, |a, b| self.covariance[a][b])
    }

    pub fn coefficient(&self, term: TermId) -> Option<f64> {
        self.spec.position(term).map(|k| self.mode[k])
    }

    /// A fixed-parameter "fit" with zero posterior uncertainty.
    pub fn fixed(spec: ModelSpec, mode: Vec<f64>, n_actors: usize, n_events: usize) -> Result<Self> {
        if mode.len() != spec.len() {
            return Err(RemError::DimensionMismatch {
                expected: spec.len(),
                got: mode.len(),
            });
        }
        let k = mode.len();
        Ok(FitResult {
            spec,
            mode,
            std_dev: vec![0.0; k],
            covariance: vec![vec![0.0; k]; k],
            log_lik: f64::NAN,
            log_posterior: f64::NAN,
            aicc: None,
            converged: true,
            iterations: 0,
            gradient_max_norm: 0.0,
            n_events,
            n_actors,
            warnings: Vec::new(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Posterior {
    value: f64,
    log_lik: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

fn posterior(data: &RemData<'_>, spec: &ModelSpec, prior: &PriorSpec, theta: &[f64]) -> Result<Posterior> {
    let ev = data.evaluate(theta, spec, Order::Hessian)?;
    let mut gradient = ev.gradient;
    let mut hessian = ev.hessian.expect("requested");
    let mut value = ev.log_lik;
    for (k, &x) in theta.iter().enumerate() {
        value += prior.log_density(x);
        gradient[k] += prior.d_log_density(x);
        hessian[(k, k)] += prior.d2_log_density(x);
    }
    Ok(Posterior {
        value,
        log_lik: ev.log_lik,
        gradient,
        hessian,
    })
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

// Solves (-H) d = g, shifting the diagonal until -H is positive definite.
fn newton_direction(hessian: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let a = -hessian;
    let k = a.nrows();
    let scale = (0..k).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-8);
    let mut shift = 0.0;
    for _ in 0..40 {
        let shifted = &a + DMatrix::identity(k, k) * shift;
        if let Some(ch) = shifted.cholesky() {
            return ch.solve(g);
        }
        shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
    }
    g.clone()
}

const MAX_STEP: f64 = 5.0;

/// Posterior mode under independent t-priors via damped Newton iterations,
/// with the Laplace covariance at the mode.
pub fn fit_map_with(
    data: &RemData<'_>,
    spec: &ModelSpec,
    prior: &PriorSpec,
    options: &FitOptions,
) -> Result<FitResult> {
    prior.validate()?;
    if !(options.tol > 0.0) {
        return Err(RemError::InvalidArgument("tolerance must be positive".into()));
    }
    let k = spec.len();
    let m = data.events().len();
    let n_actors = data.actors().len();
    let mut warnings = Vec::new();

    if k == 0 {
        let log_lik = data.evaluate(&[], spec, Order::Value)?.log_lik;
        return Ok(FitResult {
            spec: spec.clone(),
            mode: Vec::new(),
            std_dev: Vec::new(),
            covariance: Vec::new(),
            log_lik,
            log_posterior: log_lik,
            aicc: aicc(log_lik, 0, m).ok(),
            converged: true,
            iterations: 0,
            gradient_max_norm: 0.0,
            n_events: m,
            n_actors,
            warnings,
        });
    }

    let mut theta = match &options.start {
        Some(s) if s.len() == k => DVector::from_column_slice(s),
        Some(s) => {
            return Err(RemError::DimensionMismatch {
                expected: k,
                got: s.len(),
            })
        }
        None => DVector::zeros(k),
    };
    let mut current = posterior(data, spec, prior, theta.as_slice())?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        if max_abs(&current.gradient) <= options.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = newton_direction(&current.hessian, &current.gradient);
        let big = max_abs(&dir);
        if big > MAX_STEP {
            dir *= MAX_STEP / big;
        }
        let slope = current.gradient.dot(&dir);
        let slack = 1e-12 * (1.0 + current.value.abs());
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial = &theta + &dir * alpha;
            if let Ok(p) = posterior(data, spec, prior, trial.as_slice()) {
                // near the optimum the objective is flat to rounding; also
                // accept steps that keep the value and shrink the gradient
                if p.value >= current.value + 1e-4 * alpha * slope
                    || (p.value >= current.value - slack
                        && max_abs(&p.gradient) < max_abs(&current.gradient))
                {
                    accepted = Some((trial, p));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((t, p)) => {
                theta = t;
                current = p;
            }
            None => {
                warnings.push(format!(
                    "line search failed at iteration {iterations}; gradient max-norm {:.3e}",
                    max_abs(&current.gradient)
                ));
                break;
            }
        }
    }
    if !converged && max_abs(&current.gradient) <= options.tol {
        converged = true;
    }
    if !converged {
        let msg = format!(
            "not converged after {iterations} iterations (gradient max-norm {:.3e})",
            max_abs(&current.gradient)
        );
        warn!("{}: {msg}", spec.names().join("+"));
        warnings.push(msg);
    }

    let neg = -&current.hessian;
    let cov = match neg.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            let msg = "log-posterior Hessian is not negative definite at the mode; using pseudo-inverse".to_string();
            warn!("{}: {msg}", spec.names().join("+"));
            warnings.push(msg);
            pseudo_inverse(&neg)
        }
    };
    let cov = (&cov + cov.transpose()) * 0.5;
    let std_dev = (0..k).map(|a| cov[(a, a)].max(0.0).sqrt()).collect();
    let covariance = (0..k).map(|a| (0..k).map(|b| cov[(a, b)]).collect()).collect();
    Ok(FitResult {
        spec: spec.clone(),
        mode: theta.iter().copied().collect(),
        std_dev,
        covariance,
        log_lik: current.log_lik,
        log_posterior: current.value,
        aicc: aicc(current.log_lik, k, m).ok(),
        converged,
        iterations,
        gradient_max_norm: max_abs(&current.gradient),
        n_events: m,
        n_actors,
        warnings,
    })
}

fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let top = eig.eigenvalues.iter().fold(0.0_f64, |x, v| x.max(v.abs()));
    let cutoff = top * 1e-12 * a.nrows() as f64;
    let inv = eig
        .eigenvalues
        .map(|v| if v > cutoff { 1.0 / v } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

pub fn fit_map(
    spec: &ModelSpec,
    events: &EventSequence,
    actors: &ActorTable,
    prior: &PriorSpec,
    options: &FitOptions,
) -> Result<FitResult> {
    let data = RemData::with_cache(actors, events, spec.terms(), DEFAULT_CACHE_BYTES)?;
    fit_map_with(&data, spec, prior, options)
}

/// Central posterior interval of one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorInterval {
    pub term: TermId,
    pub mode: f64,
    pub std_dev: f64,
    pub level: f64,
    pub low: f64,
    pub high: f64,
    pub stars: String,
}

pub const STAR_LEVELS: [f64; 3] = [0.95, 0.99, 0.999];

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Gaussian interval half-width multiplier for a central `level`.
pub fn z_for_level(level: f64) -> f64 {
    normal_quantile(1.0 - (1.0 - level) / 2.0)
}

/// True when the central interval strictly excludes 0; an endpoint at 0
/// does not count.
pub fn excludes_zero(mode: f64, sd: f64, level: f64) -> bool {
    let z = z_for_level(level);
    mode - z * sd > 0.0 || mode + z * sd < 0.0
}

/// `*`, `**`, `***` for 95%, 99%, 99.9% intervals excluding 0.
pub fn star_code(mode: f64, sd: f64) -> &'static str {
    match STAR_LEVELS.iter().filter(|&&l| excludes_zero(mode, sd, l)).count() {
        3 => "***",
        2 => "**",
        1 => "*",
        _ => "",
    }
}

pub fn posterior_interval(fit: &FitResult, level: f64) -> Result<Vec<PosteriorInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(RemError::InvalidArgument(format!(
            "interval level must lie in (0, 1), got {level}"
        )));
    }
    let z = z_for_level(level);
    Ok(fit
        .spec
        .terms()
        .iter()
        .enumerate()
        .map(|(k, &term)| {
            let (mode, sd) = (fit.mode[k], fit.std_dev[k]);
            PosteriorInterval {
                term,
                mode,
                std_dev: sd,
                level,
                low: mode - z * sd,
                high: mode + z * sd,
                stars: star_code(mode, sd).to_string(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::Event;

    fn tiny() -> (ActorTable, EventSequence) {
        let actors = ActorTable::synthetic("t", &[true, false, false, false]).unwrap();
        let events = EventSequence::new(
            &actors,
            vec![
                Event::new(0, 1),
                Event::new(1, 0),
                Event::new(0, 2),
                Event::new(2, 0),
                Event::new(3, 0),
                Event::new(0, 3),
            ],
        )
        .unwrap();
        (actors, events)
    }

    #[test]
    fn null_model_closed_form() {
        let actors = ActorTable::synthetic("t", &[false, false]).unwrap();
        let events = EventSequence::new(&actors, vec![Event::new(0, 1)]).unwrap();
        let ll = log_likelihood(&[], &ModelSpec::null(), &events, &actors).unwrap();
        assert_eq!(ll, -(2.0_f64).ln());
        assert!(gradient(&[], &ModelSpec::null(), &events, &actors)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn dimension_mismatch() {
        let (actors, events) = tiny();
        let spec = ModelSpec::new(vec![TermId::PSABBA]).unwrap();
        assert!(matches!(
            log_likelihood(&[1.0, 2.0], &spec, &events, &actors),
            Err(RemError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cached_and_streaming_agree() {
        let (actors, events) = tiny();
        let spec = ModelSpec::new(vec![TermId::PSABBA, TermId::ICR, TermId::RRecSnd]).unwrap();
        let theta = [1.3, -0.4, 0.7];
        let stream = RemData::new(&actors, &events)
            .evaluate(&theta, &spec, Order::Hessian)
            .unwrap();
        let cached = RemData::with_cache(&actors, &events, &TermId::ALL, usize::MAX)
            .unwrap();
        assert!(cached.is_cached());
        let cached = cached.evaluate(&theta, &spec, Order::Hessian).unwrap();
        assert!((stream.log_lik - cached.log_lik).abs() < 1e-12);
        assert!((stream.gradient - cached.gradient).amax() < 1e-12);
        assert!((stream.hessian.unwrap() - cached.hessian.unwrap()).amax() < 1e-12);
    }

    #[test]
    fn aicc_formula() {
        assert_eq!(aicc(-10.0, 0, 5).unwrap(), 20.0);
        let v = aicc(-10.0, 2, 10).unwrap();
        assert!((v - (20.0 + 4.0 + 12.0 / 7.0)).abs() < 1e-12);
        assert!(matches!(aicc(-1.0, 2, 3), Err(RemError::InadmissibleModel { .. })));
    }

    #[test]
    fn prior_derivatives_match_finite_differences() {
        let p = PriorSpec::default();
        for &x in &[-30.0, -3.0, 0.0, 0.5, 12.0] {
            let h = 1e-5;
            let d1 = (p.log_density(x + h) - p.log_density(x - h)) / (2.0 * h);
            let d2 = (p.d_log_density(x + h) - p.d_log_density(x - h)) / (2.0 * h);
            assert!((d1 - p.d_log_density(x)).abs() < 1e-8);
            assert!((d2 - p.d2_log_density(x)).abs() < 1e-8);
        }
        // density integrates to one
        let integral: f64 = (-200_000..200_000)
            .map(|i| p.log_density(i as f64 * 0.01).exp() * 0.01)
            .sum();
        assert!((integral - 1.0).abs() < 1e-3);
    }

    #[test]
    fn prior_validation() {
        assert!(PriorSpec::new(0.0, 0.0, 4.0).is_err());
        assert!(PriorSpec::new(0.0, 1.0, -1.0).is_err());
        assert!(PriorSpec::new(0.0, 10.0, 4.0).is_ok());
    }

    #[test]
    fn star_codes() {
        assert_eq!(star_code(2.93, 0.11), "***");
        assert_eq!(star_code(0.0, 1.0), "");
        assert_eq!(star_code(-0.56, 0.37), "");
        // 0.99 but not 0.999: |mode/sd| between 2.576 and 3.291
        assert_eq!(star_code(3.0, 1.0), "**");
        assert_eq!(star_code(-2.0, 1.0), "*");
    }

    #[test]
    fn interval_endpoint_at_zero_is_not_exclusion() {
        let sd = 0.37;
        let z = z_for_level(0.95);
        assert!((z - 1.959_963_984_540_054).abs() < 1e-9);
        let mode = z * sd;
        assert_eq!(mode - z * sd, 0.0);
        assert!(!excludes_zero(mode, sd, 0.95));
        assert!(excludes_zero(1.96 * sd, sd, 0.95));
    }

    #[test]
    fn duplicate_terms_rejected() {
        assert!(matches!(
            ModelSpec::new(vec![TermId::ICR, TermId::ICR]),
            Err(RemError::DuplicateTerm(TermId::ICR))
        ));
    }
}
