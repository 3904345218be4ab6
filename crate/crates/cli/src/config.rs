//! Run configuration: a TOML file whose values can be overridden by flags.

use std::path::{Path, PathBuf};

use rem_core::{ConditionName, FitOptions, PriorSpec, SelectionOptions, TermId};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    #[default]
    HillClimb,
    Exhaustive,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub events: Option<PathBuf>,
    pub actors: Option<PathBuf>,
    /// `network_id,specialist` table.
    pub meta: Option<PathBuf>,
    /// JSON alternative to the two CSV files.
    pub json: Option<PathBuf>,
    /// Restrict the run to these network ids.
    pub networks: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub candidates: Vec<String>,
    /// Fixed specification for `fit`; the candidates when absent.
    pub terms: Option<Vec<String>>,
    pub selection: SelectionMode,
    pub warm_start: bool,
    pub min_improvement: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            candidates: TermId::ALL.iter().map(|t| t.name().to_string()).collect(),
            terms: None,
            selection: SelectionMode::HillClimb,
            warm_start: false,
            min_improvement: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub location: f64,
    pub scale: f64,
    pub df: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        let p = PriorSpec::default();
        PriorConfig {
            location: p.location,
            scale: p.scale,
            df: p.df,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Memory ceiling for precomputed statistics, in MiB.
    pub cache_mb: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        FitConfig {
            tol: f.tol,
            max_iter: f.max_iter,
            cache_mb: 512,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub replicates: usize,
    pub conditions: Vec<String>,
    pub master_seed: Option<u64>,
    /// Events per trajectory; the observed length when absent.
    pub length: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            replicates: 50,
            conditions: ConditionName::ALL.iter().map(|c| c.as_str().to_string()).collect(),
            master_seed: None,
            length: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Where fits are written and read; `<dir>/fits` when absent.
    pub fit_dir: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("rem_out"),
            fit_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputConfig,
    pub model: ModelConfig,
    pub prior: PriorConfig,
    pub fit: FitConfig,
    pub simulation: SimulationConfig,
    pub output: OutputConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub events: Option<PathBuf>,
    pub actors: Option<PathBuf>,
    pub meta: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub networks: Vec<String>,
    pub terms: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub conditions: Option<Vec<String>>,
    pub length: Option<usize>,
    pub out: Option<PathBuf>,
    pub fit_dir: Option<PathBuf>,
    pub selection: Option<SelectionMode>,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Reads `path` (paths inside it are relative to its directory) or starts
    /// from defaults, then applies the overrides.
    pub fn load(path: Option<&Path>, o: Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let mut cfg: RunConfig =
                    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                rebase(&base, &mut cfg.input.events);
                rebase(&base, &mut cfg.input.actors);
                rebase(&base, &mut cfg.input.meta);
                rebase(&base, &mut cfg.input.json);
                rebase(&base, &mut cfg.output.fit_dir);
                if cfg.output.dir.is_relative() {
                    cfg.output.dir = base.join(&cfg.output.dir);
                }
                cfg
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src {
                    $dst = Some(v);
                }
            };
        }
        set!(o.events => cfg.input.events);
        set!(o.actors => cfg.input.actors);
        set!(o.meta => cfg.input.meta);
        set!(o.json => cfg.input.json);
        set!(o.terms => cfg.model.terms);
        set!(o.seed => cfg.simulation.master_seed);
        set!(o.length => cfg.simulation.length);
        set!(o.fit_dir => cfg.output.fit_dir);
        if !o.networks.is_empty() {
            cfg.input.networks = o.networks;
        }
        if let Some(r) = o.replicates {
            cfg.simulation.replicates = r;
        }
        if let Some(c) = o.conditions {
            cfg.simulation.conditions = c;
        }
        if let Some(d) = o.out {
            cfg.output.dir = d;
        }
        if let Some(s) = o.selection {
            cfg.model.selection = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        match (&self.input.json, &self.input.events, &self.input.actors) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => {}
            (Some(_), _, _) => {
                return Err(CliError::Config("give either a JSON input or events and actors CSV files, not both".into()))
            }
            _ => return Err(CliError::Config("events and actors files (or a JSON input) are required".into())),
        }
        for p in [&self.input.events, &self.input.actors, &self.input.meta, &self.input.json]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(CliError::Config(format!("input file {} does not exist", p.display())));
            }
        }
        self.candidates()?;
        self.fit_terms()?;
        self.conditions()?;
        self.prior()?;
        if !(self.fit.tol > 0.0) || self.fit.max_iter == 0 {
            return Err(CliError::Config("fit tolerance and iteration limit must be positive".into()));
        }
        if self.simulation.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if self.simulation.length == Some(0) {
            return Err(CliError::Config("trajectory length must be at least 1".into()));
        }
        Ok(())
    }

    pub fn candidates(&self) -> CliResult<Vec<TermId>> {
        parse_terms(&self.model.candidates)
    }

    pub fn fit_terms(&self) -> CliResult<Vec<TermId>> {
        match &self.model.terms {
            Some(t) => parse_terms(t),
            None => self.candidates(),
        }
    }

    pub fn conditions(&self) -> CliResult<Vec<ConditionName>> {
        let mut out = Vec::new();
        for c in &self.simulation.conditions {
            let c: ConditionName = c.parse().map_err(|e: rem_core::RemError| CliError::Config(e.to_string()))?;
            if out.contains(&c) {
                return Err(CliError::Config(format!("condition {c} listed twice")));
            }
            out.push(c);
        }
        if out.is_empty() {
            return Err(CliError::Config("at least one condition is required".into()));
        }
        out.sort();
        Ok(out)
    }

    pub fn prior(&self) -> CliResult<PriorSpec> {
        PriorSpec::new(self.prior.location, self.prior.scale, self.prior.df).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            tol: self.fit.tol,
            max_iter: self.fit.max_iter,
            start: None,
        }
    }

    pub fn selection_options(&self) -> SelectionOptions {
        SelectionOptions {
            fit: self.fit_options(),
            warm_start: self.model.warm_start,
            min_improvement: self.model.min_improvement,
            ..SelectionOptions::default()
        }
    }

    pub fn cache_bytes(&self) -> usize {
        self.fit.cache_mb.saturating_mul(1 << 20)
    }

    pub fn fit_dir(&self) -> PathBuf {
        self.output.fit_dir.clone().unwrap_or_else(|| self.output.dir.join("fits"))
    }

    pub fn require_seed(&self) -> CliResult<u64> {
        self.simulation
            .master_seed
            .ok_or_else(|| CliError::Config("a master seed (--seed or simulation.master_seed) is required".into()))
    }
}

fn parse_terms(names: &[String]) -> CliResult<Vec<TermId>> {
    let mut out = Vec::new();
    for n in names {
        let t: TermId = n.parse().map_err(|e: rem_core::RemError| CliError::Config(e.to_string()))?;
        if out.contains(&t) {
            return Err(CliError::Config(format!("term {t} listed twice")));
        }
        out.push(t);
    }
    out.sort();
    Ok(out)
}
