//! Subcommand implementations.

use std::collections::HashSet;

use log::{info, warn};
use rayon::prelude::*;
use rem_core::analysis::{
    adequacy_with, compare_groups, concentration_report, format_rate, p_stars, size_terciles, AdequacyReport,
    ConcentrationReport, GroupComparison,
};
use rem_core::event_data::{load_network_meta, load_networks, load_networks_json, summarize_network};
use rem_core::inference::{fit_map_with, posterior_interval};
use rem_core::selection::{exhaustive_select, hill_climb_select};
use rem_core::simulation::{derive_seed, run_knockout_experiment, TRAJECTORY_HEADER};
use rem_core::{
    ConditionName, FitResult, KnockoutCondition, ModelSpec, Network, RemData, SelectionTrace, SummaryTable, TermId,
    Trajectory,
};

use crate::config::{RunConfig, SelectionMode};
use crate::error::{CliError, CliResult};
use crate::output::{fit_path, read_json, slug, write_csv, write_json, Meta};

pub struct Context {
    pub cfg: RunConfig,
    pub command: String,
}

impl Context {
    fn meta(&self) -> Meta {
        Meta::new(&self.command, self.cfg.simulation.master_seed)
    }

    fn out(&self, name: &str) -> std::path::PathBuf {
        self.cfg.output.dir.join(name)
    }
}

pub fn load_inputs(cfg: &RunConfig) -> CliResult<Vec<Network>> {
    let mut networks = match (&cfg.input.json, &cfg.input.events, &cfg.input.actors) {
        (Some(json), _, _) => load_networks_json(json)?,
        (None, Some(ev), Some(ac)) => load_networks(ev, ac)?,
        _ => return Err(CliError::Config("no input files".into())),
    };
    if let Some(meta) = &cfg.input.meta {
        let flags = load_network_meta(meta)?;
        for n in &mut networks {
            if let Some(&f) = flags.get(n.id()) {
                n.specialist = Some(f);
            }
        }
    }
    if !cfg.input.networks.is_empty() {
        for id in &cfg.input.networks {
            if !networks.iter().any(|n| n.id() == id) {
                return Err(CliError::Config(format!("network `{id}` is not in the input")));
            }
        }
        networks.retain(|n| cfg.input.networks.iter().any(|id| id == n.id()));
    }
    if networks.is_empty() {
        return Err(CliError::Data("the input contains no networks".into()));
    }
    let mut seen = HashSet::new();
    for n in &networks {
        if !seen.insert(slug(n.id())) {
            return Err(CliError::Data(format!(
                "network ids collide after conversion to file names: `{}`",
                slug(n.id())
            )));
        }
    }
    Ok(networks)
}

pub fn write_resolved_config(ctx: &Context) -> CliResult<()> {
    let path = ctx.out("config.toml");
    crate::output::ensure_dir(&ctx.cfg.output.dir)?;
    let body = toml::to_string(&ctx.cfg).map_err(|e| CliError::Output(e.to_string()))?;
    let seed = ctx.cfg.simulation.master_seed.map_or("none".to_string(), |s| s.to_string());
    let text = format!("# rem {} {}; seed={seed}\n{body}", crate::output::VERSION, ctx.command);
    std::fs::write(&path, text).map_err(|e| crate::error::output_err(&path, e))
}

// ---------------------------------------------------------------- summarize

pub fn summarize(ctx: &Context, networks: &[Network]) -> CliResult<()> {
    let table = SummaryTable::new(networks.iter().map(summarize_network).collect())?;
    let rows = table.formatted();
    write_csv(&ctx.out("summary.csv"), &ctx.meta(), &rem_core::event_data::SUMMARY_HEADER, &rows)?;
    write_json(&ctx.out("summary.json"), &ctx.meta(), &table)?;
    println!("summary: {} networks", networks.len());
    Ok(())
}

// ---------------------------------------------------------------- fitting

fn cached<'a>(ctx: &Context, n: &'a Network, terms: &[TermId]) -> CliResult<RemData<'a>> {
    let data = RemData::with_cache(&n.actors, &n.events, terms, ctx.cfg.cache_bytes())?;
    if !data.is_cached() && !terms.is_empty() {
        info!("{}: statistics exceed the cache budget; streaming", n.id());
    }
    Ok(data)
}

fn save_fits(ctx: &Context, fits: &[(String, FitResult)]) -> CliResult<()> {
    let dir = ctx.cfg.fit_dir();
    for (id, fit) in fits {
        write_json(&fit_path(&dir, id), &ctx.meta(), fit)?;
    }
    write_coefficient_tables(ctx, fits)
}

pub fn fit(ctx: &Context, networks: &[Network]) -> CliResult<()> {
    let spec = ModelSpec::new(ctx.cfg.fit_terms()?)?;
    let prior = ctx.cfg.prior()?;
    let opts = ctx.cfg.fit_options();
    let fits: Vec<(String, FitResult)> = networks
        .par_iter()
        .map(|n| {
            let data = cached(ctx, n, spec.terms())?;
            let fit = fit_map_with(&data, &spec.clone().with_network(n.id()), &prior, &opts)?;
            if !fit.converged {
                warn!("{}: {}", n.id(), fit.warnings.join("; "));
            }
            Ok((n.id().to_string(), fit))
        })
        .collect::<CliResult<_>>()?;
    save_fits(ctx, &fits)?;
    println!("fit: {} networks, {} terms", fits.len(), spec.len());
    Ok(())
}

pub fn select(ctx: &Context, networks: &[Network]) -> CliResult<()> {
    let candidates = ctx.cfg.candidates()?;
    let prior = ctx.cfg.prior()?;
    let opts = ctx.cfg.selection_options();
    let traces: Vec<(String, SelectionTrace)> = networks
        .par_iter()
        .map(|n| {
            let data = cached(ctx, n, &candidates)?;
            let trace = match ctx.cfg.model.selection {
                SelectionMode::HillClimb => hill_climb_select(&candidates, &data, &prior, &opts)?,
                SelectionMode::Exhaustive => exhaustive_select(&candidates, &data, &prior, &opts)?,
            };
            info!("{}: selected {{{}}}", n.id(), trace.selected().names().join(", "));
            Ok((n.id().to_string(), trace))
        })
        .collect::<CliResult<_>>()?;
    let mut rows = Vec::new();
    for (id, trace) in &traces {
        write_json(&ctx.out(&format!("selection/{}.json", slug(id))), &ctx.meta(), trace)?;
        for (k, s) in trace.steps.iter().enumerate() {
            rows.push(vec![
                id.clone(),
                k.to_string(),
                format!("{:?}", s.action).to_lowercase(),
                s.term.map(|t| t.name().to_string()).unwrap_or_default(),
                s.spec.names().join(" "),
                s.aicc.to_string(),
            ]);
        }
    }
    write_csv(
        &ctx.out("selection_steps.csv"),
        &ctx.meta(),
        &["network", "step", "action", "term", "spec", "aicc"],
        &rows,
    )?;
    let fits: Vec<(String, FitResult)> = traces.into_iter().map(|(id, t)| (id, t.final_fit)).collect();
    save_fits(ctx, &fits)?;
    println!("select: {} networks", fits.len());
    Ok(())
}

fn write_coefficient_tables(ctx: &Context, fits: &[(String, FitResult)]) -> CliResult<()> {
    let used: Vec<TermId> = TermId::ALL
        .into_iter()
        .filter(|&t| fits.iter().any(|(_, f)| f.spec.contains(t)))
        .collect();
    let mut header = vec!["term"];
    header.extend(fits.iter().map(|(id, _)| id.as_str()));
    let mut wide = Vec::new();
    for &t in &used {
        let mut est = vec![t.name().to_string()];
        let mut sd = vec![String::new()];
        for (_, f) in fits {
            match f.spec.position(t) {
                Some(k) => {
                    est.push(format!(
                        "{:.2}{}",
                        f.mode[k],
                        rem_core::inference::star_code(f.mode[k], f.std_dev[k])
                    ));
                    sd.push(format!("({:.2})", f.std_dev[k]));
                }
                None => {
                    est.push(String::new());
                    sd.push(String::new());
                }
            }
        }
        wide.push(est);
        wide.push(sd);
    }
    let mut aicc = vec!["AICc".to_string()];
    aicc.extend(fits.iter().map(|(_, f)| f.aicc.map(|a| format!("{a:.2}")).unwrap_or_default()));
    wide.push(aicc);
    write_csv(&ctx.out("coefficients.csv"), &ctx.meta(), &header, &wide)?;

    let mut long = Vec::new();
    let mut effects = Vec::new();
    for (id, f) in fits {
        for iv in posterior_interval(f, 0.95)? {
            long.push(vec![
                id.clone(),
                iv.term.name().to_string(),
                iv.mode.to_string(),
                iv.std_dev.to_string(),
                iv.low.to_string(),
                iv.high.to_string(),
                iv.stars,
            ]);
        }
        let mut row = vec![id.clone()];
        row.extend(TermId::ALL.iter().map(|&t| match f.coefficient(t) {
            Some(v) if v > 0.0 => "+".to_string(),
            Some(v) if v < 0.0 => "-".to_string(),
            Some(_) => "0".to_string(),
            None => String::new(),
        }));
        effects.push(row);
    }
    write_csv(
        &ctx.out("coefficients_long.csv"),
        &ctx.meta(),
        &["network", "term", "mode", "sd", "low95", "high95", "stars"],
        &long,
    )?;
    let mut header = vec!["network"];
    header.extend(TermId::ALL.iter().map(|t| t.name()));
    write_csv(&ctx.out("effects.csv"), &ctx.meta(), &header, &effects)
}

pub fn load_fit(ctx: &Context, n: &Network) -> CliResult<FitResult> {
    let path = fit_path(&ctx.cfg.fit_dir(), n.id());
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "no fit for network `{}` (expected {}); run `fit` or `select` first",
            n.id(),
            path.display()
        )));
    }
    let fit: FitResult = read_json(&path)?;
    if fit.spec.network_id() != n.id() {
        return Err(CliError::Data(format!(
            "{} holds a fit for `{}`, not `{}`",
            path.display(),
            fit.spec.network_id(),
            n.id()
        )));
    }
    if fit.n_actors != n.actors.len() {
        return Err(CliError::Data(format!(
            "{}: fit has {} actors, network has {}",
            path.display(),
            fit.n_actors,
            n.actors.len()
        )));
    }
    Ok(fit)
}

// ---------------------------------------------------------------- adequacy

pub fn adequacy(ctx: &Context, networks: &[Network]) -> CliResult<()> {
    let fits: Vec<FitResult> = networks.iter().map(|n| load_fit(ctx, n)).collect::<CliResult<_>>()?;
    let reports: Vec<AdequacyReport> = networks
        .par_iter()
        .zip(&fits)
        .map(|(n, f)| {
            let data = cached(ctx, n, f.spec.terms())?;
            Ok(adequacy_with(f, &data)?)
        })
        .collect::<CliResult<_>>()?;
    let fmt = |r: [f64; 7]| {
        vec![
            format!("{:.2}", r[0]),
            format!("{:.2}", r[1]),
            format!("{:.2}", r[2]),
            format_rate(r[3], 3),
            format!("{:.2}", r[4]),
            format!("{:.2}", r[5]),
            format!("{:.2}", r[6]),
        ]
    };
    let values = |r: &AdequacyReport| {
        [
            r.either_rate,
            r.null_either_rate,
            r.both_rate,
            r.null_both_rate,
            r.recall_1,
            r.recall_5,
            r.recall_10,
        ]
    };
    let mut rows = Vec::new();
    let mut sum = [0.0; 7];
    for r in &reports {
        let v = values(r);
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        let mut row = vec![r.network_id.clone()];
        row.extend(fmt(v));
        rows.push(row);
    }
    let mut mean_row = vec!["Mean".to_string()];
    mean_row.extend(fmt(sum.map(|s| s / reports.len() as f64)));
    rows.push(mean_row);
    write_csv(
        &ctx.out("adequacy.csv"),
        &ctx.meta(),
        &[
            "network",
            "either_fitted",
            "either_null",
            "both_fitted",
            "both_null",
            "recall_top1",
            "recall_top5",
            "recall_top10",
        ],
        &rows,
    )?;
    write_json(&ctx.out("adequacy.json"), &ctx.meta(), &reports)?;
    println!("adequacy: {} networks", reports.len());
    Ok(())
}

// ---------------------------------------------------------------- simulation

fn network_seed(master: u64, id: &str) -> u64 {
    // FNV-1a of the id keeps seeds stable when networks are filtered
    let h = id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    derive_seed(master, &[h])
}

struct Simulated {
    fit: FitResult,
    trajectories: Vec<Trajectory>,
}

fn run_simulations(ctx: &Context, networks: &[Network]) -> CliResult<Vec<Simulated>> {
    let master = ctx.cfg.require_seed()?;
    let conditions: Vec<KnockoutCondition> =
        ctx.cfg.conditions()?.into_iter().map(KnockoutCondition::new).collect();
    let fits: Vec<FitResult> = networks.iter().map(|n| load_fit(ctx, n)).collect::<CliResult<_>>()?;
    let sims: Vec<Simulated> = networks
        .par_iter()
        .zip(fits)
        .map(|(n, fit)| {
            let m = ctx.cfg.simulation.length.unwrap_or(n.events.len());
            let trajectories = run_knockout_experiment(
                &fit,
                &n.actors,
                m,
                ctx.cfg.simulation.replicates,
                &conditions,
                network_seed(master, n.id()),
            )?;
            Ok(Simulated { fit, trajectories })
        })
        .collect::<CliResult<_>>()?;
    for (n, s) in networks.iter().zip(&sims) {
        write_trajectories(ctx, n, s)?;
    }
    Ok(sims)
}

fn write_trajectories(ctx: &Context, n: &Network, s: &Simulated) -> CliResult<()> {
    let dir = ctx.out(&format!("trajectories/{}", slug(n.id())));
    let width = (ctx.cfg.simulation.replicates.max(2) - 1).to_string().len().max(3);
    for t in &s.trajectories {
        let rep = t.replicate.to_string();
        let seed = t.seed.to_string();
        let rows = t.events.iter().enumerate().map(|(k, e)| {
            [
                n.id().to_string(),
                (k + 1).to_string(),
                n.actors.id(e.sender).to_string(),
                n.actors.id(e.receiver).to_string(),
                t.condition.as_str().to_string(),
                rep.clone(),
                seed.clone(),
            ]
        });
        let path = dir.join(format!("{}_r{:0width$}.csv", t.condition, t.replicate));
        write_csv(&path, &ctx.meta(), &TRAJECTORY_HEADER, rows)?;
    }
    let mut header = vec!["replicate", "condition", "seed"];
    header.extend(s.fit.spec.names());
    let rows = s.trajectories.iter().map(|t| {
        let mut row = vec![t.replicate.to_string(), t.condition.to_string(), t.seed.to_string()];
        row.extend(t.theta.iter().map(|v| v.to_string()));
        row
    });
    write_csv(
        &ctx.out(&format!("parameters/{}.csv", slug(n.id()))),
        &ctx.meta(),
        &header,
        rows,
    )
}

pub fn simulate(ctx: &Context, networks: &[Network]) -> CliResult<()> {
    let sims = run_simulations(ctx, networks)?;
    let total: usize = sims.iter().map(|s| s.trajectories.len()).sum();
    println!("simulate: {total} trajectories");
    Ok(())
}

pub fn knockout(ctx: &Context, networks: &[Network]) -> CliResult<()> {
    let sims = run_simulations(ctx, networks)?;
    let mut reports: Vec<ConcentrationReport> = Vec::new();
    for (n, s) in networks.iter().zip(&sims) {
        let mut r = concentration_report(&s.fit, &n.actors, &s.trajectories)?;
        r.specialist = n.specialist;
        reports.push(r);
    }
    let conditions = ctx.cfg.conditions()?;

    let mut header = vec!["network"];
    header.extend(conditions.iter().map(|c| c.as_str()));
    let theil_rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.network_id.clone()];
            row.extend(conditions.iter().map(|&c| match r.get(c) {
                Some(cc) if cc.applicable => format!("{:.2}", cc.mean_theil),
                _ => String::new(),
            }));
            row
        })
        .collect();
    write_csv(&ctx.out("theil.csv"), &ctx.meta(), &header, &theil_rows)?;

    let knocked: Vec<ConditionName> = conditions.iter().copied().filter(|&c| c != ConditionName::Full).collect();
    if conditions.contains(&ConditionName::Full) && !knocked.is_empty() {
        let mut header = vec!["network"];
        header.extend(knocked.iter().map(|c| c.as_str()));
        let rows: Vec<Vec<String>> = reports
            .iter()
            .map(|r| {
                let mut row = vec![r.network_id.clone()];
                row.extend(knocked.iter().map(|&c| match r.get(c) {
                    Some(cc) if cc.applicable => match cc.percent_change {
                        Some(p) => format!("{p:.2}{}", cc.p_value.map(p_stars).unwrap_or("")),
                        None => String::new(),
                    },
                    _ => String::new(),
                }));
                row
            })
            .collect();
        write_csv(&ctx.out("percent_change.csv"), &ctx.meta(), &header, &rows)?;
    }

    let mut excess = Vec::new();
    for r in &reports {
        for cc in &r.conditions {
            excess.push(vec![
                r.network_id.clone(),
                cc.condition.to_string(),
                cc.applicable.to_string(),
                cc.mean_theil.to_string(),
                cc.percent_change.map(|v| v.to_string()).unwrap_or_default(),
                cc.excess.map(|v| v.to_string()).unwrap_or_default(),
                cc.p_value.map(|v| v.to_string()).unwrap_or_default(),
            ]);
        }
    }
    write_csv(
        &ctx.out("excess_concentration.csv"),
        &ctx.meta(),
        &["network", "condition", "applicable", "mean_theil", "percent_change", "excess", "p_value"],
        &excess,
    )?;
    write_json(&ctx.out("concentration.json"), &ctx.meta(), &reports)?;

    let groups = group_comparisons(&reports);
    let mut rows = Vec::new();
    for g in &groups {
        for m in &g.groups {
            rows.push(vec![
                g.grouping.clone(),
                g.condition.to_string(),
                m.group.clone(),
                m.n_networks.to_string(),
                format!("{:.2}", m.mean_percent_change),
                g.test.clone().unwrap_or_default(),
                g.statistic.map(|v| v.to_string()).unwrap_or_default(),
                g.p_value.map(|v| v.to_string()).unwrap_or_default(),
            ]);
        }
    }
    write_csv(
        &ctx.out("group_comparison.csv"),
        &ctx.meta(),
        &["grouping", "condition", "group", "n_networks", "mean_percent_change", "test", "statistic", "p_value"],
        &rows,
    )?;
    write_json(&ctx.out("group_comparison.json"), &ctx.meta(), &groups)?;
    let total: usize = sims.iter().map(|s| s.trajectories.len()).sum();
    println!("knockout: {total} trajectories, {} networks", reports.len());
    Ok(())
}

fn group_comparisons(reports: &[ConcentrationReport]) -> Vec<GroupComparison> {
    let mut out = Vec::new();
    let flagged: Vec<ConcentrationReport> = reports.iter().filter(|r| r.specialist.is_some()).cloned().collect();
    if !flagged.is_empty() {
        let labels: Vec<String> = flagged
            .iter()
            .map(|r| if r.specialist == Some(true) { "Specialist" } else { "Non-Specialist" }.to_string())
            .collect();
        out.extend(compare_groups("specialization", &flagged, &labels));
    }
    let sizes: Vec<usize> = reports.iter().map(|r| r.n_actors).collect();
    out.extend(compare_groups("size", reports, &size_terciles(&sizes)));
    out
}

// ---------------------------------------------------------------- report

pub fn report(ctx: &Context, networks: &[Network]) -> CliResult<()> {
    ctx.cfg.require_seed()?;
    summarize(ctx, networks)?;
    select(ctx, networks)?;
    adequacy(ctx, networks)?;
    knockout(ctx, networks)
}
