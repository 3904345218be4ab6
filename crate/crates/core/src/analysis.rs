//! Concentration, adequacy and significance metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{RemError, Result};
use crate::event_data::{ActorTable, EventSequence};
use crate::inference::{FitResult, RemData};
use crate::simulation::{ConditionName, KnockoutCondition, Trajectory};
use crate::statistics::dyad_at;

/// Theil T index; zero entries contribute nothing.
pub fn theil_index(volumes: &[f64]) -> Result<f64> {
    if volumes.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(RemError::InvalidArgument("volumes must be finite and nonnegative".into()));
    }
    let n = volumes.len() as f64;
    let total: f64 = volumes.iter().sum();
    if total <= 0.0 {
        return Err(RemError::Degenerate("all volumes are zero".into()));
    }
    let mean = total / n;
    let t = volumes
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| {
            let r = x / mean;
            r * r.ln()
        })
        .sum::<f64>()
        / n;
    Ok(t)
}

/// Affine rescaling with the all-removed level at 0 and the full model at 1.
pub fn excess_concentration(condition: f64, full: f64, all_removed: f64) -> Result<f64> {
    let span = full - all_removed;
    if span == 0.0 || !span.is_finite() {
        return Err(RemError::Degenerate(
            "full and all-removed concentration coincide".into(),
        ));
    }
    Ok((condition - all_removed) / span)
}

pub fn percent_change(knockout_mean: f64, full_mean: f64) -> Result<f64> {
    if full_mean == 0.0 {
        return Err(RemError::Degenerate("percent change against a zero baseline".into()));
    }
    Ok(100.0 * (knockout_mean - full_mean) / full_mean)
}

/// Chance that a uniformly drawn dyad shares sender or receiver with a fixed one.
pub fn null_either_rate(n_actors: usize) -> f64 {
    let n = n_actors as f64;
    (2.0 * n - 3.0) / (n * (n - 1.0))
}

pub fn null_both_rate(n_actors: usize) -> f64 {
    let n = n_actors as f64;
    1.0 / (n * (n - 1.0))
}

pub const RECALL_PERCENTS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdequacyReport {
    pub network_id: String,
    pub n_actors: usize,
    pub n_events: usize,
    pub either_rate: f64,
    pub both_rate: f64,
    pub null_either_rate: f64,
    pub null_both_rate: f64,
    pub recall_1: f64,
    pub recall_5: f64,
    pub recall_10: f64,
}

/// Number of top-ranked dyads covered by the top `percent` of predictions.
pub fn recall_cutoff(n_dyads: usize, percent: usize) -> usize {
    (n_dyads * percent).div_ceil(100)
}

/// Next-event prediction quality of a fitted model on its own sequence.
///
/// Dyads are ranked by rate; ties go to the lower canonical dyad index.
pub fn adequacy(fit: &FitResult, events: &EventSequence, actors: &ActorTable) -> Result<AdequacyReport> {
    let data = RemData::new(actors, events);
    adequacy_with(fit, &data)
}

pub fn adequacy_with(fit: &FitResult, data: &RemData<'_>) -> Result<AdequacyReport> {
    let actors = data.actors();
    let n = actors.len();
    let n_dyads = actors.n_dyads();
    let cutoffs = RECALL_PERCENTS.map(|p| recall_cutoff(n_dyads, p));
    let mut either = 0usize;
    let mut both = 0usize;
    let mut covered = [0usize; 3];
    data.for_each_predictor(&fit.mode, &fit.spec, |_, obs, eta| {
        let mut top = 0;
        for (d, &v) in eta.iter().enumerate() {
            if v > eta[top] {
                top = d;
            }
        }
        let (ts, tr) = dyad_at(n, top);
        let (os, or) = dyad_at(n, obs);
        if ts == os || tr == or {
            either += 1;
        }
        if top == obs {
            both += 1;
        }
        let target = eta[obs];
        let rank = 1 + eta
            .iter()
            .enumerate()
            .filter(|&(d, &v)| v > target || (v == target && d < obs))
            .count();
        for (c, &cut) in covered.iter_mut().zip(&cutoffs) {
            if rank <= cut {
                *c += 1;
            }
        }
    })?;
    let m = data.events().len() as f64;
    Ok(AdequacyReport {
        network_id: actors.network_id().to_string(),
        n_actors: n,
        n_events: data.events().len(),
        either_rate: either as f64 / m,
        both_rate: both as f64 / m,
        null_either_rate: null_either_rate(n),
        null_both_rate: null_both_rate(n),
        recall_1: covered[0] as f64 / m,
        recall_5: covered[1] as f64 / m,
        recall_10: covered[2] as f64 / m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch two-sample t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(RemError::Degenerate("each sample needs at least 2 values".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return Err(RemError::Degenerate("both samples have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2
        / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| RemError::Degenerate(format!("t distribution: {e}")))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TestResult {
        statistic: t,
        df,
        p_value: p,
    })
}

/// 1-based ranks with ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Kruskal-Wallis H with tie correction and a chi-square p-value.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 3 {
        return Err(RemError::InvalidArgument("Kruskal-Wallis needs at least 3 groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(RemError::InvalidArgument("every group must be nonempty".into()));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Err(RemError::Degenerate("all values are identical".into()));
    }
    let ranks = midranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h_raw = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let mut ties = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    let h = (h_raw / (1.0 - ties / (n * n * n - n))).max(0.0);
    let df = (groups.len() - 1) as f64;
    let dist = ChiSquared::new(df).map_err(|e| RemError::Degenerate(format!("chi-square: {e}")))?;
    Ok(TestResult {
        statistic: h,
        df,
        p_value: dist.sf(h),
    })
}

/// `*`, `**`, `***` for p below 0.05, 0.01, 0.001.
pub fn p_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionConcentration {
    pub condition: ConditionName,
    /// False when the fitted model has none of the condition's terms.
    pub applicable: bool,
    pub theil: Vec<f64>,
    pub mean_theil: f64,
    pub percent_change: Option<f64>,
    pub excess: Option<f64>,
    pub t_statistic: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub network_id: String,
    pub n_actors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specialist: Option<bool>,
    pub conditions: Vec<ConditionConcentration>,
}

impl ConcentrationReport {
    pub fn get(&self, name: ConditionName) -> Option<&ConditionConcentration> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

/// Theil summaries of one network's knock-out trajectories.
pub fn concentration_report(
    fit: &FitResult,
    actors: &ActorTable,
    trajectories: &[Trajectory],
) -> Result<ConcentrationReport> {
    let mut by_condition: BTreeMap<ConditionName, Vec<(usize, f64)>> = BTreeMap::new();
    for t in trajectories {
        let theil = theil_index(&t.volumes(actors.len()))?;
        by_condition.entry(t.condition).or_default().push((t.replicate, theil));
    }
    let mut series: BTreeMap<ConditionName, Vec<f64>> = BTreeMap::new();
    for (c, mut v) in by_condition {
        v.sort_by_key(|&(r, _)| r);
        series.insert(c, v.into_iter().map(|(_, x)| x).collect());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let full = series.get(&ConditionName::Full).cloned();
    let full_mean = full.as_deref().map(mean);
    let all_mean = series.get(&ConditionName::AllRemoved).map(|v| mean(v));

    let conditions = series
        .iter()
        .map(|(&c, theil)| {
            let m = mean(theil);
            let is_full = c == ConditionName::Full;
            let percent = match full_mean {
                Some(f) if !is_full => percent_change(m, f).ok(),
                _ => None,
            };
            let excess = match (full_mean, all_mean) {
                (Some(f), Some(a)) => excess_concentration(m, f, a).ok(),
                _ => None,
            };
            let test = match &full {
                Some(f) if !is_full => welch_t_test(theil, f).ok(),
                _ => None,
            };
            ConditionConcentration {
                condition: c,
                applicable: is_full || KnockoutCondition::new(c).applies_to(&fit.spec),
                theil: theil.clone(),
                mean_theil: m,
                percent_change: percent,
                excess,
                t_statistic: test.map(|t| t.statistic),
                p_value: test.map(|t| t.p_value),
            }
        })
        .collect();
    Ok(ConcentrationReport {
        network_id: actors.network_id().to_string(),
        n_actors: actors.len(),
        specialist: None,
        conditions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub group: String,
    pub n_networks: usize,
    pub mean_percent_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub grouping: String,
    pub condition: ConditionName,
    pub groups: Vec<GroupMean>,
    /// `welch` for two groups, `kruskal_wallis` for three or more.
    pub test: Option<String>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

/// Mean percent change per group for every knock-out condition, with a
/// between-group test where the group sizes allow one.
pub fn compare_groups(
    grouping: &str,
    reports: &[ConcentrationReport],
    labels: &[String],
) -> Vec<GroupComparison> {
    let mut out = Vec::new();
    for c in ConditionName::ALL.into_iter().filter(|&c| c != ConditionName::Full) {
        let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (r, label) in reports.iter().zip(labels) {
            if let Some(cc) = r.get(c) {
                if let (true, Some(p)) = (cc.applicable, cc.percent_change) {
                    groups.entry(label.as_str()).or_default().push(p);
                }
            }
        }
        if groups.is_empty() {
            continue;
        }
        let samples: Vec<Vec<f64>> = groups.values().cloned().collect();
        let (test, result) = match samples.len() {
            2 => ("welch", welch_t_test(&samples[0], &samples[1]).ok()),
            k if k >= 3 => ("kruskal_wallis", kruskal_wallis(&samples).ok()),
            _ => ("", None),
        };
        out.push(GroupComparison {
            grouping: grouping.to_string(),
            condition: c,
            groups: groups
                .iter()
                .map(|(g, v)| GroupMean {
                    group: g.to_string(),
                    n_networks: v.len(),
                    mean_percent_change: v.iter().sum::<f64>() / v.len() as f64,
                })
                .collect(),
            test: result.map(|_| test.to_string()),
            statistic: result.map(|r| r.statistic),
            p_value: result.map(|r| r.p_value),
        });
    }
    out
}

/// Labels networks `small`, `medium`, `large` by tercile of actor count.
pub fn size_terciles(n_actors: &[usize]) -> Vec<String> {
    let mut order: Vec<usize> = (0..n_actors.len()).collect();
    order.sort_by_key(|&k| (n_actors[k], k));
    let mut labels = vec![String::new(); n_actors.len()];
    let n = n_actors.len();
    for (rank, &k) in order.iter().enumerate() {
        labels[k] = match rank * 3 / n.max(1) {
            0 => "small",
            1 => "medium",
            _ => "large",
        }
        .to_string();
    }
    labels
}

/// Two-decimal rate; below-resolution values print as `<0.001` style.
pub fn format_rate(x: f64, decimals: usize) -> String {
    let floor = 10f64.powi(-(decimals as i32));
    if x > 0.0 && x < floor {
        format!("<{floor:.decimals$}")
    } else {
        format!("{x:.decimals$}")
    }
}
