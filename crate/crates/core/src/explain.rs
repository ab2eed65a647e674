//! Cohort Shapley attribution of per-date skill differences, Shapley-effects
//! variable importance, per-bin positive-impact probabilities, and the
//! opportunistic deployment selector.
//!
//! A coalition's value for a subject is the mean outcome over the cohort of
//! subjects matching it on every coalition variable's bin; Shapley values
//! are computed by exact subset enumeration with memoized cohort means.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::CalendarDate;
use crate::error::{Error, Result};
use crate::metrics::{bootstrap_ci, quantile_sorted, CiInterval};
use crate::seeding::derive_seed;

/// Largest variable count handled by exact 2^V enumeration.
pub const MAX_EXACT_VARIABLES: usize = 20;

/// How an explanatory variable is binned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    /// Ten bins at the deciles of the observed values.
    Continuous,
    /// One bin per distinct value.
    Categorical,
}

/// A binned explanatory variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinnedVariable {
    pub name: String,
    pub kind: VariableKind,
    pub raw: Vec<f64>,
    /// Bin id per subject.
    pub bins: Vec<usize>,
    /// Number of bin ids (some continuous bins may be empty under ties).
    pub n_bins: usize,
    /// Decile boundaries for continuous variables.
    pub boundaries: Option<Vec<f64>>,
    /// Distinct values for categorical variables, in bin-id order.
    pub categories: Option<Vec<f64>>,
}

/// Per-forecast outcomes and binned explanatory variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationTable {
    pub dates: Vec<CalendarDate>,
    pub outcomes: Vec<f64>,
    pub variables: Vec<BinnedVariable>,
}

/// Bins one variable: continuous values into ten left-closed decile bins
/// (boundary values go to the upper bin), categorical values into one bin
/// per distinct value. A constant continuous variable collapses to a single
/// bin with a warning.
pub fn bin_variable(name: &str, kind: VariableKind, raw: &[f64]) -> Result<BinnedVariable> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("variable {name} contains non-finite values")));
    }
    match kind {
        VariableKind::Continuous => {
            if raw.len() < 10 {
                return Err(Error::Domain(format!(
                    "decile binning of {name} needs >= 10 subjects, got {}",
                    raw.len()
                )));
            }
            let mut sorted = raw.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if sorted[0] == sorted[sorted.len() - 1] {
                log::warn!("variable {name} is constant; using a single bin");
                return Ok(BinnedVariable {
                    name: name.to_string(),
                    kind,
                    raw: raw.to_vec(),
                    bins: vec![0; raw.len()],
                    n_bins: 1,
                    boundaries: Some(Vec::new()),
                    categories: None,
                });
            }
            let boundaries: Vec<f64> = (1..10)
                .map(|k| quantile_sorted(&sorted, k as f64 / 10.0))
                .collect();
            let bins: Vec<usize> = raw
                .iter()
                .map(|v| boundaries.partition_point(|b| b <= v))
                .collect();
            Ok(BinnedVariable {
                name: name.to_string(),
                kind,
                raw: raw.to_vec(),
                bins,
                n_bins: 10,
                boundaries: Some(boundaries),
                categories: None,
            })
        }
        VariableKind::Categorical => {
            let mut categories: Vec<f64> = raw.to_vec();
            categories.sort_by(|a, b| a.partial_cmp(b).unwrap());
            categories.dedup();
            let bins: Vec<usize> = raw
                .iter()
                .map(|v| categories.partition_point(|c| c < v))
                .collect();
            Ok(BinnedVariable {
                name: name.to_string(),
                kind,
                raw: raw.to_vec(),
                n_bins: categories.len(),
                bins,
                boundaries: None,
                categories: Some(categories),
            })
        }
    }
}

impl ExplanationTable {
    /// Builds a table from per-date outcomes and raw variables, applying
    /// [`bin_variable`] to each.
    pub fn build(
        dates: Vec<CalendarDate>,
        outcomes: Vec<f64>,
        raw_variables: Vec<(String, VariableKind, Vec<f64>)>,
    ) -> Result<Self> {
        let n = dates.len();
        if outcomes.len() != n {
            return Err(Error::Shape(format!(
                "{} outcomes for {} dates",
                outcomes.len(),
                n
            )));
        }
        let mut variables = Vec::with_capacity(raw_variables.len());
        for (name, kind, raw) in raw_variables {
            if raw.len() != n {
                return Err(Error::Shape(format!(
                    "variable {name} has {} values for {} dates",
                    raw.len(),
                    n
                )));
            }
            variables.push(bin_variable(&name, kind, &raw)?);
        }
        Ok(ExplanationTable {
            dates,
            outcomes,
            variables,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.dates.len()
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }
}

/// Cohort Shapley values per subject and variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapleyResult {
    /// `phi[subject][variable]`.
    pub phi: Vec<Vec<f64>>,
}

/// Shapley weight `|S|! (V - |S| - 1)! / V! = 1 / (V * C(V-1, |S|))`.
fn shapley_weights(n_vars: usize) -> Vec<f64> {
    let v = n_vars as f64;
    (0..n_vars)
        .map(|s| {
            let mut binom = 1.0;
            for k in 0..s {
                binom *= (n_vars - 1 - k) as f64 / (k + 1) as f64;
            }
            1.0 / (v * binom)
        })
        .collect()
}

const WORD: usize = 64;

fn cohort_and(dst: &mut [u64], src: &[u64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d &= s;
    }
}

fn masked_sum(mask: &[u64], outcomes: &[f64]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (w, &bits) in mask.iter().enumerate() {
        let mut b = bits;
        while b != 0 {
            let i = w * WORD + b.trailing_zeros() as usize;
            sum += outcomes[i];
            count += 1;
            b &= b - 1;
        }
    }
    (sum, count)
}

/// Cohort Shapley attribution for one subject: exact enumeration over all
/// 2^V coalitions with memoized cohort means. `v(S)` is the mean outcome
/// over subjects matching `subject`'s bins on every variable in `S`;
/// `v(empty)` is the grand mean.
pub fn cohort_shapley(table: &ExplanationTable, subject: usize) -> Result<Vec<f64>> {
    let v = table.n_variables();
    if v > MAX_EXACT_VARIABLES {
        return Err(Error::Domain(format!(
            "exact Cohort Shapley enumerates 2^V coalitions; V = {v} exceeds {MAX_EXACT_VARIABLES}. \
             Select a subset of variables."
        )));
    }
    if subject >= table.n_subjects() {
        return Err(Error::Domain(format!("subject {subject} out of range")));
    }
    let n = table.n_subjects();
    let words = n.div_ceil(WORD);

    // Per-variable bitmask of subjects matching this subject's bin.
    let mut matches: Vec<Vec<u64>> = Vec::with_capacity(v);
    for var in &table.variables {
        let my_bin = var.bins[subject];
        let mut mask = vec![0u64; words];
        for (i, &b) in var.bins.iter().enumerate() {
            if b == my_bin {
                mask[i / WORD] |= 1 << (i % WORD);
            }
        }
        matches.push(mask);
    }

    // Memoized cohort means over all coalitions.
    let n_masks = 1usize << v;
    let mut value = vec![0.0f64; n_masks];
    value[0] = table.outcomes.iter().sum::<f64>() / n as f64;
    let mut cohorts: Vec<Vec<u64>> = vec![Vec::new(); n_masks];
    let mut full = vec![u64::MAX; words];
    if n % WORD != 0 {
        full[words - 1] = (1u64 << (n % WORD)) - 1;
    }
    cohorts[0] = full;
    for mask in 1..n_masks {
        let low = mask.trailing_zeros() as usize;
        let mut cohort = cohorts[mask & (mask - 1)].clone();
        cohort_and(&mut cohort, &matches[low]);
        let (sum, count) = masked_sum(&cohort, &table.outcomes);
        // The cohort always contains the subject itself.
        debug_assert!(count > 0);
        value[mask] = sum / count as f64;
        cohorts[mask] = cohort;
    }

    let weights = shapley_weights(v);
    let mut phi = vec![0.0f64; v];
    for mask in 0..n_masks {
        let size = mask.count_ones() as usize;
        for (j, phi_j) in phi.iter_mut().enumerate() {
            let bit = 1usize << j;
            if mask & bit == 0 {
                *phi_j += weights[size] * (value[mask | bit] - value[mask]);
            }
        }
    }
    Ok(phi)
}

/// Cohort Shapley values for every subject (parallel over subjects).
pub fn cohort_shapley_all(table: &ExplanationTable) -> Result<ShapleyResult> {
    let phi: Result<Vec<Vec<f64>>> = (0..table.n_subjects())
        .into_par_iter()
        .map(|i| cohort_shapley(table, i))
        .collect();
    Ok(ShapleyResult { phi: phi? })
}

/// Per-variable Shapley effects: the mean squared Cohort Shapley value over
/// subjects, reported raw and normalized to sum to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapleyEffects {
    pub raw: Vec<f64>,
    pub normalized: Option<Vec<f64>>,
}

pub fn shapley_effects(result: &ShapleyResult) -> ShapleyEffects {
    if result.phi.is_empty() {
        return ShapleyEffects {
            raw: Vec::new(),
            normalized: None,
        };
    }
    let v = result.phi[0].len();
    let n = result.phi.len() as f64;
    let mut raw = vec![0.0; v];
    for row in &result.phi {
        for (r, p) in raw.iter_mut().zip(row) {
            *r += p * p;
        }
    }
    for r in &mut raw {
        *r /= n;
    }
    let total: f64 = raw.iter().sum();
    let normalized = if total > 0.0 {
        Some(raw.iter().map(|r| r / total).collect())
    } else {
        None
    };
    ShapleyEffects { raw, normalized }
}

/// Impact flag of a (variable, bin) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactFlag {
    High,
    Low,
    Intermediate,
}

/// Positive-impact summary of one (variable, bin) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinImpact {
    pub variable: usize,
    pub bin: usize,
    pub subjects: usize,
    /// Fraction of the bin's subjects with strictly positive Shapley value.
    pub p_positive: f64,
    pub ci: CiInterval,
    pub flag: ImpactFlag,
}

/// Per-bin positive-impact probabilities with flags, and per-subject counts
/// of high-impact variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpactSummary {
    pub bins: Vec<BinImpact>,
    /// Per subject: number of variables whose bin is flagged high.
    pub high_counts: Vec<usize>,
}

/// Computes per-(variable, bin) positive-impact probabilities with bootstrap
/// confidence intervals over the bin's subjects.
///
/// A bin is flagged high when its probability lies within the CI of the
/// variable's highest-probability bin, low when within the CI of the lowest
/// (high takes precedence when both apply). A variable with a single
/// non-empty bin is flagged intermediate. `phi = 0` counts as non-positive.
pub fn impact_probabilities(
    result: &ShapleyResult,
    table: &ExplanationTable,
    level: f64,
    resamples: u32,
    seed: u64,
) -> Result<ImpactSummary> {
    let n = table.n_subjects();
    if result.phi.len() != n {
        return Err(Error::Shape(format!(
            "Shapley result covers {} subjects, table {}",
            result.phi.len(),
            n
        )));
    }
    let mut bins = Vec::new();
    let mut high_flags: Vec<Vec<bool>> = Vec::with_capacity(table.n_variables());
    for (j, var) in table.variables.iter().enumerate() {
        let mut per_bin: Vec<(usize, Vec<f64>)> = Vec::new();
        for bin in 0..var.n_bins {
            let indicators: Vec<f64> = (0..n)
                .filter(|&i| var.bins[i] == bin)
                .map(|i| if result.phi[i][j] > 0.0 { 1.0 } else { 0.0 })
                .collect();
            if indicators.is_empty() {
                log::warn!("variable {} bin {bin} is empty; excluded", var.name);
                continue;
            }
            per_bin.push((bin, indicators));
        }
        let stats: Vec<(usize, usize, f64, CiInterval)> = per_bin
            .iter()
            .map(|(bin, ind)| {
                let p = ind.iter().sum::<f64>() / ind.len() as f64;
                let seed_b = derive_seed(seed, &format!("impact/{j}/{bin}"));
                let (lo, hi) = bootstrap_ci(ind, level, resamples, seed_b)?;
                Ok((*bin, ind.len(), p, CiInterval { lo, hi, level }))
            })
            .collect::<Result<_>>()?;
        let single_bin = stats.len() == 1;
        let max_idx = stats
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .2.partial_cmp(&b.1 .2).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let min_idx = stats
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .2.partial_cmp(&b.1 .2).unwrap().then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let max_ci = stats[max_idx].3;
        let min_ci = stats[min_idx].3;
        let mut flags_for_var = vec![false; var.n_bins];
        for (bin, count, p, ci) in stats {
            let flag = if single_bin {
                ImpactFlag::Intermediate
            } else if p >= max_ci.lo && p <= max_ci.hi {
                ImpactFlag::High
            } else if p >= min_ci.lo && p <= min_ci.hi {
                ImpactFlag::Low
            } else {
                ImpactFlag::Intermediate
            };
            if flag == ImpactFlag::High {
                flags_for_var[bin] = true;
            }
            bins.push(BinImpact {
                variable: j,
                bin,
                subjects: count,
                p_positive: p,
                ci,
                flag,
            });
        }
        high_flags.push(flags_for_var);
    }
    let high_counts: Vec<usize> = (0..n)
        .map(|i| {
            table
                .variables
                .iter()
                .enumerate()
                .filter(|(j, var)| high_flags[*j][var.bins[i]])
                .count()
        })
        .collect();
    Ok(ImpactSummary { bins, high_counts })
}

/// Per-date deployment choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deployment {
    Abc,
    Baseline,
}

/// Deploys ABC on dates where at least `k` variables sit in high-impact
/// bins.
pub fn opportunistic_select(high_counts: &[usize], k: usize) -> Vec<Deployment> {
    high_counts
        .iter()
        .map(|&c| if c >= k { Deployment::Abc } else { Deployment::Baseline })
        .collect()
}

/// Mean per-date skill of the opportunistic blend at threshold `k`.
fn blend_mean(abc: &[f64], baseline: &[f64], counts: &[usize], k: usize) -> f64 {
    let total: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| if c >= k { abc[i] } else { baseline[i] })
        .sum();
    total / counts.len() as f64
}

/// Sweeps the high-impact threshold and returns the `k` maximizing the mean
/// blended skill, with ties broken toward the smallest `k`. The sweep covers
/// both pure strategies: `k = 0` (always ABC) through `max(count) + 1`
/// (never ABC).
pub fn choose_k_star(
    abc_skill: &[f64],
    baseline_skill: &[f64],
    high_counts: &[usize],
) -> Result<(usize, Vec<(usize, f64)>)> {
    let n = high_counts.len();
    if n == 0 || abc_skill.len() != n || baseline_skill.len() != n {
        return Err(Error::Shape(format!(
            "choose_k_star expects equal non-empty lengths, got {} / {} / {n}",
            abc_skill.len(),
            baseline_skill.len()
        )));
    }
    let k_max = high_counts.iter().max().copied().unwrap_or(0) + 1;
    let mut table = Vec::with_capacity(k_max + 1);
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..=k_max {
        let mean = blend_mean(abc_skill, baseline_skill, high_counts, k);
        if mean > best.1 {
            best = (k, mean);
        }
        table.push((k, mean));
    }
    Ok((best.0, table))
}

/// The forecast most impacted by variable `j` within its high-impact bins:
/// the subject with the largest Shapley value there, ties broken toward the
/// earliest date. `None` when no subject sits in a high bin.
pub fn most_impacted_forecast(
    result: &ShapleyResult,
    table: &ExplanationTable,
    summary: &ImpactSummary,
    variable: usize,
) -> Option<usize> {
    let high_bins: Vec<usize> = summary
        .bins
        .iter()
        .filter(|b| b.variable == variable && b.flag == ImpactFlag::High)
        .map(|b| b.bin)
        .collect();
    let var = &table.variables[variable];
    let mut best: Option<(usize, f64)> = None;
    for i in 0..table.n_subjects() {
        if !high_bins.contains(&var.bins[i]) {
            continue;
        }
        let phi = result.phi[i][variable];
        let better = match best {
            None => true,
            Some((bi, bp)) => {
                phi > bp || (phi == bp && table.dates[i] < table.dates[bi])
            }
        };
        if better {
            best = Some((i, phi));
        }
    }
    best.map(|(i, _)| i)
}

/// Output of the full opportunistic workflow (steps 2-8): attribution,
/// importance, impact flags, threshold selection, and per-date choices.
#[derive(Debug, Clone, Serialize)]
pub struct OpportunisticWorkflow {
    pub shapley: ShapleyResult,
    pub effects: ShapleyEffects,
    pub impact: ImpactSummary,
    pub k_star: usize,
    /// Mean blended skill per threshold k.
    pub k_table: Vec<(usize, f64)>,
    pub choices: Vec<Deployment>,
    /// Fraction of dates on which ABC is deployed at `k_star`.
    pub abc_fraction: f64,
    /// Per variable, the most impacted subject index, where defined.
    pub most_impacted: Vec<Option<usize>>,
    pub mean_abc_skill: f64,
    pub mean_baseline_skill: f64,
    pub mean_opportunistic_skill: f64,
}

/// Runs the explanation workflow on aligned per-date skills: outcome is the
/// ABC-minus-baseline skill difference; the table's variables must already
/// be lagged to issuance-time observability by the caller.
pub fn opportunistic_workflow(
    table: &ExplanationTable,
    abc_skill: &[f64],
    baseline_skill: &[f64],
    level: f64,
    resamples: u32,
    seed: u64,
) -> Result<OpportunisticWorkflow> {
    let n = table.n_subjects();
    if abc_skill.len() != n || baseline_skill.len() != n {
        return Err(Error::Shape(format!(
            "skill series cover {} / {} dates, table has {n}",
            abc_skill.len(),
            baseline_skill.len()
        )));
    }
    let shapley = cohort_shapley_all(table)?;
    let effects = shapley_effects(&shapley);
    let impact = impact_probabilities(&shapley, table, level, resamples, seed)?;
    let (k_star, k_table) = choose_k_star(abc_skill, baseline_skill, &impact.high_counts)?;
    let choices = opportunistic_select(&impact.high_counts, k_star);
    let abc_fraction =
        choices.iter().filter(|c| **c == Deployment::Abc).count() as f64 / n as f64;
    let most_impacted = (0..table.n_variables())
        .map(|j| most_impacted_forecast(&shapley, table, &impact, j))
        .collect();
    let mean_abc_skill = abc_skill.iter().sum::<f64>() / n as f64;
    let mean_baseline_skill = baseline_skill.iter().sum::<f64>() / n as f64;
    let mean_opportunistic_skill = k_table[k_star].1;
    Ok(OpportunisticWorkflow {
        shapley,
        effects,
        impact,
        k_star,
        k_table,
        choices,
        abc_fraction,
        most_impacted,
        mean_abc_skill,
        mean_baseline_skill,
        mean_opportunistic_skill,
    })
}
