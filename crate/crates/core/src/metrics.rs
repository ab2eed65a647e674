//! Deterministic and probabilistic forecast verification.
//!
//! Deterministic skill is the uncentered anomaly correlation
//! `<yhat - c, y - c> / (||yhat - c|| ||y - c||)`; probabilistic scores are
//! the CRPS of the empirical member distribution and the Brier skill score
//! for the above-normal event at the climatological second tercile.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calendar::{CalendarDate, Season};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::series::{Climatology, FieldSeries};

/// Interpolated quantile of a sorted sample at probability `p`, evaluated at
/// position `p * (n - 1)`. This is the single quantile convention used across
/// the crate (terciles, quantile mapping, deciles, bootstrap percentiles).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Loss used by geographic scoring and the Climatology++ objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LossKind {
    Rmse,
    Mse,
}

/// Uncentered anomaly correlation of a forecast against observations.
///
/// Returns `Ok(None)` when either anomaly vector is identically zero; such
/// dates are flagged undefined and excluded from means.
pub fn skill(yhat: &[f64], y: &[f64], climatology: &[f64]) -> Result<Option<f64>> {
    if yhat.len() != y.len() || y.len() != climatology.len() {
        return Err(Error::Shape(format!(
            "skill expects equal lengths, got {}, {}, {}",
            yhat.len(),
            y.len(),
            climatology.len()
        )));
    }
    let mut dot = 0.0;
    let mut n_hat = 0.0;
    let mut n_obs = 0.0;
    for ((&f, &o), &c) in yhat.iter().zip(y).zip(climatology) {
        let a = f - c;
        let b = o - c;
        dot += a * b;
        n_hat += a * a;
        n_obs += b * b;
    }
    if n_hat == 0.0 || n_obs == 0.0 {
        return Ok(None);
    }
    let v = dot / (n_hat.sqrt() * n_obs.sqrt());
    Ok(Some(v.clamp(-1.0, 1.0)))
}

/// Bootstrap percentile interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

/// Per-date skill values with their progressive-validation average.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkillSummary {
    pub per_date: Vec<(CalendarDate, Option<f64>)>,
    /// Mean over the defined per-date skills.
    pub mean: f64,
    pub defined_dates: usize,
    /// Mean per meteorological season of the target date.
    pub season_means: BTreeMap<Season, f64>,
    pub ci: Option<CiInterval>,
}

/// Averages per-date skills produced under progressive validation (the
/// caller guarantees each forecast used only data observable at its
/// issuance). Undefined dates are excluded; errors if none are defined.
pub fn mean_skill(per_date: &[(CalendarDate, Option<f64>)]) -> Result<SkillSummary> {
    let defined: Vec<(CalendarDate, f64)> = per_date
        .iter()
        .filter_map(|(d, s)| s.map(|s| (*d, s)))
        .collect();
    if defined.is_empty() {
        return Err(Error::EmptyWindow(
            "no defined per-date skills to average".into(),
        ));
    }
    let mean = defined.iter().map(|(_, s)| s).sum::<f64>() / defined.len() as f64;
    let mut by_season: BTreeMap<Season, (f64, usize)> = BTreeMap::new();
    for (d, s) in &defined {
        let e = by_season.entry(d.season()).or_insert((0.0, 0));
        e.0 += s;
        e.1 += 1;
    }
    let season_means = by_season
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect();
    Ok(SkillSummary {
        per_date: per_date.to_vec(),
        mean,
        defined_dates: defined.len(),
        season_means,
        ci: None,
    })
}

impl SkillSummary {
    /// Attaches a bootstrap CI on the mean of the defined per-date skills.
    pub fn with_bootstrap_ci(mut self, level: f64, resamples: u32, seed: u64) -> Result<Self> {
        let defined: Vec<f64> = self.per_date.iter().filter_map(|(_, s)| *s).collect();
        let (lo, hi) = bootstrap_ci(&defined, level, resamples, seed)?;
        self.ci = Some(CiInterval { lo, hi, level });
        Ok(self)
    }

    pub fn defined_skills(&self) -> Vec<f64> {
        self.per_date.iter().filter_map(|(_, s)| *s).collect()
    }
}

fn aligned_dates(a: &FieldSeries, b: &FieldSeries) -> Vec<CalendarDate> {
    a.dates()
        .iter()
        .copied()
        .filter(|d| b.contains_date(*d))
        .collect()
}

fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::Shape("grids do not match".into()));
    }
    Ok(())
}

/// Per-grid-point uncentered anomaly correlation across all target dates
/// shared by `forecasts` and `obs`. Points whose anomaly series is
/// identically zero (or that have no shared data) are undefined.
pub fn spatial_skill(
    forecasts: &FieldSeries,
    obs: &FieldSeries,
    climatology: &Climatology,
) -> Result<Vec<Option<f64>>> {
    check_same_grid(forecasts.grid(), obs.grid())?;
    check_same_grid(forecasts.grid(), climatology.grid())?;
    let g = forecasts.grid().len();
    let mut dot = vec![0.0; g];
    let mut n_f = vec![0.0; g];
    let mut n_o = vec![0.0; g];
    let mut seen = vec![false; g];
    for date in aligned_dates(forecasts, obs) {
        let c = climatology
            .values_on(date)
            .ok_or_else(|| Error::MissingData(format!("no climatology for {date}")))?
            .to_vec();
        for p in 0..g {
            let (Some(f), Some(o)) = (forecasts.value(date, p), obs.value(date, p)) else {
                continue;
            };
            let a = f - c[p];
            let b = o - c[p];
            dot[p] += a * b;
            n_f[p] += a * a;
            n_o[p] += b * b;
            seen[p] = true;
        }
    }
    Ok((0..g)
        .map(|p| {
            if !seen[p] || n_f[p] == 0.0 || n_o[p] == 0.0 {
                None
            } else {
                Some((dot[p] / (n_f[p].sqrt() * n_o[p].sqrt())).clamp(-1.0, 1.0))
            }
        })
        .collect())
}

/// Fraction of defined grid points with value strictly above `threshold`.
/// Errors when every point is undefined.
pub fn fraction_above(spatial: &[Option<f64>], threshold: f64) -> Result<f64> {
    let defined: Vec<f64> = spatial.iter().filter_map(|v| *v).collect();
    if defined.is_empty() {
        return Err(Error::EmptyWindow(
            "fraction_above: all grid points undefined".into(),
        ));
    }
    let above = defined.iter().filter(|&&v| v > threshold).count();
    Ok(above as f64 / defined.len() as f64)
}

/// Per-grid-point mean of (forecast - observation) over all shared dates.
/// Points with no shared data are `None`.
pub fn bias_map(forecasts: &FieldSeries, obs: &FieldSeries) -> Result<Vec<Option<f64>>> {
    check_same_grid(forecasts.grid(), obs.grid())?;
    let g = forecasts.grid().len();
    let mut sum = vec![0.0; g];
    let mut count = vec![0usize; g];
    for date in aligned_dates(forecasts, obs) {
        for p in 0..g {
            if let (Some(f), Some(o)) = (forecasts.value(date, p), obs.value(date, p)) {
                sum[p] += f - o;
                count[p] += 1;
            }
        }
    }
    Ok((0..g)
        .map(|p| {
            if count[p] == 0 {
                None
            } else {
                Some(sum[p] / count[p] as f64)
            }
        })
        .collect())
}

/// Geographic RMSE or MSE between a forecast vector and observations.
pub fn geographic_loss(yhat: &[f64], y: &[f64], loss: LossKind) -> Result<f64> {
    if yhat.len() != y.len() || yhat.is_empty() {
        return Err(Error::Shape(format!(
            "geographic_loss expects equal non-empty lengths, got {} and {}",
            yhat.len(),
            y.len()
        )));
    }
    let mse = yhat
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / yhat.len() as f64;
    Ok(match loss {
        LossKind::Mse => mse,
        LossKind::Rmse => mse.sqrt(),
    })
}

/// Empirical forecast distribution for one (date, grid point): the sorted
/// ensemble member values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    members: Vec<f64>,
}

impl EmpiricalDistribution {
    /// Builds a distribution from member values (sorted internally).
    pub fn new(mut members: Vec<f64>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Domain("empirical distribution needs >= 1 member".into()));
        }
        if members.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("empirical distribution members must be finite".into()));
        }
        members.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalDistribution { members })
    }

    pub fn members(&self) -> &[f64] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Right-continuous empirical CDF: fraction of members <= `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.members.partition_point(|&m| m <= x);
        k as f64 / self.members.len() as f64
    }

    /// Mean of the member values.
    pub fn mean(&self) -> f64 {
        self.members.iter().sum::<f64>() / self.members.len() as f64
    }
}

/// Continuous ranked probability score of an empirical distribution against
/// an observation, via the closed form
/// `mean_i |x_i - y| - 1/2 mean_{i,j} |x_i - x_j|`.
pub fn crps(dist: &EmpiricalDistribution, y: f64) -> f64 {
    let xs = dist.members();
    let n = xs.len() as f64;
    let mean_abs = xs.iter().map(|&x| (x - y).abs()).sum::<f64>() / n;
    // Members are sorted: sum_{i<j} (x_j - x_i) = sum_k (2k - n + 1) x_k.
    let mut spread = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        spread += (2.0 * k as f64 - n + 1.0) * x;
    }
    mean_abs - spread / (n * n)
}

/// Brier score of one distribution for the event `y > x` (scored through the
/// CDF form `(F(x) - 1{y <= x})^2`).
pub fn brier_score(dist: &EmpiricalDistribution, y: f64, threshold: f64) -> f64 {
    let indicator = if y <= threshold { 1.0 } else { 0.0 };
    let d = dist.cdf(threshold) - indicator;
    d * d
}

/// Brier skill score across grid points against the climatological
/// above-normal forecast: `1 - mean_g BS / mean_g (2/3 - 1{y <= x})^2`.
pub fn brier_skill_score(
    dists: &[EmpiricalDistribution],
    y: &[f64],
    thresholds: &[f64],
) -> Result<f64> {
    if dists.len() != y.len() || y.len() != thresholds.len() || y.is_empty() {
        return Err(Error::Shape(format!(
            "brier_skill_score expects equal non-empty lengths, got {}, {}, {}",
            dists.len(),
            y.len(),
            thresholds.len()
        )));
    }
    let g = y.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((dist, &obs), &x) in dists.iter().zip(y).zip(thresholds) {
        num += brier_score(dist, obs, x);
        let d = 2.0 / 3.0 - if obs <= x { 1.0 } else { 0.0 };
        den += d * d;
    }
    num /= g;
    den /= g;
    if den == 0.0 {
        return Err(Error::Domain("brier_skill_score reference score is zero".into()));
    }
    Ok(1.0 - num / den)
}

/// Per-(month, day) grid vectors of the climatological second tercile, the
/// thresholds defining the above-normal event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TercileThresholds {
    grid: Grid,
    table: BTreeMap<(u32, u32), Vec<f64>>,
    base_period: (i32, i32),
}

impl TercileThresholds {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Threshold vector for a date's month-day; Feb 29 falls back to Feb 28.
    pub fn values_on(&self, date: CalendarDate) -> Option<&[f64]> {
        let (m, d) = date.month_day();
        match self.table.get(&(m, d)) {
            Some(v) => Some(v.as_slice()),
            None if (m, d) == (2, 29) => self.table.get(&(2, 28)).map(|v| v.as_slice()),
            None => None,
        }
    }
}

/// Computes the 2/3 quantile of the base-period observations per
/// (month, day, grid point), under the crate-wide quantile convention.
pub fn build_tercile_thresholds(
    obs: &FieldSeries,
    base_period: (i32, i32),
) -> Result<TercileThresholds> {
    let (y0, y1) = base_period;
    if y1 < y0 {
        return Err(Error::Domain(format!("empty base period {y0}..{y1}")));
    }
    let g = obs.grid().len();
    let mut samples: BTreeMap<(u32, u32), Vec<Vec<f64>>> = BTreeMap::new();
    for (idx, date) in obs.dates().iter().enumerate() {
        if date.year() < y0 || date.year() > y1 {
            continue;
        }
        let entry = samples
            .entry(date.month_day())
            .or_insert_with(|| vec![Vec::new(); g]);
        for p in 0..g {
            if let Some(v) = obs.value_by_index(idx, p) {
                entry[p].push(v);
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptyWindow(format!(
            "no observations inside base period {y0}..{y1}"
        )));
    }
    let mut table = BTreeMap::new();
    for (md, mut per_point) in samples {
        let mut row = Vec::with_capacity(g);
        for (p, sample) in per_point.iter_mut().enumerate() {
            if sample.is_empty() {
                return Err(Error::MissingData(format!(
                    "no usable sample for month-day {:02}-{:02} at grid point {p}",
                    md.0, md.1
                )));
            }
            sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
            row.push(quantile_sorted(sample, 2.0 / 3.0));
        }
        table.insert(md, row);
    }
    Ok(TercileThresholds {
        grid: obs.grid().clone(),
        table,
        base_period,
    })
}

/// Percentile bootstrap interval for the mean of `values` at the given
/// confidence level. Deterministic given the seed; resample streams are
/// derived from (seed, resample index) so parallel evaluation would
/// reproduce the sequential result.
pub fn bootstrap_ci(values: &[f64], level: f64, resamples: u32, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Domain("bootstrap_ci on empty input".into()));
    }
    if resamples == 0 {
        return Err(Error::Domain("bootstrap_ci needs >= 1 resample".into()));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Domain(format!("invalid confidence level {level}")));
    }
    let n = values.len();
    let mut means = Vec::with_capacity(resamples as usize);
    for r in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(r) + 1);
        let mut acc = 0.0;
        for _ in 0..n {
            acc += values[rng.gen_range(0..n)];
        }
        means.push(acc / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    Ok((
        quantile_sorted(&means, alpha),
        quantile_sorted(&means, 1.0 - alpha),
    ))
}

/// Default resample count for bootstrap confidence intervals.
pub const DEFAULT_BOOTSTRAP_RESAMPLES: u32 = 1000;
