//! Classical debiasing baselines: operational reforecast protocols,
//! multimodel-mean construction, quantile mapping, and LOESS debiasing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::archive::{Era, ForecastArchive};
use crate::calendar::{day_diff, CalendarDate, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::metrics::quantile_sorted;
use crate::series::{FieldSeries, TaskSpec, Variable};

/// How an operational protocol matches historical dates to the target date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateMatching {
    /// Dates within +/- this many days of the target day of year.
    DayWindow(i64),
    /// Dates with exactly the target month-day (Feb 29 mapped to Feb 28).
    ExactMonthDay,
}

/// Which historical years a protocol draws on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LookbackRule {
    /// Dates within the last `n` years of the target date.
    Years(i64),
    /// Dates whose year lies in the inclusive range.
    YearRange(i32, i32),
}

/// Operational mean-debiasing protocol: subtract the mean reforecast and add
/// the mean observation over the matched historical dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReforecastProtocol {
    pub matching: DateMatching,
    pub lookback: LookbackRule,
    /// Era the matched reforecast entries must carry (`None` accepts any).
    pub era: Option<Era>,
}

impl ReforecastProtocol {
    /// The ECMWF-style protocol: last 20 years within +/- 6 days of the
    /// target day of year, reforecast era.
    pub fn ecmwf_style() -> Self {
        ReforecastProtocol {
            matching: DateMatching::DayWindow(6),
            lookback: LookbackRule::Years(20),
            era: Some(Era::Reforecast),
        }
    }

    /// The CFSv2-style protocol: hindcast years 1999-2010 matching the exact
    /// target month-day.
    pub fn cfsv2_style() -> Self {
        ReforecastProtocol {
            matching: DateMatching::ExactMonthDay,
            lookback: LookbackRule::YearRange(1999, 2010),
            era: Some(Era::Reforecast),
        }
    }

    fn matches(&self, t_star: CalendarDate, t: CalendarDate) -> bool {
        let in_lookback = match self.lookback {
            LookbackRule::Years(n) => {
                (t_star.days_since(t) as f64) <= n as f64 * DAYS_PER_YEAR
            }
            LookbackRule::YearRange(a, b) => t.year() >= a && t.year() <= b,
        };
        if !in_lookback {
            return false;
        }
        match self.matching {
            DateMatching::DayWindow(w) => {
                day_diff(t_star, t).map(|d| d <= w as f64).unwrap_or(false)
            }
            DateMatching::ExactMonthDay => {
                normalize_month_day(t_star.month_day()) == t.month_day()
            }
        }
    }
}

fn normalize_month_day(md: (u32, u32)) -> (u32, u32) {
    if md == (2, 29) {
        (2, 28)
    } else {
        md
    }
}

/// Operational debiasing of the raw ensemble forecast for `t_star`:
/// `raw - mean(matched reforecasts) + mean(matched observations)`.
///
/// Matched dates are restricted to those observable one day before
/// issuance (`t <= t* - l* - L - 1`) with both a reforecast at the task lead
/// and a complete observation row. Errors when no date matches.
pub fn operational_debias(
    protocol: &ReforecastProtocol,
    archive: &ForecastArchive,
    obs: &FieldSeries,
    t_star: CalendarDate,
    task: TaskSpec,
) -> Result<Vec<f64>> {
    let lead = task.lead_days();
    let issuance = t_star.plus_days(-lead);
    let raw = archive.ensemble_mean(issuance, lead, None).ok_or_else(|| {
        Error::MissingData(format!("no raw ensemble forecast issued {issuance} at lead {lead}"))
    })?;
    let g = raw.len();
    let cutoff = task.training_cutoff(t_star);
    let mut refcst_sum = vec![0.0; g];
    let mut obs_sum = vec![0.0; g];
    let mut n = 0usize;
    for t in obs.dates().iter().copied() {
        if t > cutoff {
            break;
        }
        if !protocol.matches(t_star, t) {
            continue;
        }
        let Some(refcst) = archive.ensemble_mean(t.plus_days(-lead), lead, protocol.era) else {
            continue;
        };
        let Some(y) = obs.complete_row(t) else {
            continue;
        };
        for p in 0..g {
            refcst_sum[p] += refcst[p];
            obs_sum[p] += y[p];
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyWindow(format!(
            "operational debiasing matched no dates for {t_star}"
        )));
    }
    Ok((0..g)
        .map(|p| raw[p] - refcst_sum[p] / n as f64 + obs_sum[p] / n as f64)
        .collect())
}

/// Equal-weighted mean over the `count` most recent issuances, spaced
/// `stride_days` apart and ending at `nominal_issuance`, of each issuance's
/// ensemble-mean forecast of `target`. Absent issuances are skipped; `None`
/// when none is available.
///
/// This is the generic form of operational multi-initialization ensembles
/// built by averaging a model's latest issuances for a fixed target.
pub fn issuance_lagged_mean(
    archive: &ForecastArchive,
    target: CalendarDate,
    nominal_issuance: CalendarDate,
    count: usize,
    stride_days: i64,
) -> Option<Vec<f64>> {
    if count == 0 || stride_days < 1 {
        return None;
    }
    let g = archive.grid().len();
    let mut acc = vec![0.0; g];
    let mut used = 0usize;
    for k in 0..count {
        let issuance = nominal_issuance.plus_days(-(k as i64) * stride_days);
        let lead = target.days_since(issuance);
        if lead < 0 {
            continue;
        }
        if let Some(v) = archive.ensemble_mean(issuance, lead, None) {
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += x;
            }
            used += 1;
        }
    }
    if used == 0 {
        return None;
    }
    for a in &mut acc {
        *a /= used as f64;
    }
    Some(acc)
}

/// Multimodel mean for `t_star`: each model contributes its most recent
/// forecast of the target issued within `lookback_days` of the nominal
/// issuance date `t* - l*`; models without one are skipped.
pub fn multimodel_mean(
    models: &[ForecastArchive],
    t_star: CalendarDate,
    task: TaskSpec,
    lookback_days: i64,
) -> Result<Vec<f64>> {
    if models.is_empty() {
        return Err(Error::Domain("multimodel mean needs >= 1 model".into()));
    }
    let nominal = t_star.plus_days(-task.lead_days());
    let g = models[0].grid().len();
    let mut acc = vec![0.0; g];
    let mut used = 0usize;
    for model in models {
        if model.grid().len() != g {
            return Err(Error::Shape("multimodel archives have different grids".into()));
        }
        let mut chosen: Option<Vec<f64>> = None;
        for back in 0..=lookback_days {
            let issuance = nominal.plus_days(-back);
            let lead = t_star.days_since(issuance);
            if let Some(v) = model.ensemble_mean(issuance, lead, None) {
                chosen = Some(v);
                break; // most recent admissible issuance
            }
        }
        if let Some(v) = chosen {
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += x;
            }
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::MissingData(format!(
            "no model has a forecast for {t_star} within {lookback_days} days of {nominal}"
        )));
    }
    for a in &mut acc {
        *a /= used as f64;
    }
    Ok(acc)
}

/// Quantile rank of `v` in a sorted sample: the inverse of the
/// piecewise-linear empirical quantile function, with ties resolved at the
/// midpoint of the tied index block. This makes readback consistent
/// (`quantile(rank(v)) == v` inside the sample range), which in turn makes
/// quantile mapping monotone in the raw forecast.
pub fn quantile_rank(sorted: &[f64], v: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    if n == 1 {
        return 0.5;
    }
    let lo = sorted.partition_point(|&s| s < v);
    let hi = sorted.partition_point(|&s| s <= v);
    let pos = if lo < hi {
        // v is present: midpoint of the tied block [lo, hi - 1].
        (lo + hi - 1) as f64 / 2.0
    } else if lo == 0 {
        0.0
    } else if lo == n {
        (n - 1) as f64
    } else {
        let a = sorted[lo - 1];
        let b = sorted[lo];
        (lo - 1) as f64 + (v - a) / (b - a)
    };
    pos / (n - 1) as f64
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct QmSlot {
    /// Per grid point, sorted training forecasts.
    forecasts: Vec<Vec<f64>>,
    /// Per grid point, sorted training observations.
    observations: Vec<Vec<f64>>,
}

/// Per-(grid point, month-day) sorted training samples for quantile mapping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileMapModel {
    grid: Grid,
    table: BTreeMap<(u32, u32), QmSlot>,
    pub lead_days: i64,
    /// Quantile ranks are clipped to this band before readback.
    pub rank_band: (f64, f64),
}

impl QuantileMapModel {
    /// Collects (ensemble-mean forecast, observation) training pairs per
    /// month-day over all dates up to `cutoff`. Feb 29 pairs are pooled with
    /// Feb 28.
    pub fn fit(
        archive: &ForecastArchive,
        obs: &FieldSeries,
        task: TaskSpec,
        cutoff: CalendarDate,
    ) -> Result<Self> {
        let g = obs.grid().len();
        let lead = task.lead_days();
        let mut table: BTreeMap<(u32, u32), QmSlot> = BTreeMap::new();
        for t in obs.dates().iter().copied() {
            if t > cutoff {
                break;
            }
            let Some(fcst) = archive.ensemble_mean(t.plus_days(-lead), lead, None) else {
                continue;
            };
            let Some(y) = obs.complete_row(t) else {
                continue;
            };
            let slot = table
                .entry(normalize_month_day(t.month_day()))
                .or_insert_with(|| QmSlot {
                    forecasts: vec![Vec::new(); g],
                    observations: vec![Vec::new(); g],
                });
            for p in 0..g {
                slot.forecasts[p].push(fcst[p]);
                slot.observations[p].push(y[p]);
            }
        }
        if table.is_empty() {
            return Err(Error::EmptyWindow(
                "quantile mapping found no training pairs before the cutoff".into(),
            ));
        }
        for slot in table.values_mut() {
            for v in slot.forecasts.iter_mut().chain(slot.observations.iter_mut()) {
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
        }
        Ok(QuantileMapModel {
            grid: obs.grid().clone(),
            table,
            lead_days: lead,
            rank_band: (0.10, 0.90),
        })
    }

    fn slot_for(&self, t_star: CalendarDate) -> Result<&QmSlot> {
        let md = normalize_month_day(t_star.month_day());
        self.table.get(&md).ok_or_else(|| {
            Error::EmptyWindow(format!(
                "no quantile-mapping training sample for month-day {:02}-{:02}",
                md.0, md.1
            ))
        })
    }
}

/// Quantile-maps a raw forecast: the rank of the raw value among training
/// forecasts is clipped to the 10%-90% band and the correction
/// `Q_obs(rank) - Q_fcst(rank)` is added. Precipitation output is floored at
/// zero.
pub fn quantile_map(
    model: &QuantileMapModel,
    raw: &[f64],
    t_star: CalendarDate,
    variable: Variable,
) -> Result<Vec<f64>> {
    let slot = model.slot_for(t_star)?;
    if raw.len() != model.grid.len() {
        return Err(Error::Shape(format!(
            "raw forecast has {} values for {} grid points",
            raw.len(),
            model.grid.len()
        )));
    }
    let (lo, hi) = model.rank_band;
    let mut out = Vec::with_capacity(raw.len());
    for (p, &v) in raw.iter().enumerate() {
        let fcst = &slot.forecasts[p];
        let obs = &slot.observations[p];
        if fcst.is_empty() {
            return Err(Error::EmptyWindow(format!(
                "empty quantile-mapping sample at grid point {p}"
            )));
        }
        let rank = quantile_rank(fcst, v).clamp(lo, hi);
        let mut corrected = v + quantile_sorted(obs, rank) - quantile_sorted(fcst, rank);
        if variable.clips_negative() && corrected < 0.0 {
            corrected = 0.0;
        }
        out.push(corrected);
    }
    Ok(out)
}

/// LOESS smoothing parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LoessParams {
    /// Fraction of the 365 day slots used for each local fit.
    pub fraction: f64,
    /// Ratio cap applied when the smoothed forecast is at most `epsilon`
    /// in multiplicative mode.
    pub ratio_cap: f64,
    pub epsilon: f64,
}

impl Default for LoessParams {
    fn default() -> Self {
        LoessParams {
            fraction: 0.1,
            ratio_cap: 10.0,
            epsilon: 1e-6,
        }
    }
}

/// Additive (temperature) or multiplicative (precipitation) LOESS
/// correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoessMode {
    Additive,
    Multiplicative,
}

/// Per-(grid point, day-of-year) smoothed correction derived from 365-value
/// month-day mean curves of observations and forecasts (Feb 29 excluded).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoessCorrection {
    grid: Grid,
    pub mode: LoessMode,
    /// `correction[g][day_index]`, 365 entries per grid point.
    correction: Vec<Vec<f64>>,
}

/// Day index 0..364 of a month-day in the non-leap calendar; Feb 29 maps to
/// Feb 28's index.
pub fn day_index_365(month: u32, day: u32) -> usize {
    const CUM: [u32; 12] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];
    let (m, d) = normalize_month_day((month, day));
    (CUM[(m - 1) as usize] + d - 1) as usize
}

/// Local linear regression over a 365-value sequence using the nearest
/// `q` indices (no wraparound) with tricube weights.
fn loess_smooth(seq: &[f64], q: usize) -> Vec<f64> {
    let n = seq.len();
    let q = q.clamp(2, n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = (i as i64 - ((q as i64 - 1) / 2)).clamp(0, (n - q) as i64) as usize;
        let hi = lo + q - 1;
        let dmax = (i - lo).max(hi - i) as f64;
        let mut sw = 0.0;
        let mut swx = 0.0;
        let mut swxx = 0.0;
        let mut swy = 0.0;
        let mut swxy = 0.0;
        for j in lo..=hi {
            let d = (j as f64 - i as f64).abs() / dmax;
            let w = {
                let u = 1.0 - d * d * d;
                u * u * u
            };
            let x = j as f64 - i as f64; // centered at the fit point
            sw += w;
            swx += w * x;
            swxx += w * x * x;
            swy += w * seq[j];
            swxy += w * x * seq[j];
        }
        let denom = sw * swxx - swx * swx;
        let value = if denom.abs() < 1e-12 * sw.max(1.0) {
            swy / sw
        } else {
            // Intercept of the weighted linear fit at the centered origin.
            (swxx * swy - swx * swxy) / denom
        };
        out.push(value);
    }
    out
}

/// Fits a LOESS correction: per (month, day) slot (Feb 29 excluded), average
/// the observations and forecasts over all training dates up to `cutoff`,
/// smooth both 365-value curves by local linear regression on the nearest
/// 10% of day slots, and store their difference (additive, temperature) or
/// ratio (multiplicative, precipitation).
pub fn loess_fit(
    obs: &FieldSeries,
    forecasts: &FieldSeries,
    cutoff: CalendarDate,
    variable: Variable,
    params: &LoessParams,
) -> Result<LoessCorrection> {
    if obs.grid() != forecasts.grid() {
        return Err(Error::Shape("LOESS observation/forecast grids differ".into()));
    }
    let g = obs.grid().len();
    let mut obs_sum = vec![[0.0; 365]; g];
    let mut fcst_sum = vec![[0.0; 365]; g];
    let mut count = [0u32; 365];
    for t in obs.dates().iter().copied() {
        if t > cutoff {
            break;
        }
        if t.month_day() == (2, 29) {
            continue;
        }
        if !forecasts.contains_date(t) {
            continue;
        }
        let (Some(y), Some(f)) = (obs.complete_row(t), forecasts.complete_row(t)) else {
            continue;
        };
        let idx = day_index_365(t.month(), t.day());
        count[idx] += 1;
        for p in 0..g {
            obs_sum[p][idx] += y[p];
            fcst_sum[p][idx] += f[p];
        }
    }
    if let Some(idx) = count.iter().position(|&c| c == 0) {
        return Err(Error::MissingData(format!(
            "LOESS training data has an empty day slot at index {idx}"
        )));
    }
    let q = (params.fraction * 365.0).ceil() as usize;
    let mode = match variable {
        Variable::Temperature => LoessMode::Additive,
        Variable::Precipitation => LoessMode::Multiplicative,
    };
    let mut correction = Vec::with_capacity(g);
    for p in 0..g {
        let obs_curve: Vec<f64> = (0..365)
            .map(|i| obs_sum[p][i] / f64::from(count[i]))
            .collect();
        let fcst_curve: Vec<f64> = (0..365)
            .map(|i| fcst_sum[p][i] / f64::from(count[i]))
            .collect();
        let so = loess_smooth(&obs_curve, q);
        let sf = loess_smooth(&fcst_curve, q);
        let row: Vec<f64> = match mode {
            LoessMode::Additive => so.iter().zip(&sf).map(|(o, f)| o - f).collect(),
            LoessMode::Multiplicative => so
                .iter()
                .zip(&sf)
                .map(|(o, f)| {
                    if *f <= params.epsilon {
                        (o.max(0.0) / params.epsilon).min(params.ratio_cap)
                    } else {
                        o / f
                    }
                })
                .collect(),
        };
        correction.push(row);
    }
    Ok(LoessCorrection {
        grid: obs.grid().clone(),
        mode,
        correction,
    })
}

/// Applies a LOESS correction to a raw forecast for `t_star`.
pub fn loess_apply(
    correction: &LoessCorrection,
    raw: &[f64],
    t_star: CalendarDate,
) -> Result<Vec<f64>> {
    if raw.len() != correction.grid.len() {
        return Err(Error::Shape(format!(
            "raw forecast has {} values for {} grid points",
            raw.len(),
            correction.grid.len()
        )));
    }
    let idx = day_index_365(t_star.month(), t_star.day());
    Ok(raw
        .iter()
        .enumerate()
        .map(|(p, &v)| match correction.mode {
            LoessMode::Additive => v + correction.correction[p][idx],
            LoessMode::Multiplicative => v * correction.correction[p][idx],
        })
        .collect())
}

/// Series of ensemble-mean forecasts indexed by target date at a fixed lead,
/// restricted to targets at most `max_target`. Used to assemble LOESS
/// training data from an archive.
pub fn target_series_at_lead(
    archive: &ForecastArchive,
    lead: i64,
    max_target: CalendarDate,
) -> Result<FieldSeries> {
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (issuance, cell_lead) in archive.cell_keys() {
        if cell_lead != lead {
            continue;
        }
        let target = issuance.plus_days(lead);
        if target > max_target {
            continue;
        }
        if let Some(v) = archive.ensemble_mean(issuance, lead, None) {
            dates.push(target);
            values.extend(v);
        }
    }
    FieldSeries::dense(archive.grid().clone(), dates, values)
}
