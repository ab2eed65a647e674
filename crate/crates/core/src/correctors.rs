//! The three adaptive bias correctors and their ensemble.
//!
//! Dynamical++ debiases an adaptively ensembled dynamical forecast with a
//! learned offset over a day-of-year window; Climatology++ outputs the
//! loss-minimizing constant over the window (median or mean per grid point);
//! Persistence++ fits a per-grid-point least-squares combination of
//! climatology, lagged observations, and a lagged ensemble forecast. ABC is
//! their uniformly weighted ensemble.
//!
//! Every corrector trains only on data fully observable one day before the
//! forecast issuance: dates `t <= t* - l* - L - 1`.

use serde::{Deserialize, Serialize};

use crate::archive::ForecastArchive;
use crate::calendar::{
    day_diff, year_diff, CalendarDate, DAYS_PER_YEAR, DEFAULT_DYNPP_TRAINING_YEARS,
};
use crate::error::{Error, Result};
use crate::metrics::{EmpiricalDistribution, LossKind};
use crate::series::{Climatology, FieldSeries, Horizon, TaskSpec, Variable};

/// Upper end of the subseasonal lead range used by the Persistence++
/// ensemble forecast.
pub const PERPP_MAX_LEAD: i64 = 29;

/// Dynamical++ hyperparameters: day-of-year span, number of lagged issuance
/// dates, and the lead set used for ensembling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynppConfig {
    pub span_days: i64,
    pub issuance_count: i64,
    pub leads: Vec<i64>,
}

impl DynppConfig {
    pub fn new(span_days: i64, issuance_count: i64, leads: Vec<i64>) -> Self {
        DynppConfig {
            span_days,
            issuance_count,
            leads,
        }
    }

    /// The standard candidate grid for a horizon: spans {0, 14, 28, 35},
    /// issuance counts {1, 7, 14, 28, 42}, and the horizon's lead sets. The
    /// cold-start default (widest span, one issuance date, lead {l*}) is
    /// listed first.
    pub fn standard_candidates(horizon: Horizon) -> Vec<DynppConfig> {
        let l = horizon.lead_days();
        let lead_sets: Vec<Vec<i64>> = match horizon {
            Horizon::Weeks34 => vec![
                vec![15],
                (15..=22).collect(),
                (0..=29).collect(),
                vec![29],
            ],
            Horizon::Weeks56 => vec![vec![29]],
            Horizon::Weeks12 => vec![vec![l]],
        };
        let spans = [0i64, 14, 28, 35];
        let counts = [1i64, 7, 14, 28, 42];
        let default = DynppConfig::new(35, 1, vec![l]);
        let mut out = vec![default.clone()];
        for &s in &spans {
            for &d in &counts {
                for leads in &lead_sets {
                    let cfg = DynppConfig::new(s, d, leads.clone());
                    if cfg != default {
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }

    /// Short label used in tuning ledgers and artifacts.
    pub fn label(&self) -> String {
        let leads = if self.leads.len() > 2 {
            format!(
                "{}..{}",
                self.leads.iter().min().unwrap(),
                self.leads.iter().max().unwrap()
            )
        } else {
            self.leads
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join("+")
        };
        format!("dynpp(s={},d={},l={})", self.span_days, self.issuance_count, leads)
    }
}

/// Climatology++ hyperparameters: day-of-year span, training-year cap
/// (`None` = all years), and the loss deciding median vs mean.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClimppConfig {
    pub span_days: i64,
    /// `None` means all available training years.
    pub training_years: Option<i64>,
    pub loss: LossKind,
}

impl ClimppConfig {
    pub fn new(span_days: i64, training_years: Option<i64>, loss: LossKind) -> Self {
        ClimppConfig {
            span_days,
            training_years,
            loss,
        }
    }

    /// The standard candidate grid: spans {0, 1, 7, 10}; precipitation uses
    /// the MSE loss with all years, temperature the RMSE loss with all years
    /// or 29. Widest span (the cold-start default) first.
    pub fn standard_candidates(variable: Variable) -> Vec<ClimppConfig> {
        let spans = [10i64, 7, 1, 0];
        let mut out = Vec::new();
        for &s in &spans {
            match variable {
                Variable::Precipitation => {
                    out.push(ClimppConfig::new(s, None, LossKind::Mse));
                }
                Variable::Temperature => {
                    out.push(ClimppConfig::new(s, None, LossKind::Rmse));
                    out.push(ClimppConfig::new(s, Some(29), LossKind::Rmse));
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        let years = match self.training_years {
            Some(y) => y.to_string(),
            None => "all".into(),
        };
        let loss = match self.loss {
            LossKind::Rmse => "rmse",
            LossKind::Mse => "mse",
        };
        format!("climpp(s={},y={years},loss={loss})", self.span_days)
    }
}

/// All observation dates fully observable one day before the issuance for
/// `t_star`, i.e. `t <= t* - l* - L - 1`, restricted to dates whose grid row
/// is complete.
pub fn training_index(obs: &FieldSeries, t_star: CalendarDate, task: TaskSpec) -> Vec<CalendarDate> {
    let cutoff = task.training_cutoff(t_star);
    obs.dates()
        .iter()
        .copied()
        .take_while(|d| *d <= cutoff)
        .filter(|d| obs.is_complete_row(*d))
        .collect()
}

/// Dates from `candidates` (sorted ascending, all `<= t_star`) inside the
/// day-of-year window of half-width `span` and within `max_year_diff`
/// training years of `t_star`.
pub(crate) fn window_dates(
    candidates: &[CalendarDate],
    t_star: CalendarDate,
    span_days: i64,
    max_year_diff: Option<i64>,
) -> Vec<CalendarDate> {
    let lo = match max_year_diff {
        // year_diff <= Y means (t* - t) < (Y + 1) * D.
        Some(y) => {
            let min_ordinal =
                t_star.ordinal() - (((y + 1) as f64) * DAYS_PER_YEAR).ceil() as i64;
            candidates.partition_point(|d| d.ordinal() < min_ordinal)
        }
        None => 0,
    };
    let span = span_days as f64;
    candidates[lo..]
        .iter()
        .copied()
        .filter(|t| {
            if let Some(y) = max_year_diff {
                if year_diff(t_star, *t).unwrap_or(i64::MAX) > y {
                    return false;
                }
            }
            day_diff(t_star, *t).map(|d| d <= span).unwrap_or(false)
        })
        .collect()
}

/// Ensemble forecast for target date `t`: the flat mean over issuance lags
/// `d in 1..=d*` and leads `l` of the entries issued at `t - l* - d + 1`.
/// Absent cells are skipped; `None` when no cell is available.
pub fn dynpp_ensemble(
    cfg: &DynppConfig,
    task: TaskSpec,
    archive: &ForecastArchive,
    t: CalendarDate,
) -> Option<Vec<f64>> {
    let g = archive.grid().len();
    let mut acc = vec![0.0; g];
    let mut n = 0usize;
    let l_star = task.lead_days();
    for d in 1..=cfg.issuance_count {
        let issuance = t.plus_days(-(l_star + d - 1));
        for &lead in &cfg.leads {
            if let Some(v) = archive.ensemble_mean(issuance, lead, None) {
                for (a, x) in acc.iter_mut().zip(&v) {
                    *a += x;
                }
                n += 1;
            }
        }
    }
    if n == 0 {
        return None;
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    Some(acc)
}

/// Dynamical++ forecast for `t_star`: the ensemble forecast plus the mean
/// observation-minus-ensemble offset over the training window.
pub fn dynpp_forecast(
    cfg: &DynppConfig,
    task: TaskSpec,
    archive: &ForecastArchive,
    obs: &FieldSeries,
    t_star: CalendarDate,
) -> Result<Vec<f64>> {
    let fbar_star = dynpp_ensemble(cfg, task, archive, t_star).ok_or_else(|| {
        let l_star = task.lead_days();
        let mut missing: Vec<String> = (1..=cfg.issuance_count)
            .flat_map(|d| {
                cfg.leads
                    .iter()
                    .map(move |l| format!("({}, lead {l})", t_star.plus_days(-(l_star + d - 1))))
            })
            .collect();
        let total = missing.len();
        if total > 8 {
            missing.truncate(8);
            missing.push(format!("... and {} more", total - 8));
        }
        Error::MissingData(format!(
            "no forecast entries for target {t_star}; tried {}",
            missing.join(", ")
        ))
    })?;

    let candidates = training_index(obs, t_star, task);
    let window = window_dates(
        &candidates,
        t_star,
        cfg.span_days,
        Some(DEFAULT_DYNPP_TRAINING_YEARS),
    );
    let g = obs.grid().len();
    let mut offset = vec![0.0; g];
    let mut n = 0usize;
    for t in window {
        let Some(fbar) = dynpp_ensemble(cfg, task, archive, t) else {
            continue;
        };
        let Some(y) = obs.complete_row(t) else {
            continue;
        };
        for (o, (&yv, fv)) in offset.iter_mut().zip(y.iter().zip(&fbar)) {
            *o += yv - fv;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyWindow(format!(
            "Dynamical++ window for {t_star} (span {}) selected no usable dates",
            cfg.span_days
        )));
    }
    Ok(fbar_star
        .iter()
        .zip(&offset)
        .map(|(f, o)| f + o / n as f64)
        .collect())
}

fn median_in_place(sample: &mut Vec<f64>) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len();
    if n % 2 == 1 {
        sample[n / 2]
    } else {
        0.5 * (sample[n / 2 - 1] + sample[n / 2])
    }
}

/// Climatology++ forecast for `t_star`: per grid point, the median (RMSE
/// loss) or mean (MSE loss) of the observations in the training window.
pub fn climpp_forecast(
    cfg: &ClimppConfig,
    obs: &FieldSeries,
    t_star: CalendarDate,
    task: TaskSpec,
) -> Result<Vec<f64>> {
    let candidates = training_index(obs, t_star, task);
    let window = window_dates(&candidates, t_star, cfg.span_days, cfg.training_years);
    if window.is_empty() {
        return Err(Error::EmptyWindow(format!(
            "Climatology++ window for {t_star} (span {}) selected no usable dates",
            cfg.span_days
        )));
    }
    let g = obs.grid().len();
    let mut out = Vec::with_capacity(g);
    for p in 0..g {
        let mut sample: Vec<f64> = window.iter().map(|t| obs.value(*t, p).unwrap()).collect();
        out.push(match cfg.loss {
            LossKind::Rmse => median_in_place(&mut sample),
            LossKind::Mse => sample.iter().sum::<f64>() / sample.len() as f64,
        });
    }
    Ok(out)
}

/// Fitted Persistence++ regression: one coefficient vector
/// `(intercept, climatology, lag-1 obs, lag-2 obs, ensemble forecast)` per
/// grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerppCoefficients {
    pub coefficients: Vec<[f64; 5]>,
}

/// Per-grid-point regressor rows for one target date.
#[derive(Debug, Clone)]
pub struct PerppInputs {
    pub climatology: Vec<f64>,
    pub lag1: Vec<f64>,
    pub lag2: Vec<f64>,
    pub ensemble: Vec<f64>,
}

impl PerppInputs {
    pub fn regressors(&self, point: usize) -> [f64; 5] {
        [
            1.0,
            self.climatology[point],
            self.lag1[point],
            self.lag2[point],
            self.ensemble[point],
        ]
    }
}

/// Mean over leads `l* <= l <= 29` of the entries issued on `issuance`;
/// absent leads are skipped, `None` when none is available.
pub fn perpp_ensemble(
    archive: &ForecastArchive,
    task: TaskSpec,
    issuance: CalendarDate,
) -> Option<Vec<f64>> {
    let g = archive.grid().len();
    let mut acc = vec![0.0; g];
    let mut n = 0usize;
    for lead in task.lead_days()..=PERPP_MAX_LEAD {
        if let Some(v) = archive.ensemble_mean(issuance, lead, None) {
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += x;
            }
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    for a in &mut acc {
        *a /= n as f64;
    }
    Some(acc)
}

/// Assembles the Persistence++ regressors for a (training or test) target
/// date: climatology, observations lagged by `l* + L + 1` and `2 l* + L + 1`
/// days, and the ensemble forecast issued at `t - l* - 1`.
pub fn perpp_inputs(
    task: TaskSpec,
    archive: &ForecastArchive,
    obs: &FieldSeries,
    climatology: &Climatology,
    t: CalendarDate,
) -> Result<PerppInputs> {
    let l = task.lead_days();
    let period = task.period_length();
    let clim_row = climatology
        .values_on(t)
        .ok_or_else(|| Error::MissingData(format!("no climatology for {t}")))?
        .to_vec();
    let lag1_date = t.plus_days(-(l + period + 1));
    let lag2_date = t.plus_days(-(2 * l + period + 1));
    let lag1 = obs
        .complete_row(lag1_date)
        .ok_or_else(|| Error::MissingData(format!("missing lag-1 observation {lag1_date}")))?
        .to_vec();
    let lag2 = obs
        .complete_row(lag2_date)
        .ok_or_else(|| Error::MissingData(format!("missing lag-2 observation {lag2_date}")))?
        .to_vec();
    let issuance = t.plus_days(-(l + 1));
    let ensemble = perpp_ensemble(archive, task, issuance).ok_or_else(|| {
        Error::MissingData(format!(
            "no forecast issued {issuance} with leads {}..={PERPP_MAX_LEAD}",
            l
        ))
    })?;
    Ok(PerppInputs {
        climatology: clim_row,
        lag1,
        lag2,
        ensemble,
    })
}

/// Training rows available for `t_star`: for each usable date `t` in the
/// training index, the regressors and the target row.
pub fn perpp_training_rows(
    task: TaskSpec,
    archive: &ForecastArchive,
    obs: &FieldSeries,
    climatology: &Climatology,
    t_star: CalendarDate,
) -> Vec<(CalendarDate, PerppInputs, Vec<f64>)> {
    training_index(obs, t_star, task)
        .into_iter()
        .filter_map(|t| {
            let inputs = perpp_inputs(task, archive, obs, climatology, t).ok()?;
            let y = obs.complete_row(t)?.to_vec();
            Some((t, inputs, y))
        })
        .collect()
}

/// Minimum-norm least-squares solve of `X beta = y` via singular value
/// decomposition. Returns the solution and whether the design was
/// rank-deficient.
pub(crate) fn lstsq_min_norm(rows: &[[f64; 5]], targets: &[f64]) -> ([f64; 5], bool) {
    let n = rows.len();
    let x = nalgebra::DMatrix::from_fn(n, 5, |r, c| rows[r][c]);
    let y = nalgebra::DVector::from_column_slice(targets);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = smax * (n.max(5) as f64) * f64::EPSILON.sqrt();
    let rank_deficient = svd.singular_values.iter().any(|&s| s <= tol);
    let solution = svd
        .solve(&y, tol)
        .unwrap_or_else(|_| nalgebra::DVector::zeros(5));
    let mut beta = [0.0; 5];
    for i in 0..5 {
        beta[i] = solution[i];
    }
    (beta, rank_deficient)
}

/// Fits the Persistence++ ordinary least-squares regression per grid point
/// over all training rows for `t_star`. Rank-deficient designs are resolved
/// with the minimum-norm solution and a warning.
pub fn perpp_fit(
    task: TaskSpec,
    archive: &ForecastArchive,
    obs: &FieldSeries,
    climatology: &Climatology,
    t_star: CalendarDate,
) -> Result<PerppCoefficients> {
    let rows = perpp_training_rows(task, archive, obs, climatology, t_star);
    perpp_fit_rows(&rows, obs.grid().len(), t_star)
}

pub(crate) fn perpp_fit_rows(
    rows: &[(CalendarDate, PerppInputs, Vec<f64>)],
    grid_len: usize,
    t_star: CalendarDate,
) -> Result<PerppCoefficients> {
    if rows.len() < 5 {
        return Err(Error::EmptyWindow(format!(
            "Persistence++ needs >= 5 training rows for {t_star}, found {}",
            rows.len()
        )));
    }
    let mut coefficients = Vec::with_capacity(grid_len);
    let mut deficient_points = 0usize;
    for p in 0..grid_len {
        let design: Vec<[f64; 5]> = rows.iter().map(|(_, inp, _)| inp.regressors(p)).collect();
        let targets: Vec<f64> = rows.iter().map(|(_, _, y)| y[p]).collect();
        let (beta, deficient) = lstsq_min_norm(&design, &targets);
        if deficient {
            deficient_points += 1;
        }
        coefficients.push(beta);
    }
    if deficient_points > 0 {
        log::warn!(
            "Persistence++ design rank-deficient at {deficient_points} grid point(s) for {t_star}; using minimum-norm solution"
        );
    }
    Ok(PerppCoefficients { coefficients })
}

/// Persistence++ prediction: per grid point, the dot product of the fitted
/// coefficients with the regressors at the target date.
pub fn perpp_predict(coefficients: &PerppCoefficients, inputs: &PerppInputs) -> Result<Vec<f64>> {
    let g = coefficients.coefficients.len();
    if inputs.climatology.len() != g {
        return Err(Error::Shape(format!(
            "Persistence++ inputs cover {} points, coefficients {}",
            inputs.climatology.len(),
            g
        )));
    }
    Ok((0..g)
        .map(|p| {
            let reg = inputs.regressors(p);
            coefficients.coefficients[p]
                .iter()
                .zip(&reg)
                .map(|(b, x)| b * x)
                .sum()
        })
        .collect())
}

/// Progressive tuning history: per candidate, the geographic RMSE of its
/// progressive forecast on each scored past target date.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningLedger {
    pub scores: Vec<Vec<(CalendarDate, f64)>>,
}

impl TuningLedger {
    pub fn new(candidates: usize) -> Self {
        TuningLedger {
            scores: vec![Vec::new(); candidates],
        }
    }

    pub fn record(&mut self, candidate: usize, date: CalendarDate, rmse: f64) {
        self.scores[candidate].push((date, rmse));
    }

    /// Index of the candidate with the smallest mean RMSE over target dates
    /// within the preceding `window_days` of `t_star` whose outcome was
    /// observable (`date <= cutoff`). Ties break toward the earlier
    /// candidate; with no scorable history the first candidate is returned
    /// with a warning.
    pub fn select(
        &self,
        t_star: CalendarDate,
        cutoff: CalendarDate,
        window_days: f64,
    ) -> (usize, Option<f64>) {
        let mut best: Option<(usize, f64)> = None;
        for (i, entries) in self.scores.iter().enumerate() {
            let mut sum = 0.0;
            let mut n = 0usize;
            for (date, rmse) in entries {
                if *date >= t_star || *date > cutoff {
                    continue;
                }
                if (t_star.days_since(*date) as f64) > window_days {
                    continue;
                }
                sum += rmse;
                n += 1;
            }
            if n == 0 {
                continue;
            }
            let mean = sum / n as f64;
            if best.map(|(_, b)| mean < b).unwrap_or(true) {
                best = Some((i, mean));
            }
        }
        match best {
            Some((i, mean)) => (i, Some(mean)),
            None => {
                log::warn!(
                    "no scorable tuning history before {t_star}; falling back to the default candidate"
                );
                (0, None)
            }
        }
    }
}

/// Tuning window width: the preceding three years.
pub const TUNING_WINDOW_DAYS: f64 = 3.0 * DAYS_PER_YEAR;

/// Selects the candidate with the smallest mean progressive geographic RMSE
/// over the preceding three years of scored history.
pub fn tune<'a, C>(
    candidates: &'a [C],
    ledger: &TuningLedger,
    task: TaskSpec,
    t_star: CalendarDate,
) -> Result<(&'a C, usize)> {
    if candidates.is_empty() {
        return Err(Error::Domain("tune requires at least one candidate".into()));
    }
    if ledger.scores.len() != candidates.len() {
        return Err(Error::Shape(format!(
            "ledger tracks {} candidates, got {}",
            ledger.scores.len(),
            candidates.len()
        )));
    }
    let cutoff = task.training_cutoff(t_star);
    let (idx, _) = ledger.select(t_star, cutoff, TUNING_WINDOW_DAYS);
    Ok((&candidates[idx], idx))
}

/// Component forecasts entering the ABC ensemble.
#[derive(Debug, Clone)]
pub struct AbcComponents {
    pub dynamical: Vec<f64>,
    pub climatology: Option<Vec<f64>>,
    pub persistence: Vec<f64>,
}

/// Uniformly weighted ABC ensemble: the mean of Dynamical++, Climatology++,
/// and Persistence++. On the weeks 1-2 horizon Climatology++ is excluded and
/// only the other two are averaged.
pub fn abc_forecast(task: TaskSpec, components: &AbcComponents) -> Result<Vec<f64>> {
    let g = components.dynamical.len();
    if components.persistence.len() != g {
        return Err(Error::Shape("ABC component lengths differ".into()));
    }
    match task.horizon {
        Horizon::Weeks12 => Ok(components
            .dynamical
            .iter()
            .zip(&components.persistence)
            .map(|(d, p)| (d + p) / 2.0)
            .collect()),
        _ => {
            let clim = components.climatology.as_ref().ok_or_else(|| {
                Error::MissingData("ABC requires a Climatology++ component on subseasonal horizons".into())
            })?;
            if clim.len() != g {
                return Err(Error::Shape("ABC component lengths differ".into()));
            }
            Ok((0..g)
                .map(|i| (components.dynamical[i] + clim[i] + components.persistence[i]) / 3.0)
                .collect())
        }
    }
}

/// Probabilistic ABC forecast: each raw member is shifted by the
/// Dynamical++ correction and, separately, by the Persistence++ correction
/// (correction = deterministic output minus raw ensemble mean); the pooled
/// member set of size `2n + 1` additionally contains the Climatology++
/// output. Negative precipitation members are clipped to zero.
pub fn abc_probabilistic(
    members: &[Vec<f64>],
    dynpp_out: &[f64],
    perpp_out: &[f64],
    climpp_out: &[f64],
    ensemble_mean: &[f64],
    variable: Variable,
) -> Result<Vec<EmpiricalDistribution>> {
    if members.is_empty() {
        return Err(Error::Domain("probabilistic ABC needs >= 1 raw member".into()));
    }
    let g = ensemble_mean.len();
    for v in [dynpp_out, perpp_out, climpp_out] {
        if v.len() != g {
            return Err(Error::Shape("probabilistic ABC component lengths differ".into()));
        }
    }
    let clip = |v: f64| {
        if variable.clips_negative() && v < 0.0 {
            0.0
        } else {
            v
        }
    };
    let mut out = Vec::with_capacity(g);
    for p in 0..g {
        let mut pooled = Vec::with_capacity(2 * members.len() + 1);
        for m in members {
            pooled.push(clip(m[p] + dynpp_out[p] - ensemble_mean[p]));
        }
        for m in members {
            pooled.push(clip(m[p] + perpp_out[p] - ensemble_mean[p]));
        }
        pooled.push(clip(climpp_out[p]));
        out.push(EmpiricalDistribution::new(pooled)?);
    }
    Ok(out)
}

/// Probabilistic forecast for a single deterministic corrector: each raw
/// member shifted by (deterministic output - raw ensemble mean), `n` members
/// out, with the same precipitation clipping rule.
pub fn baseline_probabilistic(
    members: &[Vec<f64>],
    deterministic_out: &[f64],
    ensemble_mean: &[f64],
    variable: Variable,
) -> Result<Vec<EmpiricalDistribution>> {
    if members.is_empty() {
        return Err(Error::Domain("probabilistic baseline needs >= 1 raw member".into()));
    }
    let g = ensemble_mean.len();
    if deterministic_out.len() != g {
        return Err(Error::Shape("probabilistic baseline lengths differ".into()));
    }
    let clip = |v: f64| {
        if variable.clips_negative() && v < 0.0 {
            0.0
        } else {
            v
        }
    };
    let mut out = Vec::with_capacity(g);
    for p in 0..g {
        let pooled: Vec<f64> = members
            .iter()
            .map(|m| clip(m[p] + deterministic_out[p] - ensemble_mean[p]))
            .collect();
        out.push(EmpiricalDistribution::new(pooled)?);
    }
    Ok(out)
}
