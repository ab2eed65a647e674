//! Progressive forecast drivers: produce corrector and baseline forecasts
//! for a sequence of target dates in real-forecast order, tuning
//! hyperparameters per date on the preceding three years of progressive
//! scores.
//!
//! The engines cache ensemble forecasts and residuals lazily so a cached
//! value is first computed while forecasting a target date whose cutoff
//! already admits it; with auditing enabled the driver verifies after every
//! emitted forecast that no observation beyond `t* - l* - L - 1` and no
//! forecast issued after `t* - l*` was read.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::archive::ForecastArchive;
use crate::audit::ReadAudit;
use crate::baselines::{
    loess_apply, loess_fit, multimodel_mean, operational_debias, quantile_map, target_series_at_lead,
    LoessParams, QuantileMapModel, ReforecastProtocol,
};
use crate::calendar::{CalendarDate, DEFAULT_DYNPP_TRAINING_YEARS};
use crate::correctors::{
    abc_forecast, dynpp_ensemble, perpp_fit_rows, perpp_inputs, window_dates, AbcComponents,
    ClimppConfig, DynppConfig, PerppCoefficients, TuningLedger, TUNING_WINDOW_DAYS,
};
use crate::error::{Error, Result};
use crate::metrics::{geographic_loss, LossKind};
use crate::series::{Climatology, FieldSeries, Horizon, TaskSpec};

/// Corrector or baseline run by the progressive driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionModel {
    Dynpp,
    Climpp,
    Perpp,
    Abc,
    QuantileMapping,
    Loess,
    OperationalDebias,
    MultimodelMean,
}

impl CorrectionModel {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "dynpp" => CorrectionModel::Dynpp,
            "climpp" => CorrectionModel::Climpp,
            "perpp" => CorrectionModel::Perpp,
            "abc" => CorrectionModel::Abc,
            "qm" => CorrectionModel::QuantileMapping,
            "loess" => CorrectionModel::Loess,
            "opdebias" => CorrectionModel::OperationalDebias,
            "mmm" => CorrectionModel::MultimodelMean,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            CorrectionModel::Dynpp => "dynpp",
            CorrectionModel::Climpp => "climpp",
            CorrectionModel::Perpp => "perpp",
            CorrectionModel::Abc => "abc",
            CorrectionModel::QuantileMapping => "qm",
            CorrectionModel::Loess => "loess",
            CorrectionModel::OperationalDebias => "opdebias",
            CorrectionModel::MultimodelMean => "mmm",
        }
    }
}

/// Driver options; the defaults mirror the operational setup.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub tuning_window_days: f64,
    pub protocol: ReforecastProtocol,
    pub mmm_lookback_days: i64,
    pub loess: LoessParams,
    /// Instrument observation/forecast reads and fail on any leakage.
    pub audit: bool,
    pub dynpp_candidates: Option<Vec<DynppConfig>>,
    pub climpp_candidates: Option<Vec<ClimppConfig>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tuning_window_days: TUNING_WINDOW_DAYS,
            protocol: ReforecastProtocol::ecmwf_style(),
            mmm_lookback_days: 6,
            loess: LoessParams::default(),
            audit: false,
            dynpp_candidates: None,
            climpp_candidates: None,
        }
    }
}

/// Tuning history exported with the run artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct TuningArtifact {
    pub candidates: Vec<String>,
    pub scores: Vec<Vec<(CalendarDate, f64)>>,
}

/// Per-run metadata for reproducibility: selected configurations, tuning
/// ledgers, fitted coefficients, and the audit tally.
#[derive(Debug, Clone, Serialize, Default)]
pub struct RunArtifacts {
    pub model: String,
    pub selected_configs: Vec<(CalendarDate, String)>,
    pub dynpp_tuning: Option<TuningArtifact>,
    pub climpp_tuning: Option<TuningArtifact>,
    /// Persistence++ coefficients fitted for the last emitted target date.
    pub perpp_coefficients: Option<PerppCoefficients>,
    pub audited_targets: Option<usize>,
}

/// Progressive run output: one grid vector per emitted target date.
#[derive(Debug, Clone)]
pub struct ProgressiveRun {
    pub dates: Vec<CalendarDate>,
    pub values: Vec<Vec<f64>>,
    /// Targets that were skipped, with the reason.
    pub skipped: Vec<(CalendarDate, String)>,
    /// Per-date ABC components (populated only for the ABC model).
    pub abc_components: Vec<(CalendarDate, AbcComponents)>,
    pub artifacts: RunArtifacts,
}

impl ProgressiveRun {
    /// Forecast values as a dense series over the emitted dates.
    pub fn to_field_series(&self, grid: &crate::grid::Grid) -> Result<FieldSeries> {
        let mut values = Vec::with_capacity(self.dates.len() * grid.len());
        for v in &self.values {
            values.extend_from_slice(v);
        }
        FieldSeries::dense(grid.clone(), self.dates.clone(), values)
    }
}

fn complete_dates(obs: &FieldSeries) -> Vec<CalendarDate> {
    obs.dates()
        .iter()
        .enumerate()
        .filter(|(i, _)| obs.complete_row_mask_only(*i))
        .map(|(_, d)| *d)
        .collect()
}

struct DynppEngine<'a> {
    task: TaskSpec,
    obs: &'a FieldSeries,
    archive: &'a ForecastArchive,
    candidates: Vec<DynppConfig>,
    combo_of: Vec<usize>,
    combos: Vec<DynppConfig>,
    fbar: Vec<HashMap<i64, Option<Arc<Vec<f64>>>>>,
    residual: Vec<HashMap<i64, Option<Arc<Vec<f64>>>>>,
    complete: Vec<CalendarDate>,
    ledger: TuningLedger,
    scored_to: Option<CalendarDate>,
    score_from: CalendarDate,
    window_days: f64,
}

impl<'a> DynppEngine<'a> {
    fn new(
        task: TaskSpec,
        obs: &'a FieldSeries,
        archive: &'a ForecastArchive,
        candidates: Vec<DynppConfig>,
        first_target: CalendarDate,
        window_days: f64,
    ) -> Self {
        // Ensemble caches are shared between candidates with the same
        // (issuance count, lead set).
        let mut combos: Vec<DynppConfig> = Vec::new();
        let mut combo_of = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let probe = DynppConfig::new(0, c.issuance_count, c.leads.clone());
            let idx = combos
                .iter()
                .position(|k| k.issuance_count == probe.issuance_count && k.leads == probe.leads)
                .unwrap_or_else(|| {
                    combos.push(probe);
                    combos.len() - 1
                });
            combo_of.push(idx);
        }
        let n_combos = combos.len();
        let ledger = TuningLedger::new(candidates.len());
        DynppEngine {
            task,
            obs,
            archive,
            candidates,
            combo_of,
            combos,
            fbar: vec![HashMap::new(); n_combos],
            residual: vec![HashMap::new(); n_combos],
            complete: complete_dates(obs),
            ledger,
            scored_to: None,
            score_from: first_target.plus_days(-(window_days.ceil() as i64) - 1),
            window_days,
        }
    }

    fn fbar(&mut self, combo: usize, t: CalendarDate) -> Option<Arc<Vec<f64>>> {
        let key = t.ordinal();
        if let Some(v) = self.fbar[combo].get(&key) {
            return v.clone();
        }
        let v = dynpp_ensemble(&self.combos[combo], self.task, self.archive, t).map(Arc::new);
        self.fbar[combo].insert(key, v.clone());
        v
    }

    fn residual(&mut self, combo: usize, t: CalendarDate) -> Option<Arc<Vec<f64>>> {
        let key = t.ordinal();
        if let Some(v) = self.residual[combo].get(&key) {
            return v.clone();
        }
        let v = match (self.fbar(combo, t), self.obs.complete_row(t)) {
            (Some(fbar), Some(y)) => Some(Arc::new(
                y.iter().zip(fbar.iter()).map(|(a, b)| a - b).collect::<Vec<f64>>(),
            )),
            _ => None,
        };
        self.residual[combo].insert(key, v.clone());
        v
    }

    /// Forecast of candidate `cand` for `t_star` using only data observable
    /// at its issuance. `None` when the target ensemble or the training
    /// window is unavailable.
    fn candidate_forecast(&mut self, cand: usize, t_star: CalendarDate) -> Option<Vec<f64>> {
        let combo = self.combo_of[cand];
        let fbar_star = self.fbar(combo, t_star)?;
        let cutoff = self.task.training_cutoff(t_star);
        let admissible = &self.complete[..self.complete.partition_point(|d| *d <= cutoff)];
        let window = window_dates(
            admissible,
            t_star,
            self.candidates[cand].span_days,
            Some(DEFAULT_DYNPP_TRAINING_YEARS),
        );
        let g = fbar_star.len();
        let mut offset = vec![0.0; g];
        let mut n = 0usize;
        for t in window {
            if let Some(r) = self.residual(combo, t) {
                for (o, x) in offset.iter_mut().zip(r.iter()) {
                    *o += x;
                }
                n += 1;
            }
        }
        if n == 0 {
            return None;
        }
        Some(
            fbar_star
                .iter()
                .zip(&offset)
                .map(|(f, o)| f + o / n as f64)
                .collect(),
        )
    }

    /// Scores every candidate on the eval dates that became observable for
    /// `t_star` since the last call.
    fn extend_scores(&mut self, t_star: CalendarDate) {
        let cutoff = self.task.training_cutoff(t_star);
        let from = match self.scored_to {
            Some(d) => d.plus_days(1).max(self.score_from),
            None => self.score_from,
        };
        if from > cutoff {
            return;
        }
        let lo = self.complete.partition_point(|d| *d < from);
        let hi = self.complete.partition_point(|d| *d <= cutoff);
        for i in lo..hi {
            let e = self.complete[i];
            let Some(y) = self.obs.complete_row(e).map(<[f64]>::to_vec) else {
                continue;
            };
            for cand in 0..self.candidates.len() {
                if let Some(f) = self.candidate_forecast(cand, e) {
                    if let Ok(rmse) = geographic_loss(&f, &y, LossKind::Rmse) {
                        self.ledger.record(cand, e, rmse);
                    }
                }
            }
        }
        self.scored_to = Some(cutoff);
    }

    fn forecast_tuned(&mut self, t_star: CalendarDate) -> Result<(Vec<f64>, usize)> {
        self.extend_scores(t_star);
        let cutoff = self.task.training_cutoff(t_star);
        let (idx, _) = self.ledger.select(t_star, cutoff, self.window_days);
        let out = self.candidate_forecast(idx, t_star).ok_or_else(|| {
            Error::MissingData(format!(
                "Dynamical++ ({}) could not forecast {t_star}: no ensemble or empty window",
                self.candidates[idx].label()
            ))
        })?;
        Ok((out, idx))
    }

    fn tuning_artifact(&self) -> TuningArtifact {
        TuningArtifact {
            candidates: self.candidates.iter().map(DynppConfig::label).collect(),
            scores: self.ledger.scores.clone(),
        }
    }
}

struct ClimppEngine<'a> {
    task: TaskSpec,
    obs: &'a FieldSeries,
    candidates: Vec<ClimppConfig>,
    complete: Vec<CalendarDate>,
    ledger: TuningLedger,
    scored_to: Option<CalendarDate>,
    score_from: CalendarDate,
    window_days: f64,
}

impl<'a> ClimppEngine<'a> {
    fn new(
        task: TaskSpec,
        obs: &'a FieldSeries,
        candidates: Vec<ClimppConfig>,
        first_target: CalendarDate,
        window_days: f64,
    ) -> Self {
        ClimppEngine {
            task,
            obs,
            complete: complete_dates(obs),
            ledger: TuningLedger::new(candidates.len()),
            candidates,
            scored_to: None,
            score_from: first_target.plus_days(-(window_days.ceil() as i64) - 1),
            window_days,
        }
    }

    fn candidate_forecast(&self, cand: usize, t_star: CalendarDate) -> Option<Vec<f64>> {
        let cfg = &self.candidates[cand];
        let cutoff = self.task.training_cutoff(t_star);
        let admissible = &self.complete[..self.complete.partition_point(|d| *d <= cutoff)];
        let window = window_dates(admissible, t_star, cfg.span_days, cfg.training_years);
        if window.is_empty() {
            return None;
        }
        let g = self.obs.grid().len();
        let mut out = Vec::with_capacity(g);
        for p in 0..g {
            let mut sample: Vec<f64> =
                window.iter().map(|t| self.obs.value(*t, p).unwrap()).collect();
            out.push(match cfg.loss {
                LossKind::Rmse => {
                    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let n = sample.len();
                    if n % 2 == 1 {
                        sample[n / 2]
                    } else {
                        0.5 * (sample[n / 2 - 1] + sample[n / 2])
                    }
                }
                LossKind::Mse => sample.iter().sum::<f64>() / sample.len() as f64,
            });
        }
        Some(out)
    }

    fn extend_scores(&mut self, t_star: CalendarDate) {
        let cutoff = self.task.training_cutoff(t_star);
        let from = match self.scored_to {
            Some(d) => d.plus_days(1).max(self.score_from),
            None => self.score_from,
        };
        if from > cutoff {
            return;
        }
        let lo = self.complete.partition_point(|d| *d < from);
        let hi = self.complete.partition_point(|d| *d <= cutoff);
        for i in lo..hi {
            let e = self.complete[i];
            let Some(y) = self.obs.complete_row(e).map(<[f64]>::to_vec) else {
                continue;
            };
            for cand in 0..self.candidates.len() {
                if let Some(f) = self.candidate_forecast(cand, e) {
                    if let Ok(rmse) = geographic_loss(&f, &y, LossKind::Rmse) {
                        self.ledger.record(cand, e, rmse);
                    }
                }
            }
        }
        self.scored_to = Some(cutoff);
    }

    fn forecast_tuned(&mut self, t_star: CalendarDate) -> Result<(Vec<f64>, usize)> {
        self.extend_scores(t_star);
        let cutoff = self.task.training_cutoff(t_star);
        let (idx, _) = self.ledger.select(t_star, cutoff, self.window_days);
        let out = self.candidate_forecast(idx, t_star).ok_or_else(|| {
            Error::EmptyWindow(format!(
                "Climatology++ ({}) selected no training dates for {t_star}",
                self.candidates[idx].label()
            ))
        })?;
        Ok((out, idx))
    }

    fn tuning_artifact(&self) -> TuningArtifact {
        TuningArtifact {
            candidates: self.candidates.iter().map(ClimppConfig::label).collect(),
            scores: self.ledger.scores.clone(),
        }
    }
}

struct PerppEngine<'a> {
    task: TaskSpec,
    obs: &'a FieldSeries,
    archive: &'a ForecastArchive,
    climatology: &'a Climatology,
    complete: Vec<CalendarDate>,
    rows: Vec<(CalendarDate, crate::correctors::PerppInputs, Vec<f64>)>,
    next_idx: usize,
    last_coefficients: Option<PerppCoefficients>,
}

impl<'a> PerppEngine<'a> {
    fn new(
        task: TaskSpec,
        obs: &'a FieldSeries,
        archive: &'a ForecastArchive,
        climatology: &'a Climatology,
    ) -> Self {
        PerppEngine {
            task,
            obs,
            archive,
            climatology,
            complete: complete_dates(obs),
            rows: Vec::new(),
            next_idx: 0,
            last_coefficients: None,
        }
    }

    fn forecast(&mut self, t_star: CalendarDate) -> Result<Vec<f64>> {
        let cutoff = self.task.training_cutoff(t_star);
        while self.next_idx < self.complete.len() && self.complete[self.next_idx] <= cutoff {
            let t = self.complete[self.next_idx];
            self.next_idx += 1;
            let Ok(inputs) = perpp_inputs(self.task, self.archive, self.obs, self.climatology, t)
            else {
                continue;
            };
            let Some(y) = self.obs.complete_row(t) else {
                continue;
            };
            self.rows.push((t, inputs, y.to_vec()));
        }
        let coeffs = perpp_fit_rows(&self.rows, self.obs.grid().len(), t_star)?;
        let inputs = perpp_inputs(self.task, self.archive, self.obs, self.climatology, t_star)?;
        let out = crate::correctors::perpp_predict(&coeffs, &inputs)?;
        self.last_coefficients = Some(coeffs);
        Ok(out)
    }
}

fn is_skippable(err: &Error) -> bool {
    matches!(err, Error::EmptyWindow(_) | Error::MissingData(_))
}

/// Runs a corrector or baseline progressively over ascending target dates.
///
/// Targets that lack required inputs are skipped with a reason; the run
/// fails if every target is skipped. With `options.audit` set, every
/// emitted forecast is checked against the training cutoff and the run
/// fails on any leaking read.
pub fn run_progressive(
    model: CorrectionModel,
    task: TaskSpec,
    obs: &FieldSeries,
    archives: &[ForecastArchive],
    climatology: &Climatology,
    targets: &[CalendarDate],
    options: &RunOptions,
) -> Result<ProgressiveRun> {
    if targets.is_empty() {
        return Err(Error::Config("no target dates requested".into()));
    }
    if targets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("target dates must be strictly ascending".into()));
    }
    if archives.is_empty() {
        return Err(Error::Config("at least one forecast archive is required".into()));
    }
    let first_cutoff = task.training_cutoff(targets[0]);
    let (_, base_end) = climatology.base_period();
    let base_last = CalendarDate::new(base_end, 12, 31)?;
    if base_last > first_cutoff {
        return Err(Error::Config(format!(
            "climatology base period ends {base_last}, after the first training cutoff {first_cutoff}"
        )));
    }

    // Optional instrumentation: audited views share storage with the
    // originals and record every read.
    let obs_audit = ReadAudit::new();
    let arch_audit = ReadAudit::new();
    let (obs_v, archives_v);
    if options.audit {
        obs_v = obs.audited(obs_audit.clone());
        archives_v = archives
            .iter()
            .map(|a| a.audited(arch_audit.clone()))
            .collect::<Vec<_>>();
    } else {
        obs_v = obs.clone();
        archives_v = archives.to_vec();
    }
    let obs = &obs_v;
    let archives = &archives_v[..];
    let archive = &archives[0];

    let mut run = ProgressiveRun {
        dates: Vec::new(),
        values: Vec::new(),
        skipped: Vec::new(),
        abc_components: Vec::new(),
        artifacts: RunArtifacts {
            model: model.name().to_string(),
            ..RunArtifacts::default()
        },
    };

    let dynpp_cands = options
        .dynpp_candidates
        .clone()
        .unwrap_or_else(|| DynppConfig::standard_candidates(task.horizon));
    let climpp_cands = options
        .climpp_candidates
        .clone()
        .unwrap_or_else(|| ClimppConfig::standard_candidates(task.variable));

    let mut dynpp_engine = matches!(model, CorrectionModel::Dynpp | CorrectionModel::Abc).then(|| {
        DynppEngine::new(
            task,
            obs,
            archive,
            dynpp_cands,
            targets[0],
            options.tuning_window_days,
        )
    });
    let mut climpp_engine = (matches!(model, CorrectionModel::Climpp)
        || (matches!(model, CorrectionModel::Abc) && task.horizon != Horizon::Weeks12))
        .then(|| {
            ClimppEngine::new(task, obs, climpp_cands, targets[0], options.tuning_window_days)
        });
    let mut perpp_engine = matches!(model, CorrectionModel::Perpp | CorrectionModel::Abc)
        .then(|| PerppEngine::new(task, obs, archive, climatology));

    // Static baselines fit once, on data observable for the first target.
    let qm_model = if matches!(model, CorrectionModel::QuantileMapping) {
        Some(QuantileMapModel::fit(archive, obs, task, first_cutoff)?)
    } else {
        None
    };
    let loess_model = if matches!(model, CorrectionModel::Loess) {
        let train_fcst = target_series_at_lead(archive, task.lead_days(), first_cutoff)?;
        Some(loess_fit(obs, &train_fcst, first_cutoff, task.variable, &options.loess)?)
    } else {
        None
    };

    let lead = task.lead_days();
    for &t_star in targets {
        let result: Result<Vec<f64>> = match model {
            CorrectionModel::Dynpp => {
                let engine = dynpp_engine.as_mut().unwrap();
                engine.forecast_tuned(t_star).map(|(v, idx)| {
                    let label = engine.candidates[idx].label();
                    run.artifacts.selected_configs.push((t_star, label));
                    v
                })
            }
            CorrectionModel::Climpp => {
                let engine = climpp_engine.as_mut().unwrap();
                engine.forecast_tuned(t_star).map(|(v, idx)| {
                    let label = engine.candidates[idx].label();
                    run.artifacts.selected_configs.push((t_star, label));
                    v
                })
            }
            CorrectionModel::Perpp => perpp_engine.as_mut().unwrap().forecast(t_star),
            CorrectionModel::Abc => {
                let dyn_result = dynpp_engine.as_mut().unwrap().forecast_tuned(t_star);
                let clim_result = match climpp_engine.as_mut() {
                    Some(engine) => engine.forecast_tuned(t_star).map(|(v, i)| Some((v, i))),
                    None => Ok(None),
                };
                let per_result = perpp_engine.as_mut().unwrap().forecast(t_star);
                match (dyn_result, clim_result, per_result) {
                    (Ok((d, di)), Ok(c), Ok(p)) => {
                        let mut label =
                            dynpp_engine.as_ref().unwrap().candidates[di].label();
                        let climatology = c.map(|(v, ci)| {
                            label.push_str(&format!(
                                "+{}",
                                climpp_engine.as_ref().unwrap().candidates[ci].label()
                            ));
                            v
                        });
                        let components = AbcComponents {
                            dynamical: d,
                            climatology,
                            persistence: p,
                        };
                        let out = abc_forecast(task, &components);
                        if out.is_ok() {
                            run.artifacts.selected_configs.push((t_star, label));
                            run.abc_components.push((t_star, components));
                        }
                        out
                    }
                    (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => Err(e),
                }
            }
            CorrectionModel::QuantileMapping => {
                let qm = qm_model.as_ref().unwrap();
                match archive.ensemble_mean(t_star.plus_days(-lead), lead, None) {
                    Some(raw) => quantile_map(qm, &raw, t_star, task.variable),
                    None => Err(Error::MissingData(format!(
                        "no raw ensemble forecast for {t_star}"
                    ))),
                }
            }
            CorrectionModel::Loess => {
                let lo = loess_model.as_ref().unwrap();
                match archive.ensemble_mean(t_star.plus_days(-lead), lead, None) {
                    Some(raw) => loess_apply(lo, &raw, t_star),
                    None => Err(Error::MissingData(format!(
                        "no raw ensemble forecast for {t_star}"
                    ))),
                }
            }
            CorrectionModel::OperationalDebias => {
                operational_debias(&options.protocol, archive, obs, t_star, task)
            }
            CorrectionModel::MultimodelMean => {
                multimodel_mean(archives, t_star, task, options.mmm_lookback_days)
            }
        };

        match result {
            Ok(values) => {
                if options.audit {
                    check_leakage(&obs_audit, &arch_audit, task, t_star)?;
                }
                run.dates.push(t_star);
                run.values.push(values);
            }
            Err(e) if is_skippable(&e) => {
                run.skipped.push((t_star, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }

    if run.dates.is_empty() {
        return Err(Error::EmptyWindow(format!(
            "model {} produced no forecast for any of the {} requested targets",
            model.name(),
            targets.len()
        )));
    }

    if let Some(engine) = &dynpp_engine {
        run.artifacts.dynpp_tuning = Some(engine.tuning_artifact());
    }
    if let Some(engine) = &climpp_engine {
        run.artifacts.climpp_tuning = Some(engine.tuning_artifact());
    }
    if let Some(engine) = &perpp_engine {
        run.artifacts.perpp_coefficients = engine.last_coefficients.clone();
    }
    if options.audit {
        run.artifacts.audited_targets = Some(run.dates.len());
    }
    Ok(run)
}

fn check_leakage(
    obs_audit: &ReadAudit,
    arch_audit: &ReadAudit,
    task: TaskSpec,
    t_star: CalendarDate,
) -> Result<()> {
    let cutoff = task.training_cutoff(t_star).ordinal();
    if let Some(max) = obs_audit.max_ordinal() {
        if max > cutoff {
            return Err(Error::Domain(format!(
                "leakage: observation dated {} days after the cutoff was read while forecasting {t_star}",
                max - cutoff
            )));
        }
    }
    let issuance_cutoff = t_star.plus_days(-task.lead_days()).ordinal();
    if let Some(max) = arch_audit.max_ordinal() {
        if max > issuance_cutoff {
            return Err(Error::Domain(format!(
                "leakage: forecast issued {} days after the issuance date was read while forecasting {t_star}",
                max - issuance_cutoff
            )));
        }
    }
    Ok(())
}

/// Ensemble-mean forecasts of each target at the task lead, as a series.
/// Targets without a forecast are dropped.
pub fn raw_ensemble_series(
    archive: &ForecastArchive,
    task: TaskSpec,
    targets: &[CalendarDate],
) -> Result<FieldSeries> {
    let lead = task.lead_days();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for &t in targets {
        if let Some(v) = archive.ensemble_mean(t.plus_days(-lead), lead, None) {
            dates.push(t);
            values.extend(v);
        }
    }
    FieldSeries::dense(archive.grid().clone(), dates, values)
}
