//! Batch pipeline behind the `sabc` binary: `generate`, `correct`,
//! `evaluate`, and `explain` runs driven by a JSON config with flag
//! overrides (flags win). All outputs are written atomically and every
//! random choice derives from the single top-level seed.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archive::ForecastArchive;
use crate::baselines::{LoessParams, ReforecastProtocol};
use crate::calendar::CalendarDate;
use crate::correctors::{
    abc_probabilistic, baseline_probabilistic, ClimppConfig, DynppConfig,
};
use crate::error::{Error, Result};
use crate::explain::{opportunistic_workflow, ExplanationTable, VariableKind};
use crate::io;
use crate::metrics::{
    bias_map, brier_skill_score, build_tercile_thresholds, crps, fraction_above, mean_skill,
    skill, spatial_skill, EmpiricalDistribution, SkillSummary, DEFAULT_BOOTSTRAP_RESAMPLES,
};
use crate::progressive::{run_progressive, CorrectionModel, RunOptions};
use crate::seeding::derive_seed;
use crate::series::{build_climatology, FieldSeries, Horizon, TaskSpec, Variable};
use crate::synth::{generate_scenario, ScenarioConfig};

/// CLI subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Generate,
    Correct,
    Evaluate,
    Explain,
}

/// Flag overrides shared by all subcommands; flags win over the config.
#[derive(Debug, Clone, Default)]
pub struct CommandArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub model: Option<String>,
    pub task: Option<String>,
    pub allow_custom_grid: bool,
}

/// Inclusive target date range walked with a stride.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetRange {
    pub start: CalendarDate,
    pub end: CalendarDate,
    #[serde(default = "default_stride")]
    pub stride_days: i64,
}

fn default_stride() -> i64 {
    1
}

impl TargetRange {
    pub fn dates(&self) -> Result<Vec<CalendarDate>> {
        if self.end < self.start || self.stride_days < 1 {
            return Err(Error::Config(format!(
                "invalid target range {} .. {} stride {}",
                self.start, self.end, self.stride_days
            )));
        }
        let mut out = Vec::new();
        let mut d = self.start;
        while d <= self.end {
            out.push(d);
            d = d.plus_days(self.stride_days);
        }
        Ok(out)
    }
}

/// `correct` section of the run config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectConfig {
    pub model: Option<String>,
    pub obs: PathBuf,
    pub forecasts: Vec<PathBuf>,
    pub climatology_period: (i32, i32),
    pub targets: TargetRange,
    #[serde(default)]
    pub probabilistic: bool,
    #[serde(default)]
    pub audit: bool,
    pub protocol: Option<ReforecastProtocol>,
    pub mmm_lookback_days: Option<i64>,
    pub loess: Option<LoessParams>,
    pub dynpp_candidates: Option<Vec<DynppConfig>>,
    pub climpp_candidates: Option<Vec<ClimppConfig>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub level: f64,
    pub resamples: u32,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            level: 0.95,
            resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
        }
    }
}

/// `evaluate` section of the run config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub obs: PathBuf,
    pub forecasts: PathBuf,
    pub climatology_period: (i32, i32),
    /// Restricts evaluation to target dates in this range (default: every
    /// target the forecast file covers).
    pub targets: Option<TargetRange>,
    pub thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
}

/// `explain` section of the run config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub obs: PathBuf,
    pub abc_forecasts: PathBuf,
    pub baseline_forecasts: PathBuf,
    pub climatology_period: (i32, i32),
    pub explanatory: PathBuf,
    pub manifest: PathBuf,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
}

/// Explanatory-variable manifest: name -> kind and issuance lag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableSpec {
    pub kind: VariableKind,
    pub lag_days: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub variables: BTreeMap<String, VariableSpec>,
}

/// Top-level run configuration.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub task: Option<TaskSpec>,
    pub scenario: Option<ScenarioConfig>,
    pub correct: Option<CorrectConfig>,
    pub evaluate: Option<EvaluateConfig>,
    pub explain: Option<ExplainConfig>,
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let file = File::open(path).map_err(|e| {
        Error::Config(format!("cannot open config {}: {e}", path.display()))
    })?;
    serde_json::from_reader(file)
        .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
}

/// Parses a task flag like `tmp2m_34w` or `precip_56w`.
pub fn parse_task(s: &str) -> Result<TaskSpec> {
    let norm = s.replace('x', "_");
    let mut parts = norm.splitn(2, '_');
    let var = match parts.next() {
        Some("tmp2m") => Variable::Temperature,
        Some("precip") => Variable::Precipitation,
        other => {
            return Err(Error::Config(format!(
                "unknown task variable {other:?} (expected tmp2m or precip)"
            )))
        }
    };
    let horizon = match parts.next() {
        Some("12w") => Horizon::Weeks12,
        Some("34w") => Horizon::Weeks34,
        Some("56w") => Horizon::Weeks56,
        other => {
            return Err(Error::Config(format!(
                "unknown task horizon {other:?} (expected 12w, 34w, or 56w)"
            )))
        }
    };
    Ok(TaskSpec::new(var, horizon))
}

fn ensure_input(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::Config(format!("input path {} does not exist", path.display())));
    }
    Ok(())
}

/// Holds the per-output-directory lock file; removed on drop.
struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    fn acquire(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::Io {
            path: out_dir.to_path_buf(),
            source: e,
        })?;
        let path = out_dir.join(".sabc.lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Domain(format!(
                "output directory {} is locked by another run (remove {} if stale)",
                out_dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::Io { path, source: e }),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn init_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Runs one subcommand. Returns the usual `Result`; the binary maps errors
/// to exit codes (2 for config/usage, 1 otherwise).
pub fn run_command(kind: CommandKind, args: &CommandArgs) -> Result<()> {
    init_jobs(args.jobs);
    let mut config = load_config(&args.config)?;
    if let Some(task) = &args.task {
        config.task = Some(parse_task(task)?);
    }
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.out.clone())
        .ok_or_else(|| Error::Config("no output directory (set --out or config.out)".into()))?;
    match kind {
        CommandKind::Generate => cmd_generate(&config, &out_dir, seed),
        CommandKind::Correct => cmd_correct(&config, args, &out_dir, seed),
        CommandKind::Evaluate => cmd_evaluate(&config, &out_dir, seed),
        CommandKind::Explain => cmd_explain(&config, &out_dir, seed),
    }
}

/// Generates a synthetic scenario and writes its datasets.
pub fn cmd_generate(config: &RunConfig, out_dir: &Path, seed: u64) -> Result<()> {
    let mut scenario_cfg = config
        .scenario
        .clone()
        .ok_or_else(|| Error::Config("config has no `scenario` section".into()))?;
    // The top-level seed governs the run; the scenario derives from it.
    scenario_cfg.seed = derive_seed(seed, "scenario");
    let _lock = LockGuard::acquire(out_dir)?;
    let scenario = generate_scenario(&scenario_cfg)?;
    io::store_field_series(&scenario.obs, &out_dir.join("obs.csv"))?;
    io::store_field_series(&scenario.daily_obs, &out_dir.join("daily_obs.csv"))?;
    io::store_forecast_archive(&scenario.archive, &out_dir.join("forecasts.csv"))?;
    write_truth_bias(&scenario.truth_bias, &out_dir.join("truth_bias.csv"))?;
    io::write_json(&out_dir.join("scenario.json"), &scenario_cfg)?;
    Ok(())
}

fn write_truth_bias(truth: &FieldSeries, path: &Path) -> Result<()> {
    io::write_atomic(path, |w| {
        use std::io::Write;
        writeln!(w, "date,lat,lon,injected_bias").map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let points = truth.grid().points();
        for date in truth.dates() {
            for (p, point) in points.iter().enumerate() {
                if let Some(v) = truth.value(*date, p) {
                    writeln!(w, "{date},{},{},{v}", point.lat, point.lon).map_err(|e| {
                        Error::Io {
                            path: path.to_path_buf(),
                            source: e,
                        }
                    })?;
                }
            }
        }
        Ok(())
    })
}

fn validate_candidate_grids(
    task: TaskSpec,
    correct: &CorrectConfig,
    allow_custom: bool,
) -> Result<()> {
    if allow_custom {
        return Ok(());
    }
    if let Some(cands) = &correct.dynpp_candidates {
        let standard = DynppConfig::standard_candidates(task.horizon);
        for c in cands {
            if !standard.contains(c) {
                return Err(Error::Config(format!(
                    "Dynamical++ candidate {} is outside the standard grid; pass --allow-custom-grid to use it",
                    c.label()
                )));
            }
        }
    }
    if let Some(cands) = &correct.climpp_candidates {
        let standard = ClimppConfig::standard_candidates(task.variable);
        for c in cands {
            if !standard.contains(c) {
                return Err(Error::Config(format!(
                    "Climatology++ candidate {} is outside the standard grid; pass --allow-custom-grid to use it",
                    c.label()
                )));
            }
        }
    }
    Ok(())
}

/// Runs a corrector/baseline progressively and writes the forecast CSV plus
/// fitted artifacts.
pub fn cmd_correct(
    config: &RunConfig,
    args: &CommandArgs,
    out_dir: &Path,
    seed: u64,
) -> Result<()> {
    let correct = config
        .correct
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `correct` section".into()))?;
    let task = config
        .task
        .ok_or_else(|| Error::Config("no task (set config.task or --task)".into()))?;
    let model_name = args
        .model
        .clone()
        .or_else(|| correct.model.clone())
        .ok_or_else(|| Error::Config("no model (set correct.model or --model)".into()))?;
    let model = CorrectionModel::parse(&model_name)
        .ok_or_else(|| Error::Config(format!("unknown model {model_name:?}")))?;
    validate_candidate_grids(task, correct, args.allow_custom_grid)?;

    ensure_input(&correct.obs)?;
    for p in &correct.forecasts {
        ensure_input(p)?;
    }
    if correct.forecasts.is_empty() {
        return Err(Error::Config("correct.forecasts lists no archives".into()));
    }
    let _lock = LockGuard::acquire(out_dir)?;

    let obs = io::load_field_series(&correct.obs)?;
    let archives: Vec<ForecastArchive> = correct
        .forecasts
        .iter()
        .map(|p| io::load_forecast_archive(p))
        .collect::<Result<_>>()?;
    let climatology = build_climatology(&obs, correct.climatology_period)?;
    let targets = correct.targets.dates()?;

    let mut options = RunOptions {
        audit: correct.audit,
        dynpp_candidates: correct.dynpp_candidates.clone(),
        climpp_candidates: correct.climpp_candidates.clone(),
        ..RunOptions::default()
    };
    if let Some(p) = &correct.protocol {
        options.protocol = p.clone();
    }
    if let Some(d) = correct.mmm_lookback_days {
        options.mmm_lookback_days = d;
    }
    if let Some(l) = correct.loess {
        options.loess = l;
    }

    let run = run_progressive(model, task, &obs, &archives, &climatology, &targets, &options)?;

    let lead = task.lead_days();
    let grid = obs.grid().clone();
    let mut entries: Vec<crate::archive::ForecastEntry> = Vec::new();
    for (i, t) in run.dates.iter().enumerate() {
        entries.push(crate::archive::ForecastEntry {
            issuance: t.plus_days(-lead),
            lead_days: lead,
            member: -1,
            era: crate::archive::Era::Forecast,
            values: run.values[i].clone(),
        });
    }
    if correct.probabilistic {
        if model == CorrectionModel::MultimodelMean {
            return Err(Error::Config(
                "probabilistic output is not defined for the multimodel mean".into(),
            ));
        }
        let archive = &archives[0];
        for (i, t) in run.dates.iter().enumerate() {
            let issuance = t.plus_days(-lead);
            let Some(members) = archive.members(issuance, lead) else {
                continue;
            };
            let raw_members: Vec<Vec<f64>> = members
                .iter()
                .filter(|m| m.member >= 0)
                .map(|m| m.values.clone())
                .collect();
            if raw_members.is_empty() {
                continue;
            }
            let Some(ens_mean) = archive.ensemble_mean(issuance, lead, None) else {
                continue;
            };
            let dists = if model == CorrectionModel::Abc {
                let components = &run
                    .abc_components
                    .iter()
                    .find(|(d, _)| d == t)
                    .ok_or_else(|| Error::Shape(format!("no ABC components for {t}")))?
                    .1;
                let clim_out = components.climatology.as_ref().ok_or_else(|| {
                    Error::MissingData("probabilistic ABC needs the Climatology++ component".into())
                })?;
                abc_probabilistic(
                    &raw_members,
                    &components.dynamical,
                    &components.persistence,
                    clim_out,
                    &ens_mean,
                    task.variable,
                )?
            } else {
                baseline_probabilistic(&raw_members, &run.values[i], &ens_mean, task.variable)?
            };
            for (member_id, _) in dists[0].members().iter().enumerate() {
                let values: Vec<f64> = dists.iter().map(|d| d.members()[member_id]).collect();
                entries.push(crate::archive::ForecastEntry {
                    issuance,
                    lead_days: lead,
                    member: member_id as i32,
                    era: crate::archive::Era::Forecast,
                    values,
                });
            }
        }
    }
    let out_archive = ForecastArchive::build(grid, entries)?;
    io::store_forecast_archive(&out_archive, &out_dir.join("forecasts.csv"))?;

    #[derive(Serialize)]
    struct CorrectSummary<'a> {
        model: &'a str,
        task: TaskSpec,
        seed: u64,
        emitted: usize,
        /// Grid-point order keying the coefficient tables in `artifacts`.
        grid: &'a [crate::grid::LatLon],
        skipped: &'a [(CalendarDate, String)],
        artifacts: &'a crate::progressive::RunArtifacts,
    }
    io::write_json(
        &out_dir.join("model.json"),
        &CorrectSummary {
            model: model.name(),
            task,
            seed,
            emitted: run.dates.len(),
            grid: obs.grid().points(),
            skipped: &run.skipped,
            artifacts: &run.artifacts,
        },
    )?;
    Ok(())
}

/// Extracts the deterministic forecast series from an output/input archive:
/// the member -1 value when present, the ensemble mean otherwise.
fn forecast_series(archive: &ForecastArchive, task: TaskSpec) -> (Vec<CalendarDate>, Vec<Vec<f64>>) {
    let lead = task.lead_days();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (issuance, cell_lead) in archive.cell_keys() {
        if cell_lead != lead {
            continue;
        }
        let target = issuance.plus_days(lead);
        let v = archive
            .deterministic(issuance, lead)
            .map(<[f64]>::to_vec)
            .or_else(|| archive.ensemble_mean(issuance, lead, None));
        if let Some(v) = v {
            dates.push(target);
            values.push(v);
        }
    }
    (dates, values)
}

#[derive(Serialize)]
struct EvaluateSummary {
    task: TaskSpec,
    seed: u64,
    dates_evaluated: usize,
    mean_skill: f64,
    skill_ci: Option<crate::metrics::CiInterval>,
    season_means: BTreeMap<String, f64>,
    mean_crps: Option<f64>,
    mean_bss: Option<f64>,
}

/// Evaluates a forecast stream against observations: per-date skill with a
/// bootstrap CI, spatial skill, bias map, fraction-above curve, and (given
/// ensembles) CRPS and BSS.
pub fn cmd_evaluate(config: &RunConfig, out_dir: &Path, seed: u64) -> Result<()> {
    let eval = config
        .evaluate
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `evaluate` section".into()))?;
    let task = config
        .task
        .ok_or_else(|| Error::Config("no task (set config.task or --task)".into()))?;
    ensure_input(&eval.obs)?;
    ensure_input(&eval.forecasts)?;
    let _lock = LockGuard::acquire(out_dir)?;

    let obs = io::load_field_series(&eval.obs)?;
    let archive = io::load_forecast_archive(&eval.forecasts)?;
    let climatology = build_climatology(&obs, eval.climatology_period)?;
    let terciles = build_tercile_thresholds(&obs, eval.climatology_period)?;

    let window = match &eval.targets {
        Some(r) => {
            if r.end < r.start || r.stride_days < 1 {
                return Err(Error::Config(format!(
                    "invalid evaluate target range {} .. {}",
                    r.start, r.end
                )));
            }
            Some((r.start, r.end))
        }
        None => None,
    };
    let (dates, values) = forecast_series(&archive, task);
    let mut eval_dates = Vec::new();
    let mut eval_values = Vec::new();
    for (d, v) in dates.into_iter().zip(values) {
        if let Some((start, end)) = window {
            if d < start || d > end {
                continue;
            }
        }
        if obs.is_complete_row(d) && climatology.values_on(d).is_some() {
            eval_dates.push(d);
            eval_values.push(v);
        }
    }
    if eval_dates.is_empty() {
        return Err(Error::EmptyWindow(
            "no forecast dates overlap the observations".into(),
        ));
    }

    // Per-date skill.
    let mut per_date = Vec::with_capacity(eval_dates.len());
    for (d, v) in eval_dates.iter().zip(&eval_values) {
        let y = obs.complete_row(*d).unwrap();
        let c = climatology.values_on(*d).unwrap();
        per_date.push((*d, skill(v, y, c)?));
    }
    let bootstrap = eval.bootstrap;
    let summary: SkillSummary = mean_skill(&per_date)?.with_bootstrap_ci(
        bootstrap.level,
        bootstrap.resamples,
        derive_seed(seed, "skill_ci"),
    )?;
    io::write_per_date_table(&out_dir.join("skill.csv"), "date,skill", &per_date)?;

    // Spatial skill, bias map, fraction-above curve.
    let fcst_series = {
        let mut flat = Vec::with_capacity(eval_dates.len() * obs.grid().len());
        for v in &eval_values {
            flat.extend_from_slice(v);
        }
        FieldSeries::dense(obs.grid().clone(), eval_dates.clone(), flat)?
    };
    let spatial = spatial_skill(&fcst_series, &obs, &climatology)?;
    io::write_spatial_table(&out_dir.join("spatial_skill.csv"), obs.grid(), &spatial)?;
    let bias = bias_map(&fcst_series, &obs)?;
    io::write_spatial_table(&out_dir.join("bias_map.csv"), obs.grid(), &bias)?;
    let thresholds = eval
        .thresholds
        .clone()
        .unwrap_or_else(|| (0..=12).map(|i| i as f64 * 0.05).collect());
    let curve: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| fraction_above(&spatial, t).map(|f| (t, f)))
        .collect::<Result<_>>()?;
    io::write_curve(&out_dir.join("fraction_above.csv"), &curve)?;

    // Probabilistic scores where ensemble members exist.
    let lead = task.lead_days();
    let mut crps_rows = Vec::new();
    let mut bss_rows = Vec::new();
    for d in &eval_dates {
        let issuance = d.plus_days(-lead);
        let Some(members) = archive.members(issuance, lead) else {
            continue;
        };
        let member_values: Vec<&Vec<f64>> = members
            .iter()
            .filter(|m| m.member >= 0)
            .map(|m| &m.values)
            .collect();
        if member_values.is_empty() {
            continue;
        }
        let y = obs.complete_row(*d).unwrap();
        let x = terciles.values_on(*d).ok_or_else(|| {
            Error::MissingData(format!("no tercile threshold for {d}"))
        })?;
        let g = y.len();
        let mut dists = Vec::with_capacity(g);
        for p in 0..g {
            dists.push(EmpiricalDistribution::new(
                member_values.iter().map(|m| m[p]).collect(),
            )?);
        }
        let mean_crps = dists
            .iter()
            .zip(y)
            .map(|(dist, &obs_v)| crps(dist, obs_v))
            .sum::<f64>()
            / g as f64;
        crps_rows.push((*d, Some(mean_crps)));
        bss_rows.push((*d, Some(brier_skill_score(&dists, y, x)?)));
    }
    let mean_crps = if crps_rows.is_empty() {
        None
    } else {
        io::write_per_date_table(&out_dir.join("crps.csv"), "date,crps", &crps_rows)?;
        Some(crps_rows.iter().map(|(_, v)| v.unwrap()).sum::<f64>() / crps_rows.len() as f64)
    };
    let mean_bss = if bss_rows.is_empty() {
        None
    } else {
        io::write_per_date_table(&out_dir.join("bss.csv"), "date,bss", &bss_rows)?;
        Some(bss_rows.iter().map(|(_, v)| v.unwrap()).sum::<f64>() / bss_rows.len() as f64)
    };

    io::write_json(
        &out_dir.join("summary.json"),
        &EvaluateSummary {
            task,
            seed,
            dates_evaluated: summary.defined_dates,
            mean_skill: summary.mean,
            skill_ci: summary.ci,
            season_means: summary
                .season_means
                .iter()
                .map(|(k, v)| (k.name().to_string(), *v))
                .collect(),
            mean_crps,
            mean_bss,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ExplainSummary<'a> {
    task: TaskSpec,
    seed: u64,
    dates: &'a [CalendarDate],
    variables: Vec<String>,
    effects_raw: &'a [f64],
    effects_normalized: Option<&'a [f64]>,
    bins: &'a [crate::explain::BinImpact],
    k_star: usize,
    k_table: &'a [(usize, f64)],
    mean_abc_skill: f64,
    mean_baseline_skill: f64,
    mean_opportunistic_skill: f64,
    abc_fraction: f64,
    choices: Vec<(CalendarDate, usize, crate::explain::Deployment)>,
    most_impacted: Vec<(String, Option<CalendarDate>)>,
}

/// Runs the opportunistic workflow on two forecast streams and an
/// explanatory-variable table.
pub fn cmd_explain(config: &RunConfig, out_dir: &Path, seed: u64) -> Result<()> {
    let explain = config
        .explain
        .as_ref()
        .ok_or_else(|| Error::Config("config has no `explain` section".into()))?;
    let task = config
        .task
        .ok_or_else(|| Error::Config("no task (set config.task or --task)".into()))?;
    for p in [
        &explain.obs,
        &explain.abc_forecasts,
        &explain.baseline_forecasts,
        &explain.explanatory,
        &explain.manifest,
    ] {
        ensure_input(p)?;
    }
    let _lock = LockGuard::acquire(out_dir)?;

    let obs = io::load_field_series(&explain.obs)?;
    let abc = io::load_forecast_archive(&explain.abc_forecasts)?;
    let baseline = io::load_forecast_archive(&explain.baseline_forecasts)?;
    let climatology = build_climatology(&obs, explain.climatology_period)?;
    let explanatory = io::load_explanatory(&explain.explanatory)?;
    let manifest: Manifest = {
        let file = File::open(&explain.manifest).map_err(|e| {
            Error::Config(format!("cannot open manifest {}: {e}", explain.manifest.display()))
        })?;
        serde_json::from_reader(file).map_err(|e| {
            Error::Config(format!("invalid manifest {}: {e}", explain.manifest.display()))
        })?
    };
    for name in manifest.variables.keys() {
        if !explanatory.names.iter().any(|n| n == name) {
            return Err(Error::Config(format!(
                "manifest variable {name} not found in the explanatory CSV"
            )));
        }
    }

    let (abc_dates, abc_values) = forecast_series(&abc, task);
    let abc_by_date: BTreeMap<CalendarDate, Vec<f64>> =
        abc_dates.into_iter().zip(abc_values).collect();
    let (base_dates, base_values) = forecast_series(&baseline, task);
    let base_by_date: BTreeMap<CalendarDate, Vec<f64>> =
        base_dates.into_iter().zip(base_values).collect();

    // Assemble aligned subjects: both forecasts defined, observation and
    // climatology available, and every lagged explanatory value present.
    let mut dates = Vec::new();
    let mut abc_skills = Vec::new();
    let mut base_skills = Vec::new();
    let mut raw_columns: Vec<Vec<f64>> = vec![Vec::new(); manifest.variables.len()];
    'dates: for (d, abc_v) in &abc_by_date {
        let Some(base_v) = base_by_date.get(d) else { continue };
        if !obs.is_complete_row(*d) {
            continue;
        }
        let Some(c) = climatology.values_on(*d) else { continue };
        let y = obs.complete_row(*d).unwrap();
        let (Some(sa), Some(sb)) = (skill(abc_v, y, c)?, skill(base_v, y, c)?) else {
            continue;
        };
        let mut row = Vec::with_capacity(manifest.variables.len());
        for (name, spec) in &manifest.variables {
            let col = explanatory.names.iter().position(|n| n == name).unwrap();
            match explanatory.value_on(col, d.plus_days(-spec.lag_days)) {
                Some(v) => row.push(v),
                None => continue 'dates,
            }
        }
        dates.push(*d);
        abc_skills.push(sa);
        base_skills.push(sb);
        for (column, v) in raw_columns.iter_mut().zip(row) {
            column.push(v);
        }
    }
    if dates.is_empty() {
        return Err(Error::EmptyWindow(
            "no dates with both forecasts, observations, and explanatory values".into(),
        ));
    }

    let outcomes: Vec<f64> = abc_skills
        .iter()
        .zip(&base_skills)
        .map(|(a, b)| a - b)
        .collect();
    let raw_variables: Vec<(String, VariableKind, Vec<f64>)> = manifest
        .variables
        .iter()
        .zip(raw_columns)
        .map(|((name, spec), col)| (name.clone(), spec.kind, col))
        .collect();
    let table = ExplanationTable::build(dates.clone(), outcomes, raw_variables)?;
    let workflow = opportunistic_workflow(
        &table,
        &abc_skills,
        &base_skills,
        explain.bootstrap.level,
        explain.bootstrap.resamples,
        derive_seed(seed, "explain"),
    )?;

    // Per-subject Shapley values as CSV.
    let phi_path = out_dir.join("shapley_values.csv");
    io::write_atomic(&phi_path, |w| {
        use std::io::Write;
        let names: Vec<&str> = table.variables.iter().map(|v| v.name.as_str()).collect();
        writeln!(w, "date,{}", names.join(",")).map_err(|e| Error::Io {
            path: phi_path.clone(),
            source: e,
        })?;
        for (i, d) in table.dates.iter().enumerate() {
            let row: Vec<String> =
                workflow.shapley.phi[i].iter().map(|p| format!("{p}")).collect();
            writeln!(w, "{d},{}", row.join(",")).map_err(|e| Error::Io {
                path: phi_path.clone(),
                source: e,
            })?;
        }
        Ok(())
    })?;

    let choices: Vec<(CalendarDate, usize, crate::explain::Deployment)> = table
        .dates
        .iter()
        .zip(&workflow.impact.high_counts)
        .zip(&workflow.choices)
        .map(|((d, c), choice)| (*d, *c, *choice))
        .collect();
    let summary = ExplainSummary {
        task,
        seed,
        dates: &table.dates,
        variables: table.variables.iter().map(|v| v.name.clone()).collect(),
        effects_raw: &workflow.effects.raw,
        effects_normalized: workflow.effects.normalized.as_deref(),
        bins: &workflow.impact.bins,
        k_star: workflow.k_star,
        k_table: &workflow.k_table,
        mean_abc_skill: workflow.mean_abc_skill,
        mean_baseline_skill: workflow.mean_baseline_skill,
        mean_opportunistic_skill: workflow.mean_opportunistic_skill,
        abc_fraction: workflow.abc_fraction,
        choices,
        most_impacted: table
            .variables
            .iter()
            .enumerate()
            .map(|(j, v)| {
                (
                    v.name.clone(),
                    workflow.most_impacted[j].map(|i| table.dates[i]),
                )
            })
            .collect(),
    };
    io::write_json(&out_dir.join("explanation.json"), &summary)?;
    Ok(())
}
