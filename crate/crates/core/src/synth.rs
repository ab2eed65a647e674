//! Deterministic synthetic-scenario generator: seasonal ground truth with
//! autocorrelated anomalies, plus an ensemble forecast archive carrying a
//! known injected systematic error. The exact injected bias is recorded per
//! (target date, grid point) so tests can verify its recovery.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::archive::{Era, ForecastArchive, ForecastEntry};
use crate::calendar::{CalendarDate, PERIOD_LENGTH_DAYS};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::seeding::derive_seed;
use crate::series::{aggregate_period, FieldSeries, Variable};

/// Systematic error injected into the forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BiasModel {
    /// Constant additive offset everywhere.
    Constant { offset: f64 },
    /// Additive offset oscillating with the day of year.
    Seasonal { amplitude: f64 },
    /// Additive offset per grid point (length must match the grid).
    Regional { offsets: Vec<f64> },
    /// Multiplicative wet/dry factor applied to the pre-noise forecast.
    Multiplicative { factor: f64 },
}

/// Scenario configuration. All randomness derives from `seed`; per-grid-point
/// streams use counter-based sub-streams so parallel generation would
/// reproduce the serial output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub variable: Variable,
    /// Rows x columns of a regular 1.5-degree grid anchored at (30N, 110W).
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Inclusive year range of daily data.
    pub years: (i32, i32),
    pub seed: u64,
    /// Amplitude of the seasonal cycle.
    pub seasonal_amplitude: f64,
    /// Mean level of the seasonal cycle.
    pub seasonal_base: f64,
    /// Stationary standard deviation of the daily anomaly process.
    pub noise_scale: f64,
    /// Lag-1 coefficient of the daily anomaly process.
    pub ar_coefficient: f64,
    /// Variance share of a slow second anomaly component (0 disables it).
    /// The slow component is what lagged-observation regressors can see at
    /// subseasonal lags.
    #[serde(default)]
    pub slow_fraction: f64,
    /// Lag-1 coefficient of the slow anomaly component.
    #[serde(default = "default_slow_ar")]
    pub slow_ar: f64,
    pub bias: BiasModel,
    /// Ensemble members per (issuance, lead) cell.
    pub ensemble_size: usize,
    /// Standard deviation of per-member noise.
    pub member_spread: f64,
    /// Correlation of the forecast anomaly with the true anomaly.
    pub skill_rho: f64,
    /// Leads emitted per issuance date.
    pub leads: Vec<i64>,
    /// Issuances before this date carry the reforecast era tag.
    pub reforecast_until: Option<CalendarDate>,
    /// Emit an issuance every this many days.
    pub issuance_stride: i64,
}

fn default_slow_ar() -> f64 {
    0.97
}

impl ScenarioConfig {
    /// A small default scenario, convenient in examples and tests.
    pub fn small(seed: u64) -> Self {
        ScenarioConfig {
            variable: Variable::Temperature,
            grid_rows: 2,
            grid_cols: 2,
            years: (2015, 2020),
            seed,
            seasonal_amplitude: 8.0,
            seasonal_base: 12.0,
            noise_scale: 1.0,
            ar_coefficient: 0.7,
            slow_fraction: 0.0,
            slow_ar: default_slow_ar(),
            bias: BiasModel::Constant { offset: 3.0 },
            ensemble_size: 2,
            member_spread: 0.2,
            skill_rho: 0.8,
            leads: vec![15],
            reforecast_until: None,
            issuance_stride: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::Config("scenario grid must be non-empty".into()));
        }
        if self.years.1 < self.years.0 {
            return Err(Error::Config(format!(
                "scenario year range {:?} is empty",
                self.years
            )));
        }
        if self.noise_scale < 0.0 || self.member_spread < 0.0 {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.skill_rho) {
            return Err(Error::Config(format!(
                "skill_rho {} outside [0, 1]",
                self.skill_rho
            )));
        }
        if !(0.0..1.0).contains(&self.slow_fraction) {
            return Err(Error::Config(format!(
                "slow_fraction {} outside [0, 1)",
                self.slow_fraction
            )));
        }
        if self.ensemble_size < 1 {
            return Err(Error::Config("ensemble_size must be >= 1".into()));
        }
        if self.leads.is_empty() || self.leads.iter().any(|&l| l < 0) {
            return Err(Error::Config("scenario leads must be non-negative and non-empty".into()));
        }
        if self.issuance_stride < 1 {
            return Err(Error::Config("issuance_stride must be >= 1".into()));
        }
        if let BiasModel::Regional { offsets } = &self.bias {
            if offsets.len() != self.grid_rows * self.grid_cols {
                return Err(Error::Config(format!(
                    "regional bias carries {} offsets for {} grid points",
                    offsets.len(),
                    self.grid_rows * self.grid_cols
                )));
            }
        }
        Ok(())
    }
}

/// A generated scenario: two-week target observations, the forecast
/// archive, the daily observations underlying them, and the injected-bias
/// truth record per (target date, grid point).
#[derive(Debug, Clone)]
pub struct Scenario {
    /// Two-week aggregated observations indexed by period start date.
    pub obs: FieldSeries,
    /// Daily observations (mean-aggregation inputs).
    pub daily_obs: FieldSeries,
    pub archive: ForecastArchive,
    /// Injected systematic ensemble-mean bias per (target date, grid point).
    pub truth_bias: FieldSeries,
}

fn seasonal_cycle(cfg: &ScenarioConfig, date: CalendarDate, point: usize) -> f64 {
    let doy = day_of_year(date);
    let phase = 0.35 * point as f64;
    cfg.seasonal_base
        + 0.3 * point as f64
        + cfg.seasonal_amplitude * ((2.0 * std::f64::consts::PI * doy / 365.25) + phase).sin()
}

fn day_of_year(date: CalendarDate) -> f64 {
    let jan1 = CalendarDate::new(date.year(), 1, 1).unwrap();
    date.days_since(jan1) as f64
}

/// AR(1) series with stationary standard deviation `scale`.
fn ar1_series(rng: &mut ChaCha8Rng, n: usize, phi: f64, scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let innovation = scale * (1.0 - phi * phi).sqrt();
    let mut state = scale * rng.sample::<f64, _>(StandardNormal);
    for _ in 0..n {
        out.push(state);
        state = phi * state + innovation * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

fn stream(cfg: &ScenarioConfig, label: &str, point: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, label));
    rng.set_stream(point as u64 + 1);
    rng
}

/// Generates a scenario. Deterministic per seed: the same configuration
/// yields bit-identical datasets.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let g = cfg.grid_rows * cfg.grid_cols;
    let grid = Grid::regular(
        (30.0, 30.0 + 1.5 * (cfg.grid_rows - 1) as f64),
        (-110.0, -110.0 + 1.5 * (cfg.grid_cols - 1) as f64),
        1.5,
    )?;
    debug_assert_eq!(grid.len(), g);

    let start = CalendarDate::new(cfg.years.0, 1, 1)?;
    let end = CalendarDate::new(cfg.years.1, 12, 31)?;
    let n_days = (end.days_since(start) + 1) as usize;
    let dates: Vec<CalendarDate> = (0..n_days as i64).map(|i| start.plus_days(i)).collect();
    let period = PERIOD_LENGTH_DAYS;

    // Per-point daily anomaly streams: the true anomaly and an independent
    // one carrying forecast error. Each is a fast AR(1) plus an optional
    // slow AR(1) component with variance share `slow_fraction`.
    let composite = |cfg: &ScenarioConfig, fast_label: &str, slow_label: &str, p: usize| {
        let fast_scale = cfg.noise_scale * (1.0 - cfg.slow_fraction).sqrt();
        let mut rng = stream(cfg, fast_label, p);
        let mut series = ar1_series(&mut rng, n_days, cfg.ar_coefficient, fast_scale);
        if cfg.slow_fraction > 0.0 {
            let slow_scale = cfg.noise_scale * cfg.slow_fraction.sqrt();
            let mut rng = stream(cfg, slow_label, p);
            let slow = ar1_series(&mut rng, n_days, cfg.slow_ar, slow_scale);
            for (a, s) in series.iter_mut().zip(slow) {
                *a += s;
            }
        }
        series
    };
    let mut true_anom: Vec<Vec<f64>> = Vec::with_capacity(g);
    let mut alt_anom: Vec<Vec<f64>> = Vec::with_capacity(g);
    for p in 0..g {
        true_anom.push(composite(cfg, "true_anomaly", "true_anomaly_slow", p));
        alt_anom.push(composite(cfg, "alt_anomaly", "alt_anomaly_slow", p));
    }

    // Daily observations: seasonal cycle plus the true anomaly.
    let mut daily_values = Vec::with_capacity(n_days * g);
    for (i, date) in dates.iter().enumerate() {
        for p in 0..g {
            daily_values.push(seasonal_cycle(cfg, *date, p) + true_anom[p][i]);
        }
    }
    let daily_obs = FieldSeries::dense(grid.clone(), dates.clone(), daily_values)?;
    let obs = aggregate_period(&daily_obs, cfg.variable.aggregation(), period)?;

    // Period aggregates of the anomaly streams and the cycle, per point,
    // aligned with `obs` dates (period start dates).
    let n_periods = obs.len();
    let agg = |series: &[f64], t: usize| -> f64 {
        let window = &series[t..t + period as usize];
        let sum: f64 = window.iter().sum();
        match cfg.variable.aggregation() {
            crate::series::AggregationMode::Mean => sum / period as f64,
            crate::series::AggregationMode::Sum => sum,
        }
    };

    // Injected bias per (period target date, point), applied to the shared
    // (pre-member-noise) forecast value.
    let mut truth_values = Vec::with_capacity(n_periods * g);
    let mut shared_signal: Vec<Vec<f64>> = vec![Vec::with_capacity(n_periods); g];
    let rho = cfg.skill_rho;
    let err_mix = (1.0 - rho * rho).sqrt();
    for t in 0..n_periods {
        let date = obs.dates()[t];
        for (p, shared_p) in shared_signal.iter_mut().enumerate() {
            let cycle_agg = {
                let mut s = 0.0;
                for d in 0..period {
                    s += seasonal_cycle(cfg, date.plus_days(d), p);
                }
                match cfg.variable.aggregation() {
                    crate::series::AggregationMode::Mean => s / period as f64,
                    crate::series::AggregationMode::Sum => s,
                }
            };
            let signal = cycle_agg + rho * agg(&true_anom[p], t) + err_mix * agg(&alt_anom[p], t);
            shared_p.push(signal);
            let bias = match &cfg.bias {
                BiasModel::Constant { offset } => *offset,
                BiasModel::Seasonal { amplitude } => {
                    amplitude * (2.0 * std::f64::consts::PI * day_of_year(date) / 365.25).sin()
                }
                BiasModel::Regional { offsets } => offsets[p],
                BiasModel::Multiplicative { factor } => (factor - 1.0) * signal,
            };
            truth_values.push(bias);
        }
    }
    let truth_bias = FieldSeries::dense(grid.clone(), obs.dates().to_vec(), truth_values)?;

    // Forecast archive: entries per (issuance, lead, member) whose target
    // period lies inside the daily record.
    let mut entries = Vec::new();
    let mut member_rngs: Vec<ChaCha8Rng> = (0..g).map(|p| stream(cfg, "member_noise", p)).collect();
    let date_of_period: std::collections::HashMap<i64, usize> = obs
        .dates()
        .iter()
        .enumerate()
        .map(|(i, d)| (d.ordinal(), i))
        .collect();
    let mut issuance = start;
    while issuance <= end {
        for &lead in &cfg.leads {
            let target = issuance.plus_days(lead);
            let Some(&t) = date_of_period.get(&target.ordinal()) else {
                continue;
            };
            let era = match cfg.reforecast_until {
                Some(split) if issuance < split => Era::Reforecast,
                _ => Era::Forecast,
            };
            for member in 0..cfg.ensemble_size {
                let mut values = Vec::with_capacity(g);
                for (p, rng) in member_rngs.iter_mut().enumerate() {
                    let noise: f64 = rng.sample(StandardNormal);
                    let base = shared_signal[p][t] + truth_bias.value_by_index(t, p).unwrap();
                    values.push(base + cfg.member_spread * noise);
                }
                entries.push(ForecastEntry {
                    issuance,
                    lead_days: lead,
                    member: member as i32,
                    era,
                    values,
                });
            }
        }
        issuance = issuance.plus_days(cfg.issuance_stride);
    }
    let archive = ForecastArchive::build(grid, entries)?;

    Ok(Scenario {
        obs,
        daily_obs,
        archive,
        truth_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::bias_map;
    use crate::progressive::raw_ensemble_series;
    use crate::series::{Horizon, TaskSpec};

    #[test]
    fn deterministic_per_seed() {
        let cfg = ScenarioConfig::small(7);
        let a = generate_scenario(&cfg).unwrap();
        let b = generate_scenario(&cfg).unwrap();
        for (i, d) in a.obs.dates().iter().enumerate() {
            assert_eq!(b.obs.dates()[i], *d);
            for p in 0..a.obs.grid().len() {
                assert_eq!(a.obs.value(*d, p), b.obs.value(*d, p));
            }
        }
        assert_eq!(a.archive.len(), b.archive.len());
        for (iss, lead) in a.archive.cell_keys() {
            assert_eq!(
                a.archive.ensemble_mean(iss, lead, None),
                b.archive.ensemble_mean(iss, lead, None)
            );
        }
        let c = generate_scenario(&ScenarioConfig::small(8)).unwrap();
        let d0 = a.obs.dates()[0];
        assert_ne!(a.obs.value(d0, 0), c.obs.value(d0, 0));
    }

    #[test]
    fn exact_member_identity_without_noise() {
        // sigma = tau = 0, rho = 1, bias b: member == truth + b exactly.
        let mut cfg = ScenarioConfig::small(3);
        cfg.noise_scale = 0.0;
        cfg.member_spread = 0.0;
        cfg.skill_rho = 1.0;
        cfg.bias = BiasModel::Constant { offset: 2.5 };
        let s = generate_scenario(&cfg).unwrap();
        for (iss, lead) in s.archive.cell_keys() {
            let target = iss.plus_days(lead);
            let truth = s.obs.complete_row(target).unwrap();
            for m in s.archive.members(iss, lead).unwrap() {
                for (p, v) in m.values.iter().enumerate() {
                    assert!((v - (truth[p] + 2.5)).abs() < 1e-9, "target {target} point {p}");
                }
            }
        }
    }

    #[test]
    fn bias_map_recovers_injected_offset() {
        let mut cfg = ScenarioConfig::small(11);
        cfg.years = (2011, 2020);
        cfg.bias = BiasModel::Constant { offset: 5.0 };
        cfg.member_spread = 0.1;
        let s = generate_scenario(&cfg).unwrap();
        let task = TaskSpec::new(Variable::Temperature, Horizon::Weeks34);
        let targets: Vec<CalendarDate> = s
            .obs
            .dates()
            .iter()
            .copied()
            .filter(|d| d.year() >= 2012)
            .collect();
        let raw = raw_ensemble_series(&s.archive, task, &targets).unwrap();
        let bias = bias_map(&raw, &s.obs).unwrap();
        // Law-of-large-numbers bound: ~3 sigma / sqrt(effective dates); the
        // two-week window induces autocorrelation so allow a factor ~30.
        let n = raw.dates().len() as f64;
        let bound = 3.0 * cfg.noise_scale * (30.0f64 / n).sqrt();
        for (p, b) in bias.iter().enumerate() {
            let b = b.unwrap();
            assert!(
                (b - 5.0).abs() < bound.max(0.2),
                "point {p}: bias {b} not within {bound} of 5.0"
            );
        }
    }

    #[test]
    fn bias_error_shrinks_with_sample_size() {
        let mut cfg = ScenarioConfig::small(13);
        cfg.bias = BiasModel::Constant { offset: 2.0 };
        cfg.member_spread = 0.0;
        let task = TaskSpec::new(Variable::Temperature, Horizon::Weeks34);

        let mut errors = Vec::new();
        for years in [(2017, 2018), (2013, 2020)] {
            cfg.years = years;
            let s = generate_scenario(&cfg).unwrap();
            let targets: Vec<CalendarDate> = s.obs.dates().to_vec();
            let raw = raw_ensemble_series(&s.archive, task, &targets).unwrap();
            let bias = bias_map(&raw, &s.obs).unwrap();
            let mean_err = bias
                .iter()
                .map(|b| (b.unwrap() - 2.0).abs())
                .sum::<f64>()
                / bias.len() as f64;
            errors.push(mean_err);
        }
        // Quadrupling the sample should roughly halve the error; allow a
        // generous factor.
        assert!(
            errors[1] < errors[0] * 1.2,
            "errors did not shrink: {errors:?}"
        );
    }

    #[test]
    fn dynpp_learns_exact_offset_on_noiseless_scenario() {
        // Perfect forecasts plus a constant injected bias: the learned
        // Dynamical++ offset is exactly -b and the output reproduces the
        // truth.
        use crate::correctors::{dynpp_ensemble, dynpp_forecast, DynppConfig};
        let mut cfg = ScenarioConfig::small(2);
        cfg.noise_scale = 0.0;
        cfg.member_spread = 0.0;
        cfg.skill_rho = 1.0;
        cfg.bias = BiasModel::Constant { offset: 4.25 };
        let s = generate_scenario(&cfg).unwrap();
        let task = TaskSpec::new(Variable::Temperature, Horizon::Weeks34);
        let dyn_cfg = DynppConfig::new(35, 1, vec![15]);
        let t_star = CalendarDate::new(2019, 6, 1).unwrap();
        let out = dynpp_forecast(&dyn_cfg, task, &s.archive, &s.obs, t_star).unwrap();
        let fbar = dynpp_ensemble(&dyn_cfg, task, &s.archive, t_star).unwrap();
        let truth = s.obs.complete_row(t_star).unwrap();
        for p in 0..out.len() {
            assert!(
                (out[p] - fbar[p] + 4.25).abs() < 1e-12,
                "learned offset at point {p}: {}",
                out[p] - fbar[p]
            );
            assert!((out[p] - truth[p]).abs() < 1e-9, "output vs truth at {p}");
        }
    }

    #[test]
    fn multiplicative_bias_recorded() {
        let mut cfg = ScenarioConfig::small(5);
        cfg.variable = Variable::Precipitation;
        cfg.bias = BiasModel::Multiplicative { factor: 1.5 };
        cfg.member_spread = 0.0;
        let s = generate_scenario(&cfg).unwrap();
        // member = 1.5 * signal, truth record = 0.5 * signal:
        // member - signal == truth record.
        let (iss, lead) = s.archive.cell_keys().next().unwrap();
        let target = iss.plus_days(lead);
        let m = &s.archive.members(iss, lead).unwrap()[0];
        let t = s.truth_bias.complete_row(target).unwrap();
        for p in 0..m.values.len() {
            let signal = m.values[p] - t[p];
            assert!((t[p] - 0.5 * signal).abs() < 1e-9);
        }
    }

    #[test]
    fn era_split_and_stride() {
        let mut cfg = ScenarioConfig::small(9);
        cfg.reforecast_until = Some(CalendarDate::new(2018, 1, 1).unwrap());
        cfg.issuance_stride = 3;
        let s = generate_scenario(&cfg).unwrap();
        let mut seen_reforecast = false;
        let mut seen_forecast = false;
        let mut last: Option<CalendarDate> = None;
        for (iss, lead) in s.archive.cell_keys() {
            if let Some(prev) = last {
                if prev != iss {
                    assert_eq!((iss.days_since(prev)) % 3, 0);
                }
            }
            last = Some(iss);
            for m in s.archive.members(iss, lead).unwrap() {
                match m.era {
                    Era::Reforecast => {
                        seen_reforecast = true;
                        assert!(iss < CalendarDate::new(2018, 1, 1).unwrap());
                    }
                    Era::Forecast => {
                        seen_forecast = true;
                        assert!(iss >= CalendarDate::new(2018, 1, 1).unwrap());
                    }
                }
            }
        }
        assert!(seen_reforecast && seen_forecast);
    }
}
