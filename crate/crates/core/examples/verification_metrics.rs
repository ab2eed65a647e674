//! Deterministic verification tour: per-date uncentered anomaly correlation
//! with seasonal grouping and a bootstrap confidence interval, spatial
//! skill, the fraction of grid with actionable skill, and the bias map.

use subseasonal_abc::calendar::CalendarDate;
use subseasonal_abc::metrics::{
    bias_map, fraction_above, mean_skill, skill, spatial_skill,
};
use subseasonal_abc::progressive::raw_ensemble_series;
use subseasonal_abc::series::{build_climatology, Horizon, TaskSpec};
use subseasonal_abc::synth::{generate_scenario, BiasModel, ScenarioConfig};

fn main() -> subseasonal_abc::Result<()> {
    let mut cfg = ScenarioConfig::small(21);
    cfg.grid_rows = 3;
    cfg.grid_cols = 3;
    cfg.years = (2013, 2020);
    cfg.bias = BiasModel::Seasonal { amplitude: 2.0 };
    let scenario = generate_scenario(&cfg)?;
    let task = TaskSpec::new(cfg.variable, Horizon::Weeks34);
    let climatology = build_climatology(&scenario.obs, (2013, 2017))?;

    let targets: Vec<CalendarDate> = scenario
        .obs
        .dates()
        .iter()
        .copied()
        .filter(|d| d.year() >= 2019)
        .collect();
    let forecasts = raw_ensemble_series(&scenario.archive, task, &targets)?;

    // Per-date anomaly-correlation skill, averaged progressively with a
    // bootstrap CI.
    let mut per_date = Vec::new();
    for d in forecasts.dates() {
        let f = forecasts.complete_row(*d).unwrap();
        let y = scenario.obs.complete_row(*d).unwrap();
        let c = climatology.values_on(*d).unwrap();
        per_date.push((*d, skill(f, y, c)?));
    }
    let summary = mean_skill(&per_date)?.with_bootstrap_ci(0.95, 1000, 99)?;
    let ci = summary.ci.unwrap();
    println!(
        "mean skill over {} dates: {:.3} (95% CI {:.3}..{:.3})",
        summary.defined_dates, summary.mean, ci.lo, ci.hi
    );
    for (season, mean) in &summary.season_means {
        println!("  {}: {:.3}", season.name(), mean);
    }

    // Spatial skill and the share of grid above a usefulness threshold.
    let spatial = spatial_skill(&forecasts, &scenario.obs, &climatology)?;
    println!("spatial skill: {:?}", spatial.iter().map(|s| s.map(|v| (v * 1e3).round() / 1e3)).collect::<Vec<_>>());
    for threshold in [0.0, 0.2, 0.4, 0.6] {
        println!(
            "  fraction above {threshold:.1}: {:.2}",
            fraction_above(&spatial, threshold)?
        );
    }

    // Bias map against the truth record.
    let bias = bias_map(&forecasts, &scenario.obs)?;
    let injected: Vec<f64> = {
        let mut sums = vec![0.0; scenario.obs.grid().len()];
        let mut n = 0.0;
        for d in forecasts.dates() {
            let row = scenario.truth_bias.complete_row(*d).unwrap();
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
            n += 1.0;
        }
        sums.iter().map(|s| s / n).collect()
    };
    println!("estimated bias vs injected mean bias (point 0): {:.3} vs {:.3}", bias[0].unwrap(), injected[0]);
    Ok(())
}
