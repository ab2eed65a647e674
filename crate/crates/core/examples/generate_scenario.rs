//! Generates a synthetic forecasting scenario and writes its datasets:
//! two-week observations, daily observations, the ensemble forecast archive,
//! and the injected-bias truth record.

use subseasonal_abc::calendar::CalendarDate;
use subseasonal_abc::io;
use subseasonal_abc::synth::{generate_scenario, BiasModel, ScenarioConfig, Scenario};
use subseasonal_abc::Variable;

fn main() -> subseasonal_abc::Result<()> {
    let cfg = ScenarioConfig {
        variable: Variable::Precipitation,
        grid_rows: 3,
        grid_cols: 3,
        years: (2016, 2020),
        seed: 7,
        seasonal_amplitude: 2.0,
        seasonal_base: 3.5,
        noise_scale: 0.8,
        ar_coefficient: 0.65,
        slow_fraction: 0.3,
        slow_ar: 0.97,
        // A wet bias over the northern grid rows, dry over the south.
        bias: BiasModel::Regional {
            offsets: vec![-4.0, -4.0, -4.0, 0.5, 0.5, 0.5, 6.0, 6.0, 6.0],
        },
        ensemble_size: 4,
        member_spread: 0.5,
        skill_rho: 0.75,
        leads: vec![15],
        reforecast_until: Some(CalendarDate::new(2019, 1, 1)?),
        issuance_stride: 1,
    };
    let Scenario {
        obs,
        daily_obs,
        archive,
        truth_bias,
    } = generate_scenario(&cfg)?;

    println!(
        "grid: {} points; daily days: {}; two-week targets: {}; archive entries: {}",
        obs.grid().len(),
        daily_obs.len(),
        obs.len(),
        archive.len()
    );
    let d0 = obs.dates()[0];
    println!(
        "first target {d0}: obs = {:?}",
        obs.complete_row(d0).unwrap()
    );
    println!(
        "injected ensemble-mean bias there: {:?}",
        truth_bias.complete_row(d0).unwrap()
    );

    let out = std::path::Path::new("target/scenario_demo");
    io::store_field_series(&obs, &out.join("obs.csv"))?;
    io::store_field_series(&daily_obs, &out.join("daily_obs.csv"))?;
    io::store_forecast_archive(&archive, &out.join("forecasts.csv"))?;
    println!("wrote CSV datasets under {}", out.display());
    Ok(())
}
