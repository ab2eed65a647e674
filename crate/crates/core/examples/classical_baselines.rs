//! The classical debiasing baselines side by side: operational reforecast
//! debiasing, quantile mapping, LOESS correction, and the multimodel mean.

use subseasonal_abc::baselines::{
    loess_apply, loess_fit, multimodel_mean, operational_debias, quantile_map,
    target_series_at_lead, LoessParams, QuantileMapModel, ReforecastProtocol,
};
use subseasonal_abc::calendar::CalendarDate;
use subseasonal_abc::series::{Horizon, TaskSpec};
use subseasonal_abc::synth::{generate_scenario, BiasModel, ScenarioConfig};

fn main() -> subseasonal_abc::Result<()> {
    let mut cfg = ScenarioConfig::small(5);
    cfg.years = (2012, 2019);
    cfg.bias = BiasModel::Constant { offset: 2.5 };
    cfg.reforecast_until = Some(CalendarDate::new(2018, 1, 1)?);
    let scenario = generate_scenario(&cfg)?;
    let task = TaskSpec::new(cfg.variable, Horizon::Weeks34);
    let t_star = CalendarDate::new(2019, 6, 1)?;
    let lead = task.lead_days();
    let raw = scenario
        .archive
        .ensemble_mean(t_star.plus_days(-lead), lead, None)
        .expect("raw forecast");
    let truth = scenario.obs.complete_row(t_star).unwrap();
    println!("raw forecast:  {raw:?}");
    println!("observed:      {truth:?}  (injected bias +2.5)");

    // Operational ECMWF-style protocol: +/- 6 days over the last 20 years.
    let deb = operational_debias(
        &ReforecastProtocol::ecmwf_style(),
        &scenario.archive,
        &scenario.obs,
        t_star,
        task,
    )?;
    println!("op. debiased:  {deb:?}");

    // Quantile mapping fitted on everything observable at issuance.
    let cutoff = task.training_cutoff(t_star);
    let qm = QuantileMapModel::fit(&scenario.archive, &scenario.obs, task, cutoff)?;
    let qm_out = quantile_map(&qm, &raw, t_star, cfg.variable)?;
    println!("quantile map:  {qm_out:?}");

    // LOESS: smooth 365-day mean curves of observations and forecasts.
    let train_fcst = target_series_at_lead(&scenario.archive, lead, cutoff)?;
    let loess = loess_fit(&scenario.obs, &train_fcst, cutoff, cfg.variable, &LoessParams::default())?;
    let loess_out = loess_apply(&loess, &raw, t_star)?;
    println!("loess:         {loess_out:?}");

    // Multimodel mean over two (here: identical) model archives.
    let models = vec![scenario.archive.clone(), scenario.archive.clone()];
    let mmm = multimodel_mean(&models, t_star, task, 6)?;
    println!("multimodel:    {mmm:?}");
    Ok(())
}
