//! Probabilistic forecasting from deterministic corrections: each ensemble
//! member is shifted by the learned corrections, the pooled 2n+1-member
//! distribution is scored with CRPS, and the Brier skill score for the
//! above-normal event is computed against climatological terciles.

use subseasonal_abc::calendar::CalendarDate;
use subseasonal_abc::correctors::{abc_probabilistic, baseline_probabilistic};
use subseasonal_abc::metrics::{brier_skill_score, build_tercile_thresholds, crps, EmpiricalDistribution};
use subseasonal_abc::progressive::{run_progressive, CorrectionModel, RunOptions};
use subseasonal_abc::series::{build_climatology, Horizon, TaskSpec};
use subseasonal_abc::synth::{generate_scenario, BiasModel, ScenarioConfig};

fn main() -> subseasonal_abc::Result<()> {
    let mut cfg = ScenarioConfig::small(17);
    cfg.years = (2012, 2019);
    cfg.ensemble_size = 11;
    cfg.member_spread = 0.8;
    cfg.bias = BiasModel::Constant { offset: 2.0 };
    let scenario = generate_scenario(&cfg)?;
    let task = TaskSpec::new(cfg.variable, Horizon::Weeks34);
    let climatology = build_climatology(&scenario.obs, (2012, 2016))?;
    let terciles = build_tercile_thresholds(&scenario.obs, (2012, 2016))?;

    // Deterministic ABC components for a handful of target dates.
    let targets: Vec<CalendarDate> = (0..5)
        .map(|i| CalendarDate::new(2019, 6, 1).unwrap().plus_days(i * 14))
        .collect();
    let run = run_progressive(
        CorrectionModel::Abc,
        task,
        &scenario.obs,
        std::slice::from_ref(&scenario.archive),
        &climatology,
        &targets,
        &RunOptions::default(),
    )?;

    let lead = task.lead_days();
    let mut abc_crps = 0.0;
    let mut raw_crps = 0.0;
    let mut abc_bss = 0.0;
    let mut raw_bss = 0.0;
    for (t, components) in &run.abc_components {
        let issuance = t.plus_days(-lead);
        let members: Vec<Vec<f64>> = scenario
            .archive
            .members(issuance, lead)
            .unwrap()
            .iter()
            .map(|m| m.values.clone())
            .collect();
        let ens_mean = scenario.archive.ensemble_mean(issuance, lead, None).unwrap();
        // Pooled 2n+1 distribution from the three deterministic outputs.
        let abc_dists = abc_probabilistic(
            &members,
            &components.dynamical,
            &components.persistence,
            components.climatology.as_ref().unwrap(),
            &ens_mean,
            cfg.variable,
        )?;
        // Raw ensemble as the uncorrected reference distribution.
        let raw_dists = baseline_probabilistic(&members, &ens_mean, &ens_mean, cfg.variable)?;
        assert_eq!(abc_dists[0].len(), 2 * members.len() + 1);

        let y = scenario.obs.complete_row(*t).unwrap();
        let x = terciles.values_on(*t).unwrap();
        let g = y.len() as f64;
        abc_crps += abc_dists.iter().zip(y).map(|(d, &o)| crps(d, o)).sum::<f64>() / g;
        raw_crps += raw_dists.iter().zip(y).map(|(d, &o)| crps(d, o)).sum::<f64>() / g;
        abc_bss += brier_skill_score(&abc_dists, y, x)?;
        raw_bss += brier_skill_score(&raw_dists, y, x)?;

        // A peek at one pooled distribution.
        if *t == targets[0] {
            let d: &EmpiricalDistribution = &abc_dists[0];
            println!(
                "{t} point 0: {} pooled members, range {:.2}..{:.2}, mean {:.2}, obs {:.2}",
                d.len(),
                d.members()[0],
                d.members()[d.len() - 1],
                d.mean(),
                y[0]
            );
        }
    }
    let n = run.abc_components.len() as f64;
    println!("mean CRPS  abc: {:.3}  raw ensemble: {:.3}  (lower is better)", abc_crps / n, raw_crps / n);
    println!("mean BSS   abc: {:.3}  raw ensemble: {:.3}  (higher is better)", abc_bss / n, raw_bss / n);
    Ok(())
}
