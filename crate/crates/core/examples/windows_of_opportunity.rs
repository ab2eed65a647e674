//! The opportunistic deployment workflow end to end: explain per-date skill
//! differences between ABC and an operational baseline with Cohort Shapley,
//! rank variables by Shapley effects, flag high-impact bins, pick the
//! deployment threshold k*, and report the blended skill.

use subseasonal_abc::calendar::CalendarDate;
use subseasonal_abc::explain::{opportunistic_workflow, ExplanationTable, ImpactFlag, VariableKind};
use subseasonal_abc::metrics::skill;
use subseasonal_abc::progressive::{run_progressive, CorrectionModel, RunOptions};
use subseasonal_abc::series::{build_climatology, Horizon, TaskSpec};
use subseasonal_abc::synth::{generate_scenario, BiasModel, ScenarioConfig};

fn main() -> subseasonal_abc::Result<()> {
    let mut cfg = ScenarioConfig::small(29);
    cfg.grid_rows = 3;
    cfg.grid_cols = 3;
    cfg.years = (2012, 2020);
    cfg.slow_fraction = 0.4;
    cfg.bias = BiasModel::Constant { offset: 3.0 };
    cfg.reforecast_until = Some(CalendarDate::new(2014, 1, 1)?);
    let scenario = generate_scenario(&cfg)?;
    let task = TaskSpec::new(cfg.variable, Horizon::Weeks34);
    let climatology = build_climatology(&scenario.obs, (2012, 2016))?;

    // Two streams to compare: ABC and the operational debiasing baseline.
    let targets: Vec<CalendarDate> = scenario
        .obs
        .dates()
        .iter()
        .copied()
        .filter(|d| d.year() >= 2019 && d.ordinal() % 4 == 0)
        .collect();
    let options = RunOptions::default();
    let abc = run_progressive(
        CorrectionModel::Abc,
        task,
        &scenario.obs,
        std::slice::from_ref(&scenario.archive),
        &climatology,
        &targets,
        &options,
    )?;
    let deb = run_progressive(
        CorrectionModel::OperationalDebias,
        task,
        &scenario.obs,
        std::slice::from_ref(&scenario.archive),
        &climatology,
        &targets,
        &options,
    )?;

    // Aligned per-date skills (step 2 of the workflow).
    let mut dates = Vec::new();
    let mut abc_skill = Vec::new();
    let mut deb_skill = Vec::new();
    for (i, t) in abc.dates.iter().enumerate() {
        let Some(j) = deb.dates.iter().position(|d| d == t) else { continue };
        let y = scenario.obs.complete_row(*t).unwrap();
        let c = climatology.values_on(*t).unwrap();
        let (Some(sa), Some(sd)) = (
            skill(&abc.values[i], y, c)?,
            skill(&deb.values[j], y, c)?,
        ) else {
            continue;
        };
        dates.push(*t);
        abc_skill.push(sa);
        deb_skill.push(sd);
    }
    let outcomes: Vec<f64> = abc_skill.iter().zip(&deb_skill).map(|(a, b)| a - b).collect();

    // Explanatory variables observable at issuance: a lagged large-scale
    // state index (mean observation 30 days back), the target month, and an
    // oscillation phase derived from the calendar.
    let state_index: Vec<f64> = dates
        .iter()
        .map(|d| {
            let lagged = d.plus_days(-30);
            let row = scenario.obs.complete_row(lagged).unwrap();
            row.iter().sum::<f64>() / row.len() as f64
        })
        .collect();
    let month: Vec<f64> = dates.iter().map(|d| d.month() as f64).collect();
    let phase: Vec<f64> = dates
        .iter()
        .map(|d| ((d.ordinal() / 12) % 8 + 1) as f64)
        .collect();

    let table = ExplanationTable::build(
        dates.clone(),
        outcomes,
        vec![
            ("state_index".into(), VariableKind::Continuous, state_index),
            ("month".into(), VariableKind::Categorical, month),
            ("phase".into(), VariableKind::Categorical, phase),
        ],
    )?;
    let workflow = opportunistic_workflow(&table, &abc_skill, &deb_skill, 0.95, 500, 11)?;

    println!("Shapley effects (normalized):");
    if let Some(norm) = &workflow.effects.normalized {
        for (v, e) in table.variables.iter().zip(norm) {
            println!("  {:<12} {:.3}", v.name, e);
        }
    }
    println!("high/low impact bins:");
    for b in &workflow.impact.bins {
        if b.flag != ImpactFlag::Intermediate {
            println!(
                "  {:<12} bin {:>2}: p(positive impact) = {:.2} ({:?})",
                table.variables[b.variable].name, b.bin, b.p_positive, b.flag
            );
        }
    }
    println!("threshold sweep (k, blended skill): {:?}", workflow.k_table);
    println!(
        "k* = {}; ABC deployed on {:.0}% of dates",
        workflow.k_star,
        workflow.abc_fraction * 100.0
    );
    println!(
        "mean skill: abc {:.3}, baseline {:.3}, opportunistic {:.3}",
        workflow.mean_abc_skill, workflow.mean_baseline_skill, workflow.mean_opportunistic_skill
    );
    for (j, v) in table.variables.iter().enumerate() {
        if let Some(i) = workflow.most_impacted[j] {
            println!("most impacted by {}: {}", v.name, table.dates[i]);
        }
    }
    Ok(())
}
