use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use freqlab_core::engine::{
    simulate, Channel, Contingency, Diagnostics, SimConfig, SimulationResult,
};
use freqlab_core::grid::{validate, GridModel};
use freqlab_core::metrics::{
    compliance_check, Compliance, FrequencyTrace, MetricsReport, BAL003_THRESHOLDS,
};
use freqlab_core::protection::{shed_ledger, ProtectionScheme, ShedLedger};
use freqlab_core::scenario::{flat_run_check, penetration_of, FLAT_RUN_DURATION_S};

use crate::inputs::{self, json, Failure, Outcome};
use crate::knobs::{self, Setting};
use crate::table::{Format, Table};

/// Model after scenario, starting-frequency and knob adjustments.
pub fn prepare_model(
    model: &Path,
    scenario: Option<&Path>,
    initial_frequency: Option<f64>,
) -> Outcome<(GridModel<f64>, String)> {
    let base = inputs::load_model(model)?;
    let (mut m, id) = match scenario {
        Some(path) => {
            let spec = inputs::load_scenario_file(path)?;
            (spec.apply(&base)?, spec.id)
        }
        None => (base, "base".to_string()),
    };
    if let Some(f) = initial_frequency {
        m.initial_frequency = f;
        check_valid(&m)?;
    }
    Ok((m, id))
}

fn check_valid(m: &GridModel<f64>) -> Outcome<()> {
    let v = validate(m);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Failure::Input(
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ))
    }
}

/// One fully specified simulation.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub label: String,
    pub scenario: String,
    pub model: GridModel<f64>,
    pub protection: ProtectionScheme<f64>,
    pub contingency: Contingency<f64>,
    pub cfg: SimConfig<f64>,
    pub obligation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub model: String,
    pub scenario: String,
    pub contingency: Contingency<f64>,
    pub protection: String,
    pub pv_penetration: f64,
    pub wtg_penetration: f64,
    pub metrics: MetricsReport<f64>,
    pub area_ids: Vec<String>,
    pub area_nadirs_hz: Vec<f64>,
    pub shed: ShedLedger<f64>,
    pub compliance: Option<Compliance<f64>>,
    pub diagnostics: Diagnostics<f64>,
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub result: SimulationResult<f64>,
}

pub fn execute(spec: &RunSpec) -> Outcome<RunOutput> {
    check_valid(&spec.model)?;
    let result = simulate(&spec.model, &spec.contingency, &spec.protection, &spec.cfg)?;
    let trace = FrequencyTrace::from_result(&result, Channel::Coi)?;
    let metrics = MetricsReport::from_trace(&trace, Some(spec.contingency.delta_p_mw))?;
    let pen = penetration_of(&spec.model)?;
    let compliance = match (spec.obligation, metrics.nerc_response_mw_per_0p1hz) {
        (Some(th), Some(r)) => Some(compliance_check(r, th)),
        _ => None,
    };
    Ok(RunOutput {
        summary: RunSummary {
            label: spec.label.clone(),
            model: spec.model.name.clone(),
            scenario: spec.scenario.clone(),
            contingency: spec.contingency.clone(),
            protection: spec.protection.name.clone(),
            pv_penetration: pen.pv,
            wtg_penetration: pen.wtg,
            metrics,
            area_ids: result.area_ids.clone(),
            area_nadirs_hz: result.area_nadirs(),
            shed: shed_ledger(&result),
            compliance,
            diagnostics: result.diagnostics,
        },
        result,
    })
}

/// An obligation in MW/0.1 Hz, given as a number or an interconnection name.
pub fn parse_obligation(text: &str) -> Outcome<f64> {
    if let Some((_, v)) = BAL003_THRESHOLDS
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(text))
    {
        return Ok(*v);
    }
    text.parse::<f64>()
        .ok()
        .filter(|v| *v > 0.0)
        .ok_or_else(|| {
            Failure::Input(format!(
                "obligation '{text}' is neither a positive number nor EI/WECC/ERCOT"
            ))
        })
}

fn metric_rows(s: &RunSummary) -> Vec<(String, String)> {
    let m = &s.metrics;
    let mut rows = vec![
        ("nadir_hz".to_string(), format!("{:.4}", m.nadir_hz)),
        ("t_nadir_s".into(), format!("{:.2}", m.t_nadir)),
        (
            "rocof_mhz_per_s".into(),
            format!("{:.1}", m.rocof_mhz_per_s),
        ),
        ("settling_hz".into(), format!("{:.4}", m.settling_hz)),
        ("value_a_hz".into(), format!("{:.4}", m.value_a_hz)),
        ("value_b_hz".into(), format!("{:.4}", m.value_b_hz)),
        (
            "nerc_mw_per_0p1hz".into(),
            m.nerc_response_mw_per_0p1hz
                .map(|v| format!("{v:.1}"))
                .unwrap_or_else(|| "-".into()),
        ),
        ("ffr_mw".into(), format!("{:.1}", s.shed.ffr_mw)),
        ("ufls_mw".into(), format!("{:.1}", s.shed.ufls_mw)),
        (
            "ufls_pct".into(),
            format!("{:.2}", 100.0 * s.shed.ufls_fraction),
        ),
        (
            "max_frequency_hz".into(),
            format!("{:.4}", s.diagnostics.max_frequency_hz),
        ),
    ];
    if let Some(c) = &s.compliance {
        rows.push(("obligation_met".into(), c.pass.to_string()));
        rows.push(("obligation_margin".into(), format!("{:.1}", c.margin)));
    }
    for (id, f) in s.area_ids.iter().zip(&s.area_nadirs_hz) {
        rows.push((format!("nadir_{id}_hz"), format!("{f:.4}")));
    }
    rows
}

fn metrics_table(s: &RunSummary) -> Table {
    let mut t = Table::new(&["metric", "value"]);
    for (k, v) in metric_rows(s) {
        t.row(vec![k, v]);
    }
    t
}

pub struct RunArgs<'a> {
    pub model: &'a Path,
    pub scenario: Option<&'a Path>,
    pub contingency: &'a str,
    pub protection: &'a str,
    pub settings: &'a [String],
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub initial_frequency: Option<f64>,
    pub obligation: Option<&'a str>,
    pub out: &'a Path,
    pub format: Format,
}

fn base_spec(a: &RunArgs<'_>, scenario: Option<&Path>) -> Outcome<RunSpec> {
    let (mut model, scenario_id) = prepare_model(a.model, scenario, a.initial_frequency)?;
    let mut protection = inputs::load_protection(a.protection)?;
    for s in a.settings {
        knobs::apply(&mut model, &mut protection, knobs::parse_setting(s)?)?;
    }
    let contingency = inputs::load_contingency(a.contingency)?;
    let cfg = inputs::sim_config(&contingency, a.dt, a.horizon);
    Ok(RunSpec {
        label: scenario_id.clone(),
        scenario: scenario_id,
        model,
        protection,
        contingency,
        cfg,
        obligation: a.obligation.map(parse_obligation).transpose()?,
    })
}

fn write_run(dir: &Path, out: &RunOutput, format: Format) -> Outcome<()> {
    inputs::write(dir, "trace.csv", &out.result.to_csv())?;
    inputs::write(dir, "events.csv", &out.result.events_csv())?;
    inputs::write(dir, "metrics.json", &json(&out.summary))?;
    inputs::write(dir, "shed_ledger.json", &json(&out.summary.shed))?;
    let table = metrics_table(&out.summary);
    inputs::write(
        dir,
        &format!("metrics.{}", format.extension()),
        &table.render(format),
    )
}

pub fn cmd_run(a: &RunArgs<'_>) -> Outcome<()> {
    let spec = base_spec(a, a.scenario)?;
    let out = execute(&spec)?;
    let dir = inputs::out_dir(a.out)?;
    write_run(&dir, &out, a.format)?;
    print!("{}", metrics_table(&out.summary).render(a.format));
    Ok(())
}

pub struct SweepArgs<'a> {
    pub run: RunArgs<'a>,
    pub scenarios: &'a [PathBuf],
    pub vary: &'a [String],
}

fn dir_name(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '=' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs every scenario under every combination of varied knobs, in input
/// order. A failed run fills its row with the failure; the rest complete.
/// Returns the highest exit code among failed runs, 0 when all succeeded.
pub fn cmd_sweep(a: &SweepArgs<'_>) -> Outcome<u8> {
    // Inputs shared by every point fail the whole sweep up front.
    inputs::load_model(a.run.model)?;
    inputs::load_protection(a.run.protection)?;
    inputs::load_contingency(a.run.contingency)?;
    for s in a.run.settings {
        knobs::parse_setting(s)?;
    }
    a.run.obligation.map(parse_obligation).transpose()?;
    let scenarios: Vec<Option<&Path>> = if a.scenarios.is_empty() {
        vec![None]
    } else {
        a.scenarios.iter().map(|p| Some(p.as_path())).collect()
    };
    let mut combos: Vec<Vec<Setting>> = vec![vec![]];
    for v in a.vary {
        let (knob, values) = knobs::parse_sweep(v)?;
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |&value| {
                    let mut c = c.clone();
                    c.push(Setting { knob, value });
                    c
                })
            })
            .collect();
    }
    let points = scenarios.len() * combos.len();
    if points < 2 {
        return Err(Failure::Input(format!(
            "a sweep needs at least 2 points, got {points}; add scenarios or --vary values"
        )));
    }

    let mut specs: Vec<Outcome<RunSpec>> = Vec::new();
    for sc in &scenarios {
        for combo in &combos {
            specs.push(base_spec(&a.run, *sc).and_then(|mut spec| {
                for s in combo {
                    knobs::apply(&mut spec.model, &mut spec.protection, *s)?;
                    spec.label = format!("{}+{s}", spec.label);
                }
                Ok(spec)
            }));
        }
    }
    let outputs: Vec<Outcome<RunOutput>> = specs
        .par_iter()
        .map(|s| match s {
            Ok(spec) => execute(spec),
            Err(e) => Err(e.duplicate()),
        })
        .collect();

    let mut table = Table::new(&[
        "run",
        "nadir_hz",
        "rocof_mhz_per_s",
        "settling_hz",
        "nerc_mw_per_0p1hz",
        "obligation_margin",
        "ffr_mw",
        "ufls_mw",
        "ufls_pct",
        "status",
    ]);
    let dir = inputs::out_dir(a.run.out)?;
    let mut summaries = Vec::new();
    let mut worst = 0;
    for (k, (spec, out)) in specs.iter().zip(&outputs).enumerate() {
        let label = spec
            .as_ref()
            .map(|s| s.label.clone())
            .unwrap_or_else(|_| format!("run{}", k + 1));
        match out {
            Ok(o) => {
                let s = &o.summary;
                let m = &s.metrics;
                table.row(vec![
                    label.clone(),
                    format!("{:.4}", m.nadir_hz),
                    format!("{:.1}", m.rocof_mhz_per_s),
                    format!("{:.4}", m.settling_hz),
                    m.nerc_response_mw_per_0p1hz
                        .map(|v| format!("{v:.1}"))
                        .unwrap_or_else(|| "-".into()),
                    s.compliance
                        .map(|c| format!("{:.1}", c.margin))
                        .unwrap_or_else(|| "-".into()),
                    format!("{:.1}", s.shed.ffr_mw),
                    format!("{:.1}", s.shed.ufls_mw),
                    format!("{:.2}", 100.0 * s.shed.ufls_fraction),
                    "ok".into(),
                ]);
                write_run(&dir.join(dir_name(&label)), o, a.run.format)?;
                summaries.push(Some(s.clone()));
            }
            Err(e) => {
                worst = worst.max(e.code());
                let mut row = vec![label];
                row.extend(std::iter::repeat_n("-".to_string(), 8));
                row.push(format!("failed: {e}"));
                table.row(row);
                summaries.push(None);
            }
        }
    }
    inputs::write(
        &dir,
        &format!("sweep.{}", a.run.format.extension()),
        &table.render(a.run.format),
    )?;
    inputs::write(&dir, "sweep.json", &json(&summaries))?;
    print!("{}", table.render(a.run.format));
    Ok(worst)
}

pub struct CheckArgs<'a> {
    pub model: &'a Path,
    pub scenario: Option<&'a Path>,
    pub initial_frequency: Option<f64>,
    pub duration: Option<f64>,
    pub out: Option<&'a Path>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub model: String,
    pub scenario: String,
    pub areas: usize,
    pub system_load_mw: f64,
    pub pv_penetration: f64,
    pub wtg_penetration: f64,
    pub duration_s: f64,
    pub max_abs_deviation_pu: f64,
    pub pass: bool,
}

/// Validates the model and holds it flat with no disturbance. Returns
/// whether the flat run passed.
pub fn cmd_check(a: &CheckArgs<'_>) -> Outcome<bool> {
    let (model, scenario) = prepare_model(a.model, a.scenario, a.initial_frequency)?;
    let duration = a.duration.unwrap_or(FLAT_RUN_DURATION_S);
    let flat = flat_run_check(&model, duration)?;
    let pen = penetration_of(&model)?;
    let report = CheckReport {
        model: model.name.clone(),
        scenario,
        areas: model.areas.len(),
        system_load_mw: model.total_load(),
        pv_penetration: pen.pv,
        wtg_penetration: pen.wtg,
        duration_s: duration,
        max_abs_deviation_pu: flat.max_abs_dev_pu,
        pass: flat.pass,
    };
    let mut t = Table::new(&["check", "value"]);
    t.row(vec!["model".into(), report.model.clone()]);
    t.row(vec!["scenario".into(), report.scenario.clone()]);
    t.row(vec!["areas".into(), report.areas.to_string()]);
    t.row(vec!["validation".into(), "ok".into()]);
    t.row(vec![
        "pv_penetration".into(),
        format!("{:.4}", report.pv_penetration),
    ]);
    t.row(vec![
        "wtg_penetration".into(),
        format!("{:.4}", report.wtg_penetration),
    ]);
    t.row(vec!["flat_run_s".into(), format!("{duration}")]);
    t.row(vec![
        "max_abs_deviation_pu".into(),
        format!("{:.3e}", report.max_abs_deviation_pu),
    ]);
    t.row(vec![
        "flat_run".into(),
        if report.pass { "pass" } else { "fail" }.into(),
    ]);
    if let Some(out) = a.out {
        let dir = inputs::out_dir(out)?;
        inputs::write(&dir, "check.json", &json(&report))?;
        inputs::write(
            &dir,
            &format!("check.{}", a.format.extension()),
            &t.render(a.format),
        )?;
    }
    print!("{}", t.render(a.format));
    Ok(report.pass)
}
