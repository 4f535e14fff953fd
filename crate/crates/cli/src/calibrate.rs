use std::path::Path;

use serde::{Deserialize, Serialize};

use freqlab_core::calibration::{
    apply_knobs, calibrate, CalibrationProblem, CalibrationResult, KnobBounds, ObjectiveMode,
};
use freqlab_core::grid::serialize;
use freqlab_core::metrics::{read_trace_csv, FrequencyTrace};

use crate::inputs::{self, json, Failure, Outcome};
use crate::simulate::prepare_model;

/// Bounds file; omitted knobs keep their default range.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    inertia_scale: Option<(f64, f64)>,
    governor_fraction: Option<(f64, f64)>,
    deadband_hz: Option<(f64, f64)>,
}

fn load_bounds(path: Option<&Path>) -> Outcome<KnobBounds<f64>> {
    let mut b = KnobBounds::default();
    if let Some(path) = path {
        let f: BoundsFile = toml::from_str(&inputs::read(path)?)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        b.inertia_scale = f.inertia_scale.unwrap_or(b.inertia_scale);
        b.governor_fraction = f.governor_fraction.unwrap_or(b.governor_fraction);
        b.deadband_hz = f.deadband_hz.unwrap_or(b.deadband_hz);
    }
    Ok(b)
}

/// Reads the measured trace from `column`, or from `frequency_hz` then
/// `f_coi` when no column is named.
fn load_trace(path: &Path, column: Option<&str>, t0: f64) -> Outcome<FrequencyTrace<f64>> {
    let text = inputs::read(path)?;
    let located =
        |e: freqlab_core::metrics::MetricsError| Failure::Input(format!("{}: {e}", path.display()));
    match column {
        Some(c) => read_trace_csv(&text, Some(c), t0).map_err(located),
        None => read_trace_csv(&text, None, t0)
            .or_else(|_| read_trace_csv(&text, Some("f_coi"), t0))
            .map_err(located),
    }
}

pub struct CalibrateArgs<'a> {
    pub model: &'a Path,
    pub scenario: Option<&'a Path>,
    /// Measured traces, each paired with the contingency at the same position.
    pub traces: &'a [std::path::PathBuf],
    pub column: Option<&'a str>,
    pub contingencies: &'a [String],
    pub protection: &'a str,
    pub bounds: Option<&'a Path>,
    pub objective: ObjectiveMode,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub initial_frequency: Option<f64>,
    pub out: &'a Path,
}

#[derive(Serialize)]
struct CalibrationFile<'a> {
    model: &'a str,
    traces: Vec<String>,
    bounds: KnobBounds<f64>,
    objective_mode: ObjectiveMode,
    result: &'a CalibrationResult<f64>,
}

pub fn cmd_calibrate(a: &CalibrateArgs<'_>) -> Outcome<()> {
    let (base, _) = prepare_model(a.model, a.scenario, a.initial_frequency)?;
    if a.traces.is_empty() || a.traces.len() != a.contingencies.len() {
        return Err(Failure::Input(format!(
            "need one contingency per trace, got {} trace(s) and {} contingency(ies)",
            a.traces.len(),
            a.contingencies.len()
        )));
    }
    let contingencies = a
        .contingencies
        .iter()
        .map(|c| inputs::load_contingency(c))
        .collect::<Outcome<Vec<_>>>()?;
    let measured = a
        .traces
        .iter()
        .zip(&contingencies)
        .map(|(t, c)| load_trace(t, a.column, c.t_event))
        .collect::<Outcome<Vec<_>>>()?;
    let bounds = load_bounds(a.bounds)?;
    let mut problem = CalibrationProblem::new(&base, &measured[0], &contingencies[0], bounds);
    for (m, c) in measured.iter().zip(&contingencies).skip(1) {
        problem.add_event(m, c, 1.0);
    }
    for (ev, c) in problem.events.iter_mut().zip(&contingencies) {
        ev.cfg = inputs::sim_config(c, a.dt, a.horizon);
    }
    problem.protection = inputs::load_protection(a.protection)?;
    problem.weights.mode = a.objective;
    let result = calibrate(&problem)?;

    let k = &result.knobs;
    let mut text = result.report_table(&base.name);
    text.push_str(&format!(
        "\ninertia_scale      {:.4}\ngovernor_fraction  {:.4}\ndeadband_hz        {:.4}\nobjective          {:.6e} (start {:.6e})\nevaluations        {}\n",
        k.inertia_scale, k.governor_fraction, k.deadband_hz, result.objective, result.initial_objective, result.evaluations
    ));
    let tuned = serialize(&apply_knobs(&base, k))?;
    let dir = inputs::out_dir(a.out)?;
    inputs::write(&dir, "calibration.txt", &text)?;
    inputs::write(
        &dir,
        "calibration.json",
        &json(&CalibrationFile {
            model: &base.name,
            traces: a.traces.iter().map(|t| t.display().to_string()).collect(),
            bounds,
            objective_mode: a.objective,
            result: &result,
        }),
    )?;
    inputs::write(&dir, "tuned-model.toml", &tuned)?;
    print!("{text}");
    Ok(())
}
