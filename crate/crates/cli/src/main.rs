//! `freqlab`: batch front end for frequency-response studies and PV
//! expansion planning.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure, 3 infeasible.

mod calibrate;
mod expand;
mod inputs;
mod knobs;
mod simulate;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use freqlab_core::calibration::ObjectiveMode;

use crate::inputs::{Failure, Outcome};
use crate::table::Format;

#[derive(Parser)]
#[command(name = "freqlab", version, about = "Frequency response laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one contingency and write its trace, events and metrics.
    Run(RunCmd),
    /// Run a grid of scenarios and knob values and tabulate the metrics.
    Sweep(SweepCmd),
    /// Fit inertia, governor participation and deadband to measured traces.
    Calibrate(CalibrateCmd),
    /// Solve a PV expansion plan.
    Expand(ExpandCmd),
    /// Validate a model and confirm it holds nominal frequency undisturbed.
    Check(CheckCmd),
}

#[derive(Args)]
struct SimArgs {
    /// Grid model (TOML).
    #[arg(long)]
    model: PathBuf,
    /// Contingency file, or inline `area:mw[@t]`.
    #[arg(long)]
    contingency: String,
    /// Protection preset or file.
    #[arg(long, default_value = "none")]
    protection: String,
    /// Integration step, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated time, s.
    #[arg(long)]
    horizon: Option<f64>,
    /// Starting frequency, Hz, overriding the model's.
    #[arg(long)]
    initial_frequency: Option<f64>,
    /// Knob override `name=value` (droop, deadband, ffr-mw, si-gain); repeatable.
    #[arg(long = "set")]
    settings: Vec<String>,
    /// Frequency response obligation, MW/0.1 Hz or EI, WECC, ERCOT.
    #[arg(long)]
    obligation: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct RunCmd {
    #[command(flatten)]
    sim: SimArgs,
    /// Scenario file applied to the model.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    sim: SimArgs,
    /// Scenario file; repeatable. Without one the base model is swept.
    #[arg(long)]
    scenario: Vec<PathBuf>,
    /// Knob values `name=v1,v2,...`; repeatable.
    #[arg(long)]
    vary: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Metrics,
    Rmse,
}

#[derive(Args)]
struct CalibrateCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Measured trace CSV with a `time_s` column; repeatable, one per
    /// contingency in the same order.
    #[arg(long, required = true)]
    trace: Vec<PathBuf>,
    /// Frequency column of the trace.
    #[arg(long)]
    column: Option<String>,
    #[arg(long, required = true)]
    contingency: Vec<String>,
    #[arg(long, default_value = "none")]
    protection: String,
    /// Knob bounds (TOML).
    #[arg(long)]
    bounds: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "metrics")]
    objective: Objective,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    initial_frequency: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ExpandCmd {
    /// Expansion problem (TOML).
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    initial_frequency: Option<f64>,
    /// Flat-run length, s.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

fn run_args<'a>(s: &'a SimArgs, scenario: Option<&'a std::path::Path>) -> simulate::RunArgs<'a> {
    simulate::RunArgs {
        model: &s.model,
        scenario,
        contingency: &s.contingency,
        protection: &s.protection,
        settings: &s.settings,
        dt: s.dt,
        horizon: s.horizon,
        initial_frequency: s.initial_frequency,
        obligation: s.obligation.as_deref(),
        out: &s.out,
        format: s.format,
    }
}

fn dispatch(cli: Cli) -> Outcome<u8> {
    match cli.command {
        Command::Run(c) => simulate::cmd_run(&run_args(&c.sim, c.scenario.as_deref())).map(|_| 0),
        Command::Sweep(c) => simulate::cmd_sweep(&simulate::SweepArgs {
            run: run_args(&c.sim, None),
            scenarios: &c.scenario,
            vary: &c.vary,
        }),
        Command::Calibrate(c) => calibrate::cmd_calibrate(&calibrate::CalibrateArgs {
            model: &c.model,
            scenario: c.scenario.as_deref(),
            traces: &c.trace,
            column: c.column.as_deref(),
            contingencies: &c.contingency,
            protection: &c.protection,
            bounds: c.bounds.as_deref(),
            objective: match c.objective {
                Objective::Metrics => ObjectiveMode::Metrics,
                Objective::Rmse => ObjectiveMode::TraceRmse,
            },
            dt: c.dt,
            horizon: c.horizon,
            initial_frequency: c.initial_frequency,
            out: &c.out,
        })
        .map(|_| 0),
        Command::Expand(c) => expand::cmd_expand(&c.problem, &c.out).map(|_| 0),
        Command::Check(c) => simulate::cmd_check(&simulate::CheckArgs {
            model: &c.model,
            scenario: c.scenario.as_deref(),
            initial_frequency: c.initial_frequency,
            duration: c.duration,
            out: c.out.as_deref(),
            format: c.format,
        })
        .and_then(|pass| {
            if pass {
                Ok(0)
            } else {
                Err(Failure::Numerical(
                    "model drifts from its starting frequency without a disturbance".into(),
                ))
            }
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("freqlab: {e}");
            ExitCode::from(e.code())
        }
    }
}
