use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use freqlab_core::calibration::CalibrationError;
use freqlab_core::engine::{Contingency, SimConfig, SimError};
use freqlab_core::grid::{load_system, parse_config, GridModel, ModelError};
use freqlab_core::metrics::MetricsError;
use freqlab_core::protection::ProtectionScheme;
use freqlab_core::scenario::{load_scenario, ScenarioError, ScenarioSpec};
use freqlab_expansion::SolveError;

/// Command failure, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
    Infeasible(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Infeasible(_) => 3,
        }
    }

    pub fn duplicate(&self) -> Self {
        match self {
            Failure::Input(m) => Failure::Input(m.clone()),
            Failure::Numerical(m) => Failure::Numerical(m.clone()),
            Failure::Infeasible(m) => Failure::Infeasible(m.clone()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Infeasible(m) => write!(f, "infeasible: {m}"),
        }
    }
}

pub type Outcome<T> = Result<T, Failure>;

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::ZeroInertia => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Infeasible(_) => Failure::Infeasible(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Divergence { .. } | SimError::ZeroInertia | SimError::ZeroDenominator => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<CalibrationError> for Failure {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::AllDivergent => Failure::Numerical(e.to_string()),
            CalibrationError::Simulation(s) => s.into(),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Problem(_) => Failure::Input(e.to_string()),
            SolveError::Infeasible { .. } => Failure::Infeasible(e.to_string()),
            SolveError::Numerical(_) | SolveError::Plan(_) => Failure::Numerical(e.to_string()),
        }
    }
}

pub fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn located<T>(path: &Path, r: Result<T, impl Into<Failure>>) -> Outcome<T> {
    r.map_err(|e| match e.into() {
        Failure::Input(m) => Failure::Input(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn load_model(path: &Path) -> Outcome<GridModel<f64>> {
    located(path, load_system(&read(path)?))
}

pub fn load_scenario_file(path: &Path) -> Outcome<ScenarioSpec<f64>> {
    located(path, load_scenario(&read(path)?))
}

/// A contingency file, or inline `area:mw` / `area:mw@t`.
pub fn load_contingency(spec: &str) -> Outcome<Contingency<f64>> {
    let path = Path::new(spec);
    if path.exists() {
        return located(path, parse_config::<Contingency<f64>>(&read(path)?));
    }
    let bad = || {
        Failure::Input(format!(
            "contingency '{spec}' is neither a file nor of the form area:mw[@t]"
        ))
    };
    let (area, rest) = spec.split_once(':').ok_or_else(bad)?;
    let (mw, t) = match rest.split_once('@') {
        Some((mw, t)) => (mw, t.parse::<f64>().map_err(|_| bad())?),
        None => (rest, 16.0),
    };
    let mw = mw.parse::<f64>().map_err(|_| bad())?;
    let mut c = Contingency::new(area, mw, t);
    c.id = spec.to_string();
    Ok(c)
}

/// A preset name or a protection file.
pub fn load_protection(spec: &str) -> Outcome<ProtectionScheme<f64>> {
    let scheme = match ProtectionScheme::preset(spec) {
        Some(s) => s,
        None => {
            let path = Path::new(spec);
            if !path.exists() {
                return Err(Failure::Input(format!(
                    "protection '{spec}' is neither a preset ({}) nor a file",
                    ProtectionScheme::<f64>::PRESETS.join(", ")
                )));
            }
            located(path, parse_config::<ProtectionScheme<f64>>(&read(path)?))?
        }
    };
    let problems = scheme.check();
    if problems.is_empty() {
        Ok(scheme)
    } else {
        Err(Failure::Input(format!(
            "protection '{spec}': {}",
            problems.join("; ")
        )))
    }
}

pub fn sim_config(c: &Contingency<f64>, dt: Option<f64>, horizon: Option<f64>) -> SimConfig<f64> {
    let mut cfg = SimConfig::covering(c);
    if let Some(dt) = dt {
        cfg.dt = dt;
        cfg.output_dt = cfg.output_dt.max(dt);
    }
    if let Some(h) = horizon {
        cfg.horizon_s = h;
    }
    cfg
}

/// Output directory, created on demand.
pub fn out_dir(path: &Path) -> Outcome<PathBuf> {
    fs::create_dir_all(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

pub fn write(dir: &Path, name: &str, text: &str) -> Outcome<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Failure::Input(format!("{}: {e}", parent.display())))?;
    }
    fs::write(&path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

pub fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}
