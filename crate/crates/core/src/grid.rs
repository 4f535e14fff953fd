//! Interconnection model: areas, generator fleets, tie-lines, and the
//! configuration dialect they are loaded from.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::protection::{FfrResource, UflsScheme};

/// Area power-balance mismatch tolerated by [`validate`], per unit of the
/// area's own scale (largest of load and committed generation, at least 1 MW).
pub const BALANCE_TOL_PU: f64 = 1e-6;

fn default_f0<T: Scalar>() -> T {
    T::lit(60.0)
}

fn default_damping<T: Scalar>() -> T {
    T::one()
}

fn default_droop<T: Scalar>() -> T {
    T::lit(0.05)
}

fn default_deadband<T: Scalar>() -> T {
    T::lit(0.036)
}

fn default_kg<T: Scalar>() -> T {
    T::one()
}

fn default_tg<T: Scalar>() -> T {
    T::lit(0.5)
}

fn default_tt<T: Scalar>() -> T {
    T::lit(7.0)
}

fn is_zero<T: Scalar>(x: &T) -> bool {
    x.is_zero()
}

/// The simulated interconnection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct GridModel<T> {
    pub name: String,
    /// Nominal frequency, Hz.
    #[serde(default = "default_f0")]
    pub f0: T,
    /// Pre-contingency operating frequency, Hz.
    #[serde(default = "default_f0")]
    pub initial_frequency: T,
    pub areas: Vec<Area<T>>,
    #[serde(default)]
    pub tie_lines: Vec<TieLine<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct Area<T> {
    pub id: String,
    pub load_mw: T,
    /// Load damping D, pu power per pu frequency on the area load base.
    #[serde(default = "default_damping")]
    pub damping: T,
    #[serde(default)]
    pub fleets: Vec<GeneratorFleet<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ufls: Option<UflsScheme<T>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ffr: Vec<FfrResource<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FleetKind {
    Synchronous,
    Pv,
    Wtg,
}

impl FleetKind {
    pub fn is_converter(self) -> bool {
        !matches!(self, FleetKind::Synchronous)
    }
}

impl fmt::Display for FleetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FleetKind::Synchronous => "synchronous",
            FleetKind::Pv => "pv",
            FleetKind::Wtg => "wtg",
        })
    }
}

/// Aggregate of same-kind units in one area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct GeneratorFleet<T> {
    pub id: String,
    pub kind: FleetKind,
    /// Online rated capacity, MW.
    pub rated_mw: T,
    /// Output at t=0, MW.
    pub committed_mw: T,
    /// Inertia constant on the rated base, s.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub h: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub governor: Option<Governor<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converter: Option<ConverterControl<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadbandKind {
    /// Signal passes unmodified once outside the band.
    #[default]
    Step,
    /// Signal is shifted toward zero by the band width.
    Offset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct Governor<T> {
    /// Droop R, pu.
    #[serde(default = "default_droop")]
    pub droop: T,
    #[serde(default = "default_deadband")]
    pub deadband_hz: T,
    #[serde(default)]
    pub deadband_kind: DeadbandKind,
    /// Share of the fleet under governor control (Kg).
    #[serde(default = "default_kg")]
    pub responsive_fraction: T,
    /// Spinning reserve available for upward response, MW.
    pub headroom_mw: T,
    /// Governor time constant, s.
    #[serde(default = "default_tg")]
    pub tg: T,
    /// Turbine time constant, s.
    #[serde(default = "default_tt")]
    pub tt: T,
}

/// Fast control of a converter-interfaced fleet: synthetic inertia and an
/// optional governor-like droop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct ConverterControl<T> {
    /// MW per Hz/s of filtered frequency derivative.
    #[serde(default)]
    pub synthetic_inertia_gain: T,
    /// Cap on the inertial boost as a fraction of rated MW.
    #[serde(default)]
    pub si_boost_limit: T,
    pub si_filter_t: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub droop: Option<T>,
    pub response_lag_t: T,
    pub headroom_mw: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct TieLine<T> {
    pub from: String,
    pub to: String,
    /// Synchronizing coefficient, MW per radian.
    pub k_sync: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_mw: Option<T>,
    /// Interchange from `from` to `to` at t=0, MW.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub scheduled_mw: T,
    /// Extra flow per Hz of frequency difference across the tie, damping
    /// inter-area swings, MW/Hz.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub damping_mw_per_hz: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaSummary<T> {
    /// Rating-weighted inertia constant, s.
    pub h_sys: T,
    /// Stored kinetic energy, MW·s.
    pub kinetic_mws: T,
}

/// Which invariant a [`Violation`] breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    NoAreas,
    NominalFrequency,
    InitialFrequency,
    DuplicateId,
    Load,
    Damping,
    Rating,
    Committed,
    Inertia,
    ControlKind,
    Governor,
    Headroom,
    Converter,
    TieEndpoint,
    TieCoefficient,
    TieLimit,
    AreaInertia,
    PowerBalance,
    Protection,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::NoAreas => "no-areas",
            Rule::NominalFrequency => "nominal-frequency",
            Rule::InitialFrequency => "initial-frequency",
            Rule::DuplicateId => "duplicate-id",
            Rule::Load => "load",
            Rule::Damping => "damping",
            Rule::Rating => "rating",
            Rule::Committed => "committed",
            Rule::Inertia => "inertia",
            Rule::ControlKind => "control-kind",
            Rule::Governor => "governor",
            Rule::Headroom => "headroom",
            Rule::Converter => "converter",
            Rule::TieEndpoint => "tie-endpoint",
            Rule::TieCoefficient => "tie-coefficient",
            Rule::TieLimit => "tie-limit",
            Rule::AreaInertia => "area-inertia",
            Rule::PowerBalance => "power-balance",
            Rule::Protection => "protection",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub entity: String,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.entity, self.rule, self.detail)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("config parse error at `{path}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse {
        path: String,
        line: Option<usize>,
        message: String,
    },
    #[error("model invalid:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("zero-inertia system")]
    ZeroInertia,
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// Deserializes a TOML document, reporting the failing field path and line.
pub fn parse_config<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ModelError> {
    let de = toml::Deserializer::parse(text).map_err(|e| toml_error(text, String::new(), e))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        toml_error(text, path, e.into_inner())
    })
}

fn toml_error(text: &str, path: String, e: toml::de::Error) -> ModelError {
    let line = e
        .span()
        .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    ModelError::Parse {
        path: if path.is_empty() || path == "." {
            "<document>".into()
        } else {
            path
        },
        line,
        message: e.message().to_string(),
    }
}

/// Parses a model document, applies defaults and checks every invariant.
pub fn load_system<T: Scalar>(config_text: &str) -> Result<GridModel<T>, ModelError> {
    let model: GridModel<T> = parse_config(config_text)?;
    let violations = validate(&model);
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(ModelError::Invalid(violations))
    }
}

/// Renders a model back into the config dialect.
pub fn serialize<T: Scalar>(model: &GridModel<T>) -> Result<String, ModelError> {
    toml::to_string_pretty(model).map_err(|e| ModelError::Serialize(e.to_string()))
}

impl<T: Scalar> GridModel<T> {
    pub fn area_index(&self, id: &str) -> Option<usize> {
        self.areas.iter().position(|a| a.id == id)
    }

    pub fn fleets(&self) -> impl Iterator<Item = &GeneratorFleet<T>> {
        self.areas.iter().flat_map(|a| a.fleets.iter())
    }

    pub fn total_committed(&self) -> T {
        self.fleets().fold(T::zero(), |s, f| s + f.committed_mw)
    }

    pub fn total_load(&self) -> T {
        self.areas.iter().fold(T::zero(), |s, a| s + a.load_mw)
    }

    pub fn committed_of(&self, kind: FleetKind) -> T {
        self.fleets()
            .filter(|f| f.kind == kind)
            .fold(T::zero(), |s, f| s + f.committed_mw)
    }

    /// Scheduled net export of each area implied by the tie schedules.
    pub fn scheduled_exports(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.areas.len()];
        for tie in &self.tie_lines {
            if let (Some(i), Some(j)) = (self.area_index(&tie.from), self.area_index(&tie.to)) {
                out[i] = out[i] + tie.scheduled_mw;
                out[j] = out[j] - tie.scheduled_mw;
            }
        }
        out
    }

    /// Generation minus load minus scheduled export, per area, MW.
    pub fn area_imbalances(&self) -> Vec<T> {
        let exports = self.scheduled_exports();
        self.areas
            .iter()
            .zip(exports)
            .map(|(a, x)| a.committed() - a.load_mw - x)
            .collect()
    }
}

impl<T: Scalar> Area<T> {
    pub fn committed(&self) -> T {
        self.fleets
            .iter()
            .fold(T::zero(), |s, f| s + f.committed_mw)
    }

    /// Stored kinetic energy of committed synchronous fleets, MW·s.
    pub fn kinetic_mws(&self) -> T {
        self.fleets
            .iter()
            .filter(|f| f.kind == FleetKind::Synchronous && f.committed_mw > T::zero())
            .fold(T::zero(), |s, f| s + f.h * f.rated_mw)
    }
}

/// Aggregate inertia of the committed synchronous fleets.
pub fn system_inertia<T: Scalar>(model: &GridModel<T>) -> Result<InertiaSummary<T>, ModelError> {
    let (kinetic, rated) = model
        .fleets()
        .filter(|f| f.kind == FleetKind::Synchronous && f.committed_mw > T::zero())
        .fold((T::zero(), T::zero()), |(k, r), f| {
            (k + f.h * f.rated_mw, r + f.rated_mw)
        });
    if rated <= T::zero() || kinetic <= T::zero() {
        return Err(ModelError::ZeroInertia);
    }
    Ok(InertiaSummary {
        h_sys: kinetic / rated,
        kinetic_mws: kinetic,
    })
}

/// Checks every model invariant plus the t=0 area power balance.
/// An empty list means the model is ready to simulate.
pub fn validate<T: Scalar>(model: &GridModel<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: String, rule: Rule, detail: String| {
        out.push(Violation {
            entity,
            rule,
            detail,
        })
    };
    let model_ent = format!("model '{}'", model.name);

    if model.areas.is_empty() {
        push(
            model_ent.clone(),
            Rule::NoAreas,
            "at least one area required".into(),
        );
    }
    if !(model.f0 > T::zero()) {
        push(
            model_ent.clone(),
            Rule::NominalFrequency,
            format!("f0 must be > 0, got {}", model.f0),
        );
    }
    if !((model.initial_frequency - model.f0).abs() <= T::one()) {
        push(
            model_ent.clone(),
            Rule::InitialFrequency,
            format!(
                "initial_frequency {} outside [{}, {}]",
                model.initial_frequency,
                model.f0 - T::one(),
                model.f0 + T::one()
            ),
        );
    }

    let mut area_ids = HashSet::new();
    for area in &model.areas {
        let ent = format!("area '{}'", area.id);
        if !area_ids.insert(area.id.as_str()) {
            push(ent.clone(), Rule::DuplicateId, "area id repeated".into());
        }
        if !(area.load_mw >= T::zero()) {
            push(
                ent.clone(),
                Rule::Load,
                format!("load must be >= 0, got {}", area.load_mw),
            );
        }
        if !(area.damping >= T::zero()) {
            push(
                ent.clone(),
                Rule::Damping,
                format!("damping must be >= 0, got {}", area.damping),
            );
        }
        let mut fleet_ids = HashSet::new();
        for fleet in &area.fleets {
            let fent = format!("fleet '{}/{}'", area.id, fleet.id);
            if !fleet_ids.insert(fleet.id.as_str()) {
                push(
                    fent.clone(),
                    Rule::DuplicateId,
                    "fleet id repeated within area".into(),
                );
            }
            check_fleet(fleet, &fent, &mut push);
        }
        if area.kinetic_mws() <= T::zero() {
            push(
                ent.clone(),
                Rule::AreaInertia,
                "area has no committed synchronous inertia".into(),
            );
        }
        if let Some(scheme) = &area.ufls {
            for msg in scheme.check() {
                push(ent.clone(), Rule::Protection, msg);
            }
        }
        for r in &area.ffr {
            for msg in r.check() {
                push(ent.clone(), Rule::Protection, msg);
            }
        }
    }

    for (k, tie) in model.tie_lines.iter().enumerate() {
        let ent = format!("tie #{} '{}'->'{}'", k, tie.from, tie.to);
        for end in [&tie.from, &tie.to] {
            if model.area_index(end).is_none() {
                push(
                    ent.clone(),
                    Rule::TieEndpoint,
                    format!("unknown area '{end}'"),
                );
            }
        }
        if tie.from == tie.to {
            push(
                ent.clone(),
                Rule::TieEndpoint,
                "from and to must differ".into(),
            );
        }
        if !(tie.k_sync > T::zero()) {
            push(
                ent.clone(),
                Rule::TieCoefficient,
                format!("k_sync must be > 0, got {}", tie.k_sync),
            );
        }
        if !(tie.damping_mw_per_hz >= T::zero()) {
            push(
                ent.clone(),
                Rule::TieCoefficient,
                format!("damping must be >= 0, got {}", tie.damping_mw_per_hz),
            );
        }
        if let Some(limit) = tie.limit_mw {
            if !(limit > T::zero()) || tie.scheduled_mw.abs() > limit {
                push(
                    ent.clone(),
                    Rule::TieLimit,
                    format!(
                        "scheduled {} MW exceeds limit {} MW",
                        tie.scheduled_mw, limit
                    ),
                );
            }
        }
    }

    for (area, imb) in model.areas.iter().zip(model.area_imbalances()) {
        let scale = area.load_mw.max(area.committed()).max(T::one());
        if !(imb.abs() <= T::lit(BALANCE_TOL_PU) * scale) {
            push(
                format!("area '{}'", area.id),
                Rule::PowerBalance,
                format!("power imbalance {} MW", imb.abs()),
            );
        }
    }
    out
}

fn check_fleet<T: Scalar>(
    fleet: &GeneratorFleet<T>,
    ent: &str,
    push: &mut impl FnMut(String, Rule, String),
) {
    let e = || ent.to_string();
    if !(fleet.rated_mw > T::zero()) {
        push(
            e(),
            Rule::Rating,
            format!("rated_mw must be > 0, got {}", fleet.rated_mw),
        );
    }
    if !(fleet.committed_mw >= T::zero() && fleet.committed_mw <= fleet.rated_mw) {
        push(
            e(),
            Rule::Committed,
            format!(
                "committed {} MW outside [0, rated {} MW]",
                fleet.committed_mw, fleet.rated_mw
            ),
        );
    }
    match fleet.kind {
        FleetKind::Synchronous => {
            if !(fleet.h > T::zero()) {
                push(
                    e(),
                    Rule::Inertia,
                    "synchronous fleet must have H > 0".into(),
                );
            }
            if fleet.converter.is_some() {
                push(
                    e(),
                    Rule::ControlKind,
                    "converter control only valid on pv/wtg fleets".into(),
                );
            }
        }
        kind => {
            if fleet.h != T::zero() {
                push(e(), Rule::Inertia, format!("{kind} fleet must have H=0"));
            }
            if fleet.governor.is_some() {
                push(
                    e(),
                    Rule::ControlKind,
                    format!("{kind} fleet cannot carry a governor"),
                );
            }
        }
    }
    if let Some(g) = &fleet.governor {
        let bad = |what: &str, v: T| format!("{what} out of range: {v}");
        if !(g.droop > T::zero()) {
            push(e(), Rule::Governor, bad("droop", g.droop));
        }
        if !(g.deadband_hz >= T::zero()) {
            push(e(), Rule::Governor, bad("deadband_hz", g.deadband_hz));
        }
        if !(g.responsive_fraction >= T::zero() && g.responsive_fraction <= T::one()) {
            push(
                e(),
                Rule::Governor,
                bad("responsive_fraction", g.responsive_fraction),
            );
        }
        if !(g.tg > T::zero()) {
            push(e(), Rule::Governor, bad("tg", g.tg));
        }
        if !(g.tt > T::zero()) {
            push(e(), Rule::Governor, bad("tt", g.tt));
        }
        let spare = fleet.rated_mw - fleet.committed_mw;
        if !(g.headroom_mw >= T::zero()) || g.headroom_mw > spare * (T::one() + T::lit(1e-9)) {
            push(
                e(),
                Rule::Headroom,
                format!(
                    "headroom {} MW exceeds rated - committed = {} MW",
                    g.headroom_mw, spare
                ),
            );
        }
    }
    if let Some(c) = &fleet.converter {
        let bad = |what: &str, v: T| format!("{what} out of range: {v}");
        if !(c.synthetic_inertia_gain >= T::zero()) {
            push(
                e(),
                Rule::Converter,
                bad("synthetic_inertia_gain", c.synthetic_inertia_gain),
            );
        }
        if !(c.si_boost_limit >= T::zero() && c.si_boost_limit <= T::lit(0.10)) {
            push(
                e(),
                Rule::Converter,
                bad("si_boost_limit (max 0.10)", c.si_boost_limit),
            );
        }
        if !(c.si_filter_t > T::zero()) {
            push(e(), Rule::Converter, bad("si_filter_t", c.si_filter_t));
        }
        if !(c.response_lag_t > T::zero()) {
            push(
                e(),
                Rule::Converter,
                bad("response_lag_t", c.response_lag_t),
            );
        }
        if !(c.headroom_mw >= T::zero()) {
            push(e(), Rule::Converter, bad("headroom_mw", c.headroom_mw));
        }
        if let Some(r) = c.droop {
            if !(r > T::zero()) {
                push(e(), Rule::Converter, bad("droop", r));
            }
        }
    }
}
