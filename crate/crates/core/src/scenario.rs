//! Penetration scenarios: displace synchronous output with PV and wind,
//! re-balance the tie schedules, and check the result holds steady.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{simulate_unbalanced, Contingency, SimConfig, SimError};
use crate::grid::{
    parse_config, validate, FleetKind, GeneratorFleet, GridModel, ModelError, Violation,
};
use crate::num::Scalar;
use crate::protection::ProtectionScheme;

pub const FLAT_RUN_TOLERANCE_PU: f64 = 1e-5;
pub const FLAT_RUN_DURATION_S: f64 = 20.0;

/// Target shares of committed output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PenetrationTargets<T> {
    pub pv: T,
    pub wtg: T,
}

impl<T: Scalar> PenetrationTargets<T> {
    pub fn new(pv: T, wtg: T) -> Result<Self, ScenarioError> {
        let t = Self { pv, wtg };
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        let unit = |x: T| x >= T::zero() && x <= T::one();
        if !unit(self.pv) || !unit(self.wtg) {
            return Err(ScenarioError::InvalidTargets(format!(
                "shares must lie in [0, 1], got pv {} wtg {}",
                self.pv, self.wtg
            )));
        }
        if !(self.pv + self.wtg < T::one()) {
            return Err(ScenarioError::InvalidTargets(format!(
                "pv + wtg = {} leaves no synchronous generation",
                self.pv + self.wtg
            )));
        }
        Ok(())
    }
}

/// Per-area placement weights; unlisted areas get nothing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(transparent)]
pub struct RegionalWeights<T>(pub BTreeMap<String, T>);

impl<T: Scalar> RegionalWeights<T> {
    pub fn load_share(model: &GridModel<T>) -> Self {
        Self(
            model
                .areas
                .iter()
                .map(|a| (a.id.clone(), a.load_mw))
                .collect(),
        )
    }

    /// Weights aligned with `model.areas`, summing to one.
    pub fn normalized(&self, model: &GridModel<T>) -> Result<Vec<T>, ScenarioError> {
        let mut out = vec![T::zero(); model.areas.len()];
        for (id, &w) in &self.0 {
            let i = model
                .area_index(id)
                .ok_or_else(|| ScenarioError::UnknownArea(id.clone()))?;
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(ScenarioError::InvalidTargets(format!(
                    "weight for '{id}' must be >= 0"
                )));
            }
            out[i] = w;
        }
        let sum = out.iter().fold(T::zero(), |s, &w| s + w);
        if !(sum > T::zero()) {
            return Err(ScenarioError::InvalidTargets("weights sum to zero".into()));
        }
        Ok(out.into_iter().map(|w| w / sum).collect())
    }
}

fn yes() -> bool {
    true
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec<T> {
    pub id: String,
    pub pv: T,
    pub wtg: T,
    /// Defaults to load share.
    #[serde(default)]
    pub pv_weights: Option<RegionalWeights<T>>,
    /// Defaults to load share.
    #[serde(default)]
    pub wtg_weights: Option<RegionalWeights<T>>,
    /// Shrink governor headroom together with synchronous output.
    #[serde(default = "yes")]
    pub scale_headroom: bool,
}

impl<T: Scalar> ScenarioSpec<T> {
    pub fn targets(&self) -> PenetrationTargets<T> {
        PenetrationTargets {
            pv: self.pv,
            wtg: self.wtg,
        }
    }

    pub fn apply(&self, base: &GridModel<T>) -> Result<GridModel<T>, ScenarioError> {
        build(
            base,
            self.targets(),
            self.pv_weights.as_ref(),
            self.wtg_weights.as_ref(),
            self.scale_headroom,
        )
    }
}

/// Parses a scenario document.
pub fn load_scenario<T: Scalar>(text: &str) -> Result<ScenarioSpec<T>, ScenarioError> {
    let spec: ScenarioSpec<T> = parse_config(text)?;
    spec.targets().check()?;
    Ok(spec)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid targets: {0}")]
    InvalidTargets(String),
    #[error("unknown area '{0}' in weights")]
    UnknownArea(String),
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("base model invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidBase(Vec<Violation>),
    #[error("zero committed generation")]
    ZeroCommitted,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Penetration<T> {
    pub pv: T,
    pub wtg: T,
    pub total: T,
}

/// Shares of committed output by converter kind.
pub fn penetration_of<T: Scalar>(model: &GridModel<T>) -> Result<Penetration<T>, ScenarioError> {
    let total = model.total_committed();
    if !(total > T::zero()) {
        return Err(ScenarioError::ZeroCommitted);
    }
    let pv = model.committed_of(FleetKind::Pv) / total;
    let wtg = model.committed_of(FleetKind::Wtg) / total;
    Ok(Penetration {
        pv,
        wtg,
        total: pv + wtg,
    })
}

/// Builds the penetration scenario of `base`: every synchronous fleet is
/// scaled by the same factor (output, online capacity and, by default,
/// headroom), the freed output is placed as PV per `pv_weights` and wind
/// per `wtg_weights` (load share if absent), and tie schedules are shifted
/// so each area stays balanced.
pub fn build_scenario<T: Scalar>(
    base: &GridModel<T>,
    targets: PenetrationTargets<T>,
    pv_weights: &RegionalWeights<T>,
    wtg_weights: Option<&RegionalWeights<T>>,
) -> Result<GridModel<T>, ScenarioError> {
    build(base, targets, Some(pv_weights), wtg_weights, true)
}

fn build<T: Scalar>(
    base: &GridModel<T>,
    targets: PenetrationTargets<T>,
    pv_weights: Option<&RegionalWeights<T>>,
    wtg_weights: Option<&RegionalWeights<T>>,
    scale_headroom: bool,
) -> Result<GridModel<T>, ScenarioError> {
    targets.check()?;
    let violations = validate(base);
    if !violations.is_empty() {
        return Err(ScenarioError::InvalidBase(violations));
    }
    let total = base.total_committed();
    if !(total > T::zero()) {
        return Err(ScenarioError::ZeroCommitted);
    }
    let load_share = RegionalWeights::load_share(base);
    let pv_w = pv_weights.unwrap_or(&load_share).normalized(base)?;
    let wtg_w = wtg_weights.unwrap_or(&load_share).normalized(base)?;

    let mut model = base.clone();
    let sync_now = base.committed_of(FleetKind::Synchronous);
    let sync_target = (T::one() - targets.pv - targets.wtg) * total;
    if !(sync_now > T::zero()) {
        return Err(ScenarioError::Infeasible(
            "base has no synchronous output to displace".into(),
        ));
    }
    let factor = sync_target / sync_now;
    for fleet in model.areas.iter_mut().flat_map(|a| a.fleets.iter_mut()) {
        if fleet.kind != FleetKind::Synchronous || factor == T::one() {
            continue;
        }
        fleet.committed_mw = fleet.committed_mw * factor;
        fleet.rated_mw = fleet.rated_mw * factor;
        if scale_headroom {
            if let Some(g) = fleet.governor.as_mut() {
                g.headroom_mw = g.headroom_mw * factor;
            }
        }
    }

    place(&mut model, FleetKind::Pv, targets.pv * total, &pv_w)?;
    place(&mut model, FleetKind::Wtg, targets.wtg * total, &wtg_w)?;

    let delta: Vec<T> = model
        .areas
        .iter()
        .zip(&base.areas)
        .map(|(new, old)| new.committed() - old.committed())
        .collect();
    if delta.iter().any(|&d| d != T::zero()) {
        redispatch_ties(&mut model, &delta, total)?;
    }

    let violations = validate(&model);
    if !violations.is_empty() {
        return Err(ScenarioError::Infeasible(
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    Ok(model)
}

/// Brings the committed output of `kind` to `target` MW.
fn place<T: Scalar>(
    model: &mut GridModel<T>,
    kind: FleetKind,
    target: T,
    weights: &[T],
) -> Result<(), ScenarioError> {
    let existing = model.committed_of(kind);
    let add = target - existing;
    if add == T::zero() {
        return Ok(());
    }
    if add < T::zero() {
        let factor = target / existing;
        for fleet in model.areas.iter_mut().flat_map(|a| a.fleets.iter_mut()) {
            if fleet.kind == kind {
                fleet.committed_mw = fleet.committed_mw * factor;
                fleet.rated_mw = fleet.rated_mw * factor;
            }
        }
        return Ok(());
    }
    for (area, &w) in model.areas.iter_mut().zip(weights) {
        let mw = add * w;
        if !(mw > T::zero()) {
            continue;
        }
        let id = format!("{}-{}", area.id, kind);
        match area.fleets.iter_mut().find(|f| f.id == id) {
            Some(f) if f.kind == kind => {
                f.committed_mw = f.committed_mw + mw;
                f.rated_mw = f.rated_mw + mw;
            }
            Some(_) => {
                return Err(ScenarioError::Infeasible(format!(
                    "fleet id '{id}' already used by another kind"
                )));
            }
            None => area.fleets.push(GeneratorFleet {
                id,
                kind,
                rated_mw: mw,
                committed_mw: mw,
                h: T::zero(),
                governor: None,
                converter: None,
            }),
        }
    }
    Ok(())
}

/// Shifts tie schedules so that area `a` exports `delta[a]` more, splitting
/// the change over parallel paths in proportion to tie stiffness.
fn redispatch_ties<T: Scalar>(
    model: &mut GridModel<T>,
    delta: &[T],
    scale: T,
) -> Result<(), ScenarioError> {
    let n = model.areas.len();
    let idx: Vec<(usize, usize)> = model
        .tie_lines
        .iter()
        .map(|t| {
            (
                model.area_index(&t.from).expect("validated"),
                model.area_index(&t.to).expect("validated"),
            )
        })
        .collect();

    let mut component = vec![usize::MAX; n];
    for root in 0..n {
        if component[root] != usize::MAX {
            continue;
        }
        component[root] = root;
        let mut stack = vec![root];
        while let Some(a) = stack.pop() {
            for &(i, j) in &idx {
                let other = if i == a {
                    j
                } else if j == a {
                    i
                } else {
                    continue;
                };
                if component[other] == usize::MAX {
                    component[other] = root;
                    stack.push(other);
                }
            }
        }
    }

    let tol = scale.as_f64() * 1e-9;
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for (tie, &(i, j)) in model.tie_lines.iter().zip(&idx) {
        let k = tie.k_sync.as_f64();
        lap[(i, i)] += k;
        lap[(j, j)] += k;
        lap[(i, j)] -= k;
        lap[(j, i)] -= k;
    }
    let mut rhs = DVector::<f64>::from_iterator(n, delta.iter().map(|d| d.as_f64()));
    for root in 0..n {
        if component[root] != root {
            continue;
        }
        let net: f64 = (0..n)
            .filter(|&a| component[a] == root)
            .map(|a| rhs[a])
            .sum();
        if net.abs() > tol {
            let members: Vec<&str> = (0..n)
                .filter(|&a| component[a] == root)
                .map(|a| model.areas[a].id.as_str())
                .collect();
            return Err(ScenarioError::Infeasible(format!(
                "areas [{}] are not tied to the rest of the system and cannot absorb a {net:.3} MW change",
                members.join(", ")
            )));
        }
        lap.row_mut(root).fill(0.0);
        lap[(root, root)] = 1.0;
        rhs[root] = 0.0;
    }
    let angle = lap
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ScenarioError::Infeasible("tie network is singular".into()))?;

    for (tie, &(i, j)) in model.tie_lines.iter_mut().zip(&idx) {
        let shift = tie.k_sync.as_f64() * (angle[i] - angle[j]);
        tie.scheduled_mw = tie.scheduled_mw + T::lit(shift);
        if let Some(limit) = tie.limit_mw {
            if tie.scheduled_mw.abs() > limit {
                return Err(ScenarioError::Infeasible(format!(
                    "tie {}-{} schedule {:.1} MW exceeds its {} MW limit",
                    tie.from,
                    tie.to,
                    tie.scheduled_mw.as_f64(),
                    limit
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FlatRun<T> {
    pub max_abs_dev_pu: T,
    pub pass: bool,
}

/// Runs `duration_s` with no contingency and checks that no area drifts by
/// 1e-5 pu or more from its starting frequency.
pub fn flat_run_check<T: Scalar>(
    model: &GridModel<T>,
    duration_s: T,
) -> Result<FlatRun<T>, SimError> {
    let area = model
        .areas
        .first()
        .map(|a| a.id.clone())
        .unwrap_or_default();
    let cfg = SimConfig {
        horizon_s: duration_s,
        output_dt: T::lit(0.1).min(duration_s),
        ..SimConfig::default()
    };
    let none = Contingency::new(area, T::zero(), T::zero());
    let result = simulate_unbalanced(model, &none, &ProtectionScheme::none(), &cfg)?;
    let dev = result.diagnostics.max_abs_deviation_hz / model.f0;
    Ok(FlatRun {
        max_abs_dev_pu: dev,
        pass: dev < T::lit(FLAT_RUN_TOLERANCE_PU),
    })
}
