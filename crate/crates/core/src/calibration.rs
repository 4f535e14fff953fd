//! Fits inertia scale, governor participation and deadband to one or more
//! measured event traces.
//!
//! The search is derivative-free: a full 5-point grid per knob over the
//! bounds, then two coordinate-refinement rounds around the best point with
//! the spacing shrunk eightfold each round. Candidate batches run in
//! parallel; selection is sequential, with ties going to the candidate
//! nearest the starting knobs.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{simulate, Channel, Contingency, SimConfig, SimError};
use crate::grid::{FleetKind, GridModel};
use crate::metrics::{
    mismatch_report, mismatch_table, FrequencyTrace, MetricsError, MetricsReport, Mismatch,
};
use crate::num::Scalar;
use crate::protection::ProtectionScheme;

pub const NADIR_SCALE_HZ: f64 = 0.1;
pub const ROCOF_SCALE_MHZ_S: f64 = 10.0;
pub const SETTLING_SCALE_HZ: f64 = 0.1;
pub const RMSE_SCALE_HZ: f64 = 0.01;

const GRID_POINTS: usize = 5;
const REFINE_ROUNDS: usize = 2;
const SHRINK: f64 = 8.0;
const MAX_PASSES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CalibrationKnobs<T> {
    /// Multiplier on every synchronous inertia constant.
    pub inertia_scale: T,
    /// Governor participation applied to every governor.
    pub governor_fraction: T,
    /// Deadband applied to every governor, Hz.
    pub deadband_hz: T,
}

impl<T: Scalar> CalibrationKnobs<T> {
    /// Knobs that reproduce `model` as given: unit scale and the
    /// rating-weighted governor settings.
    pub fn from_model(model: &GridModel<T>) -> Self {
        let (mut w, mut kg, mut db) = (T::zero(), T::zero(), T::zero());
        for f in model.fleets().filter(|f| f.kind == FleetKind::Synchronous) {
            if let Some(g) = &f.governor {
                w = w + f.rated_mw;
                kg = kg + f.rated_mw * g.responsive_fraction;
                db = db + f.rated_mw * g.deadband_hz;
            }
        }
        let (kg, db) = if w > T::zero() {
            (kg / w, db / w)
        } else {
            (T::one(), T::lit(0.036))
        };
        Self {
            inertia_scale: T::one(),
            governor_fraction: kg,
            deadband_hz: db,
        }
    }

    fn get(&self, k: usize) -> T {
        [self.inertia_scale, self.governor_fraction, self.deadband_hz][k]
    }

    fn with(mut self, k: usize, v: T) -> Self {
        match k {
            0 => self.inertia_scale = v,
            1 => self.governor_fraction = v,
            _ => self.deadband_hz = v,
        }
        self
    }

    fn key(&self) -> [u64; 3] {
        [0, 1, 2].map(|k| self.get(k).as_f64().to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KnobBounds<T> {
    pub inertia_scale: (T, T),
    pub governor_fraction: (T, T),
    pub deadband_hz: (T, T),
}

impl<T: Scalar> Default for KnobBounds<T> {
    fn default() -> Self {
        Self {
            inertia_scale: (T::lit(0.5), T::lit(1.5)),
            governor_fraction: (T::lit(0.1), T::one()),
            deadband_hz: (T::zero(), T::lit(0.06)),
        }
    }
}

impl<T: Scalar> KnobBounds<T> {
    fn get(&self, k: usize) -> (T, T) {
        [self.inertia_scale, self.governor_fraction, self.deadband_hz][k]
    }

    pub fn check(&self) -> Result<(), CalibrationError> {
        let names = ["inertia_scale", "governor_fraction", "deadband_hz"];
        let limits = [(0.2, 5.0), (0.0, 1.0), (0.0, f64::INFINITY)];
        for k in 0..3 {
            let (lo, hi) = self.get(k);
            let (min, max) = limits[k];
            if !(lo <= hi && lo.as_f64() >= min && hi.as_f64() <= max) {
                return Err(CalibrationError::InvalidBounds(format!(
                    "{} bounds [{lo}, {hi}] must be ordered and within [{min}, {max}]",
                    names[k]
                )));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, knobs: CalibrationKnobs<T>) -> CalibrationKnobs<T> {
        let mut out = knobs;
        for k in 0..3 {
            let (lo, hi) = self.get(k);
            out = out.with(k, knobs.get(k).clamp_to(lo, hi));
        }
        out
    }

    pub fn contains(&self, knobs: &CalibrationKnobs<T>) -> bool {
        (0..3).all(|k| {
            let (lo, hi) = self.get(k);
            knobs.get(k) >= lo && knobs.get(k) <= hi
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// Weighted squared errors of nadir, ROCOF and settling frequency.
    #[default]
    Metrics,
    /// Squared RMS difference between the simulated and measured traces.
    TraceRmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ObjectiveWeights<T> {
    pub nadir: T,
    pub rocof: T,
    pub settling: T,
    #[serde(default)]
    pub mode: ObjectiveMode,
}

impl<T: Scalar> Default for ObjectiveWeights<T> {
    fn default() -> Self {
        Self {
            nadir: T::one(),
            rocof: T::one(),
            settling: T::one(),
            mode: ObjectiveMode::Metrics,
        }
    }
}

impl<T: Scalar> ObjectiveWeights<T> {
    pub fn check(&self) -> Result<(), CalibrationError> {
        let w = [self.nadir, self.rocof, self.settling];
        if w.iter().any(|&x| !(x >= T::zero())) || w.iter().all(|&x| x == T::zero()) {
            return Err(CalibrationError::InvalidWeights);
        }
        Ok(())
    }
}

/// Weighted sum of squared, normalized metric errors.
pub fn objective<T: Scalar>(
    sim: &MetricsReport<T>,
    meas: &MetricsReport<T>,
    w: &ObjectiveWeights<T>,
) -> T {
    let e = mismatch_report(sim, meas);
    let sq = |x: T| x * x;
    w.nadir * sq(e.nadir_hz / T::lit(NADIR_SCALE_HZ))
        + w.rocof * sq(e.rocof_mhz_per_s / T::lit(ROCOF_SCALE_MHZ_S))
        + w.settling * sq(e.settling_hz / T::lit(SETTLING_SCALE_HZ))
}

/// Squared normalized RMS difference, sampled at the measured instants.
pub fn trace_objective<T: Scalar>(sim: &FrequencyTrace<T>, meas: &FrequencyTrace<T>) -> T {
    let (mut sum, mut n) = (T::zero(), 0usize);
    let last = sim.samples.len() - 1;
    for (k, &m) in meas.samples.iter().enumerate() {
        let x = (meas.time(k) - sim.t_start) / sim.dt;
        if x < T::zero() || x > T::from_count(last) {
            continue;
        }
        let i = x.floor().to_usize().unwrap_or(0).min(last);
        let frac = x - T::from_count(i);
        let v = if i == last {
            sim.samples[last]
        } else {
            sim.samples[i] + frac * (sim.samples[i + 1] - sim.samples[i])
        };
        sum = sum + (v - m) * (v - m);
        n += 1;
    }
    if n == 0 {
        return T::infinity();
    }
    sum / T::from_count(n) / T::lit(RMSE_SCALE_HZ * RMSE_SCALE_HZ)
}

/// `base` with the knobs applied to every synchronous fleet.
pub fn apply_knobs<T: Scalar>(base: &GridModel<T>, knobs: &CalibrationKnobs<T>) -> GridModel<T> {
    let mut model = base.clone();
    for f in model.areas.iter_mut().flat_map(|a| a.fleets.iter_mut()) {
        if f.kind != FleetKind::Synchronous {
            continue;
        }
        f.h = f.h * knobs.inertia_scale;
        if let Some(g) = f.governor.as_mut() {
            g.responsive_fraction = knobs.governor_fraction;
            g.deadband_hz = knobs.deadband_hz;
        }
    }
    model
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("objective weights must be >= 0 and not all zero")]
    InvalidWeights,
    #[error("no measured events to fit")]
    NoEvents,
    #[error("measured trace: {0}")]
    Measured(MetricsError),
    #[error("simulated trace: {0}")]
    Simulated(MetricsError),
    #[error(transparent)]
    Simulation(SimError),
    #[error("simulation diverged at every knob point")]
    AllDivergent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HistoryEntry<T> {
    pub phase: String,
    pub knobs: CalibrationKnobs<T>,
    pub objective: T,
}

/// Fit to one measured event at the returned knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EventFit<T> {
    pub contingency: String,
    pub simulated: MetricsReport<T>,
    pub measured: MetricsReport<T>,
    pub mismatch: Mismatch<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CalibrationResult<T> {
    pub knobs: CalibrationKnobs<T>,
    pub objective: T,
    pub initial_objective: T,
    /// One entry per observed event, in problem order.
    pub fits: Vec<EventFit<T>>,
    pub history: Vec<HistoryEntry<T>>,
    pub evaluations: usize,
}

impl<T: Scalar> CalibrationResult<T> {
    /// Measurement / simulated / error table for the three metrics, one
    /// block per event.
    pub fn report_table(&self, label: &str) -> String {
        self.fits
            .iter()
            .map(|f| {
                let l = if self.fits.len() > 1 {
                    format!("{label} ({})", f.contingency)
                } else {
                    label.to_string()
                };
                mismatch_table(&l, &f.simulated, &f.measured)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Largest absolute error of each metric over all events.
    pub fn worst_mismatch(&self) -> Mismatch<T> {
        let mut w = Mismatch {
            nadir_hz: T::zero(),
            rocof_mhz_per_s: T::zero(),
            settling_hz: T::zero(),
        };
        for f in &self.fits {
            w.nadir_hz = w.nadir_hz.max(f.mismatch.nadir_hz.abs());
            w.rocof_mhz_per_s = w.rocof_mhz_per_s.max(f.mismatch.rocof_mhz_per_s.abs());
            w.settling_hz = w.settling_hz.max(f.mismatch.settling_hz.abs());
        }
        w
    }
}

/// A measured event the model is fitted to.
#[derive(Debug, Clone)]
pub struct Observation<'a, T> {
    pub measured: &'a FrequencyTrace<T>,
    pub contingency: &'a Contingency<T>,
    pub cfg: SimConfig<T>,
    /// Multiplier on this event's share of the objective.
    pub weight: T,
}

impl<'a, T: Scalar> Observation<'a, T> {
    /// Unit weight and a horizon covering the metric windows.
    pub fn new(measured: &'a FrequencyTrace<T>, contingency: &'a Contingency<T>) -> Self {
        Self {
            measured,
            contingency,
            cfg: SimConfig::covering(contingency),
            weight: T::one(),
        }
    }
}

/// Everything one calibration needs besides the knobs.
#[derive(Debug, Clone)]
pub struct CalibrationProblem<'a, T> {
    pub base: &'a GridModel<T>,
    pub events: Vec<Observation<'a, T>>,
    pub protection: ProtectionScheme<T>,
    pub bounds: KnobBounds<T>,
    pub weights: ObjectiveWeights<T>,
}

impl<'a, T: Scalar> CalibrationProblem<'a, T> {
    /// Single-event problem with default protection (none) and weights.
    pub fn new(
        base: &'a GridModel<T>,
        measured: &'a FrequencyTrace<T>,
        contingency: &'a Contingency<T>,
        bounds: KnobBounds<T>,
    ) -> Self {
        Self {
            base,
            events: vec![Observation::new(measured, contingency)],
            protection: ProtectionScheme::none(),
            bounds,
            weights: ObjectiveWeights::default(),
        }
    }

    /// Adds another measured event; the objective is the weighted sum over
    /// events.
    pub fn add_event(
        &mut self,
        measured: &'a FrequencyTrace<T>,
        contingency: &'a Contingency<T>,
        weight: T,
    ) {
        let mut o = Observation::new(measured, contingency);
        o.weight = weight;
        self.events.push(o);
    }

    /// Simulated COI trace and metrics of event `e` at `knobs`.
    pub fn simulate_at(
        &self,
        knobs: &CalibrationKnobs<T>,
        e: usize,
    ) -> Result<(FrequencyTrace<T>, MetricsReport<T>), CalibrationError> {
        let ev = &self.events[e];
        let model = apply_knobs(self.base, knobs);
        let result = simulate(&model, ev.contingency, &self.protection, &ev.cfg)
            .map_err(CalibrationError::Simulation)?;
        let trace = FrequencyTrace::from_result(&result, Channel::Coi)
            .map_err(CalibrationError::Simulated)?;
        let report =
            MetricsReport::from_trace(&trace, None).map_err(CalibrationError::Simulated)?;
        Ok((trace, report))
    }
}

struct Search<'p, 'a, T> {
    problem: &'p CalibrationProblem<'a, T>,
    measured: Vec<MetricsReport<T>>,
    start: CalibrationKnobs<T>,
    cache: HashMap<[u64; 3], T>,
}

impl<'p, 'a, T: Scalar> Search<'p, 'a, T> {
    fn score(&self, knobs: &CalibrationKnobs<T>) -> Result<T, CalibrationError> {
        let mut total = T::zero();
        for (e, ev) in self.problem.events.iter().enumerate() {
            let part = match self.problem.simulate_at(knobs, e) {
                Ok((trace, report)) => match self.problem.weights.mode {
                    ObjectiveMode::Metrics => {
                        objective(&report, &self.measured[e], &self.problem.weights)
                    }
                    ObjectiveMode::TraceRmse => trace_objective(&trace, ev.measured),
                },
                Err(CalibrationError::Simulation(SimError::Divergence { .. })) => {
                    return Ok(T::infinity())
                }
                Err(err) => return Err(err),
            };
            total = total + ev.weight * part;
        }
        Ok(total)
    }

    fn evaluate(&mut self, batch: &[CalibrationKnobs<T>]) -> Result<Vec<T>, CalibrationError> {
        let mut todo: Vec<CalibrationKnobs<T>> = Vec::new();
        for k in batch {
            if !self.cache.contains_key(&k.key()) && !todo.iter().any(|t| t.key() == k.key()) {
                todo.push(*k);
            }
        }
        let scored: Vec<Result<T, CalibrationError>> =
            todo.par_iter().map(|k| self.score(k)).collect();
        for (k, s) in todo.iter().zip(scored) {
            self.cache.insert(k.key(), s?);
        }
        Ok(batch.iter().map(|k| self.cache[&k.key()]).collect())
    }

    /// Normalized distance from the starting knobs, for tie-breaking.
    fn distance(&self, k: &CalibrationKnobs<T>) -> T {
        (0..3).fold(T::zero(), |s, i| {
            let (lo, hi) = self.problem.bounds.get(i);
            let span = if hi > lo { hi - lo } else { T::one() };
            let d = (k.get(i) - self.start.get(i)) / span;
            s + d * d
        })
    }

    fn better(&self, a: (T, &CalibrationKnobs<T>), b: (T, &CalibrationKnobs<T>)) -> bool {
        a.0 < b.0 || (a.0 == b.0 && self.distance(a.1) < self.distance(b.1))
    }

    fn pick(
        &mut self,
        batch: &[CalibrationKnobs<T>],
    ) -> Result<(CalibrationKnobs<T>, T), CalibrationError> {
        let scores = self.evaluate(batch)?;
        let mut best = 0;
        for i in 1..batch.len() {
            if self.better((scores[i], &batch[i]), (scores[best], &batch[best])) {
                best = i;
            }
        }
        Ok((batch[best], scores[best]))
    }
}

fn axis<T: Scalar>(center: T, spacing: T, (lo, hi): (T, T)) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(GRID_POINTS);
    let half = (GRID_POINTS / 2) as isize;
    for j in -half..=half {
        let v = (center + T::lit(j as f64) * spacing).clamp_to(lo, hi);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Calibrates from the knobs implied by the base model.
pub fn calibrate<T: Scalar>(
    problem: &CalibrationProblem<'_, T>,
) -> Result<CalibrationResult<T>, CalibrationError> {
    let start = problem
        .bounds
        .clamp(CalibrationKnobs::from_model(problem.base));
    calibrate_from(problem, start)
}

/// Calibrates, reporting the objective at `start` as the initial value.
/// Never returns knobs worse than `start`.
pub fn calibrate_from<T: Scalar>(
    problem: &CalibrationProblem<'_, T>,
    start: CalibrationKnobs<T>,
) -> Result<CalibrationResult<T>, CalibrationError> {
    problem.bounds.check()?;
    problem.weights.check()?;
    let start = problem.bounds.clamp(start);
    if problem.events.is_empty() {
        return Err(CalibrationError::NoEvents);
    }
    if problem.events.iter().any(|e| !(e.weight >= T::zero()))
        || problem.events.iter().all(|e| e.weight == T::zero())
    {
        return Err(CalibrationError::InvalidWeights);
    }
    let measured = problem
        .events
        .iter()
        .map(|e| MetricsReport::from_trace(e.measured, None))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CalibrationError::Measured)?;
    let mut search = Search {
        problem,
        measured,
        start,
        cache: HashMap::new(),
    };
    let mut history = Vec::new();
    let initial_objective = search.evaluate(&[start])?[0];
    history.push(HistoryEntry {
        phase: "start".into(),
        knobs: start,
        objective: initial_objective,
    });

    let mut spacing: [T; 3] = [0, 1, 2].map(|k| {
        let (lo, hi) = problem.bounds.get(k);
        (hi - lo) / T::from_count(GRID_POINTS - 1)
    });
    let axes: Vec<Vec<T>> = (0..3)
        .map(|k| {
            let (lo, hi) = problem.bounds.get(k);
            axis((lo + hi) / T::lit(2.0), spacing[k], (lo, hi))
        })
        .collect();
    let mut grid = Vec::new();
    for &a in &axes[0] {
        for &b in &axes[1] {
            for &c in &axes[2] {
                grid.push(CalibrationKnobs {
                    inertia_scale: a,
                    governor_fraction: b,
                    deadband_hz: c,
                });
            }
        }
    }
    let (mut best, mut best_obj) = search.pick(&grid)?;
    history.push(HistoryEntry {
        phase: "grid".into(),
        knobs: best,
        objective: best_obj,
    });

    for round in 1..=REFINE_ROUNDS {
        for s in spacing.iter_mut() {
            *s = *s / T::lit(SHRINK);
        }
        for _ in 0..MAX_PASSES {
            let before = best;
            for k in 0..3 {
                let cands: Vec<CalibrationKnobs<T>> =
                    axis(best.get(k), spacing[k], problem.bounds.get(k))
                        .into_iter()
                        .map(|v| best.with(k, v))
                        .collect();
                let (b, o) = search.pick(&cands)?;
                if b.key() != best.key() {
                    best = b;
                    best_obj = o;
                    history.push(HistoryEntry {
                        phase: format!("refine-{round}"),
                        knobs: best,
                        objective: best_obj,
                    });
                }
            }
            if before.key() == best.key() {
                break;
            }
        }
    }

    if !best_obj.is_finite() {
        return Err(CalibrationError::AllDivergent);
    }
    if initial_objective < best_obj {
        best = start;
        best_obj = initial_objective;
    }
    let mut fits = Vec::with_capacity(problem.events.len());
    for (e, ev) in problem.events.iter().enumerate() {
        let (_, simulated) = problem.simulate_at(&best, e)?;
        fits.push(EventFit {
            contingency: ev.contingency.id.clone(),
            mismatch: mismatch_report(&simulated, &search.measured[e]),
            simulated,
            measured: search.measured[e],
        });
    }
    Ok(CalibrationResult {
        knobs: best,
        objective: best_obj,
        initial_objective,
        fits,
        history,
        evaluations: search.cache.len(),
    })
}
