//! Fixed-step multi-area frequency dynamics.
//!
//! Each area is an aggregated swing equation in MW,
//!
//! ```text
//! (2·KE_a/f0)·dΔf_a/dt = ΔP_mech + ΔP_conv + P_ffr + P_shed − P_loss − D_a·L_a·Δf_a/f0 − ΔP_tie,a + P_imb,a
//! ```
//!
//! coupled through tie-lines `P_ij = K·(δ_i − δ_j)`, `dδ_a/dt = 2π·Δf_a`.
//! Governors are a two-lag droop loop on the fleet rating base:
//! `dv/dt = (−Kg·db(Δf)/(R·f0) − v)/Tg`, `dpm/dt = (v − pm)/Tt`, with `pm`
//! held inside `[−committed, headroom]` by an anti-windup clamp.
//! Integration is classical RK4; relays switch only at step boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{
    validate, ConverterControl, DeadbandKind, FleetKind, GridModel, Rule, Violation,
};
use crate::num::Scalar;
use crate::protection::{
    ffr_step, ufls_step, FfrResource, ProtectionScheme, RelayState, UflsScheme,
};

/// Above this the run is flagged for possible over-frequency generator tripping.
pub const OVER_FREQUENCY_HZ: f64 = 60.5;

fn default_t_event<T: Scalar>() -> T {
    T::lit(16.0)
}

/// Generation loss (positive) or gain (negative) in one area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct Contingency<T> {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub id: String,
    pub area: String,
    pub delta_p_mw: T,
    /// Event time, s. The default leaves room for a 16 s pre-event window.
    #[serde(default = "default_t_event")]
    pub t_event: T,
}

impl<T: Scalar> Contingency<T> {
    pub fn new(area: impl Into<String>, delta_p_mw: T, t_event: T) -> Self {
        Self {
            id: String::new(),
            area: area.into(),
            delta_p_mw,
            t_event,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SimConfig<T> {
    pub dt: T,
    pub horizon_s: T,
    pub output_dt: T,
}

impl<T: Scalar> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(0.005),
            horizon_s: T::lit(60.0),
            output_dt: T::lit(0.1),
        }
    }
}

impl<T: Scalar> SimConfig<T> {
    /// Default settings with the horizon stretched to cover the 52 s
    /// post-event window used by the settling-frequency metrics.
    pub fn covering(contingency: &Contingency<T>) -> Self {
        let mut cfg = Self::default();
        cfg.horizon_s = cfg.horizon_s.max(contingency.t_event + T::lit(52.0));
        cfg
    }

    fn check(&self) -> Result<(usize, usize), SimError> {
        if !(self.dt > T::zero() && self.dt <= self.output_dt && self.output_dt <= self.horizon_s) {
            return Err(SimError::Config(format!(
                "need 0 < dt ({}) <= output_dt ({}) <= horizon ({})",
                self.dt, self.output_dt, self.horizon_s
            )));
        }
        let ratio = (self.output_dt / self.dt).round();
        if ((ratio * self.dt - self.output_dt).abs()) > self.dt * T::lit(1e-6) {
            return Err(SimError::Config(format!(
                "output_dt {} is not a multiple of dt {}",
                self.output_dt, self.dt
            )));
        }
        let ratio = ratio.to_usize().unwrap_or(1).max(1);
        let steps = (self.horizon_s / self.dt + T::lit(1e-6))
            .floor()
            .to_usize()
            .unwrap_or(0);
        Ok((ratio, steps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelayClass {
    Ufls,
    Ffr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelayAction {
    Shed,
    Release,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RelayEvent<T> {
    pub t: T,
    pub area: String,
    pub relay: String,
    pub class: RelayClass,
    pub action: RelayAction,
    /// Load removed (positive) or restored (negative), MW.
    pub mw: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Diagnostics<T> {
    pub diverged: bool,
    /// Some area exceeded 60.5 Hz.
    pub over_frequency: bool,
    pub max_frequency_hz: T,
    pub min_frequency_hz: T,
    /// Largest |f − f_initial| over every integration step, Hz.
    pub max_abs_deviation_hz: T,
}

/// Output of one run. Per-area series are indexed `[area][sample]` on the
/// shared uniform grid `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult<T> {
    pub area_ids: Vec<String>,
    pub time: Vec<T>,
    pub frequency: Vec<Vec<T>>,
    /// Governor output change, MW.
    pub mech_mw: Vec<Vec<T>>,
    /// Converter (droop + synthetic inertia) output change, MW.
    pub conv_mw: Vec<Vec<T>>,
    /// Cumulative FFR load reduction, MW.
    pub ffr_mw: Vec<Vec<T>>,
    /// Cumulative UFLS load shed, MW.
    pub ufls_mw: Vec<Vec<T>>,
    pub events: Vec<RelayEvent<T>>,
    pub diagnostics: Diagnostics<T>,
    /// Per-area 2·KE/f0, MW·s/Hz; weights of the centre-of-inertia frequency.
    pub inertia_weights: Vec<T>,
    pub system_load_mw: T,
    pub t_event: T,
    pub output_dt: T,
    pub f0: T,
    pub initial_frequency: T,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("model invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidModel(Vec<Violation>),
    #[error("unknown area '{0}'")]
    UnknownArea(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contingency of {delta_mw} MW exceeds committed generation {committed_mw} MW in area '{area}'")]
    ContingencyTooLarge {
        area: String,
        delta_mw: f64,
        committed_mw: f64,
    },
    #[error("numerical divergence after t = {last_valid_t} s")]
    Divergence { last_valid_t: f64 },
    #[error("zero-inertia system")]
    ZeroInertia,
    #[error("no governor response and no load damping: steady state undefined")]
    ZeroDenominator,
}

/// Deadband applied to a frequency deviation in Hz.
pub fn apply_deadband<T: Scalar>(df: T, db: T, kind: DeadbandKind) -> T {
    if df.abs() <= db {
        return T::zero();
    }
    match kind {
        DeadbandKind::Step => df,
        DeadbandKind::Offset => df.signum() * (df.abs() - db),
    }
}

/// Inertial boost of a converter fleet, MW. Only acts on falling frequency.
pub fn synthetic_inertia_power<T: Scalar>(
    filtered_dfdt: T,
    conv: &ConverterControl<T>,
    rated_mw: T,
) -> T {
    let cap = (conv.si_boost_limit * rated_mw)
        .min(conv.headroom_mw)
        .max(T::zero());
    (-conv.synthetic_inertia_gain * filtered_dfdt).clamp_to(T::zero(), cap)
}

/// Linearised steady-state deviation for a loss of `delta_p_mw`, Hz,
/// ignoring deadbands and limits.
pub fn steady_state_frequency<T: Scalar>(
    model: &GridModel<T>,
    delta_p_mw: T,
) -> Result<T, SimError> {
    let mut beta = T::zero(); // MW per pu frequency
    for fleet in model.fleets() {
        if let Some(g) = &fleet.governor {
            beta = beta + g.responsive_fraction * fleet.rated_mw / g.droop;
        }
        if let Some(r) = fleet.converter.as_ref().and_then(|c| c.droop) {
            beta = beta + fleet.rated_mw / r;
        }
    }
    for area in &model.areas {
        beta = beta + area.damping * area.load_mw;
    }
    if beta <= T::zero() {
        return Err(SimError::ZeroDenominator);
    }
    Ok(-delta_p_mw / beta * model.f0)
}

/// Rate of change of frequency immediately after losing `delta_p_mw`, Hz/s.
pub fn initial_rocof<T: Scalar>(model: &GridModel<T>, delta_p_mw: T) -> Result<T, SimError> {
    let ke = crate::grid::system_inertia(model)
        .map_err(|_| SimError::ZeroInertia)?
        .kinetic_mws;
    Ok(-delta_p_mw * model.f0 / (T::lit(2.0) * ke))
}

struct AreaPlant<T> {
    id: String,
    m: T,
    damping: T,
    imbalance: T,
    load: T,
    ufls: Option<UflsScheme<T>>,
    ffr: Vec<FfrResource<T>>,
}

struct GovPlant<T> {
    area: usize,
    rated: T,
    gain: T,
    db: T,
    kind: DeadbandKind,
    offset_hz: T,
    tg: T,
    tt: T,
    lo: T,
    hi: T,
}

struct ConvPlant<T> {
    area: usize,
    control: ConverterControl<T>,
    rated: T,
    droop_mw_per_hz: T,
    lo: T,
    hi: T,
}

struct TiePlant<T> {
    from: usize,
    to: usize,
    k: T,
    damping: T,
    scheduled: T,
    limit: Option<T>,
}

/// Model compiled into flat arrays plus the state-vector layout.
struct Plant<T> {
    f0: T,
    f_init: T,
    areas: Vec<AreaPlant<T>>,
    govs: Vec<GovPlant<T>>,
    convs: Vec<ConvPlant<T>>,
    ties: Vec<TiePlant<T>>,
}

/// Offsets into the state vector.
#[derive(Clone, Copy)]
struct Layout {
    na: usize,
    ng: usize,
    nc: usize,
}

impl Layout {
    fn df(&self) -> usize {
        0
    }
    fn delta(&self) -> usize {
        self.na
    }
    fn valve(&self) -> usize {
        2 * self.na
    }
    fn mech(&self) -> usize {
        2 * self.na + self.ng
    }
    fn conv(&self) -> usize {
        2 * self.na + 2 * self.ng
    }
    fn filt(&self) -> usize {
        2 * self.na + 2 * self.ng + self.nc
    }
    fn len(&self) -> usize {
        2 * self.na + 2 * self.ng + 2 * self.nc
    }
}

/// Per-area algebraic quantities evaluated alongside the derivative.
struct Flows<T> {
    mech: Vec<T>,
    conv: Vec<T>,
    tie_out: Vec<T>,
}

impl<T: Scalar> Plant<T> {
    fn compile(
        model: &GridModel<T>,
        protection: &ProtectionScheme<T>,
        strict_balance: bool,
    ) -> Result<Self, SimError> {
        let violations: Vec<Violation> = validate(model)
            .into_iter()
            .filter(|v| strict_balance || v.rule != Rule::PowerBalance)
            .collect();
        if !violations.is_empty() {
            return Err(SimError::InvalidModel(violations));
        }
        let extra = protection.check();
        if !extra.is_empty() {
            return Err(SimError::Config(extra.join("; ")));
        }
        let f0 = model.f0;
        let f_init = model.initial_frequency;
        let imbalances = model.area_imbalances();
        let total_load = model.total_load();

        let mut areas: Vec<AreaPlant<T>> = model
            .areas
            .iter()
            .zip(imbalances)
            .map(|(a, imb)| AreaPlant {
                id: a.id.clone(),
                m: T::lit(2.0) * a.kinetic_mws() / f0,
                damping: a.damping * a.load_mw / f0,
                imbalance: imb,
                load: a.load_mw,
                ufls: a.ufls.clone().or_else(|| protection.ufls.clone()),
                ffr: a.ffr.clone(),
            })
            .collect();

        for res in &protection.ffr {
            match &res.area {
                Some(id) => {
                    let i = model
                        .area_index(id)
                        .ok_or_else(|| SimError::UnknownArea(id.clone()))?;
                    areas[i].ffr.push(res.clone());
                }
                None => {
                    for area in areas.iter_mut() {
                        if area.load <= T::zero() || total_load <= T::zero() {
                            continue;
                        }
                        let mut share = res.clone();
                        share.amount_mw = res.amount_mw * area.load / total_load;
                        share.area = Some(area.id.clone());
                        area.ffr.push(share);
                    }
                }
            }
        }

        let mut govs = Vec::new();
        let mut convs = Vec::new();
        for (ai, area) in model.areas.iter().enumerate() {
            for fleet in &area.fleets {
                if let Some(g) = &fleet.governor {
                    if fleet.kind == FleetKind::Synchronous && fleet.committed_mw > T::zero() {
                        govs.push(GovPlant {
                            area: ai,
                            rated: fleet.rated_mw,
                            gain: g.responsive_fraction / g.droop,
                            db: g.deadband_hz,
                            kind: g.deadband_kind,
                            offset_hz: apply_deadband(f_init - f0, g.deadband_hz, g.deadband_kind),
                            tg: g.tg,
                            tt: g.tt,
                            lo: -fleet.committed_mw / fleet.rated_mw,
                            hi: g.headroom_mw / fleet.rated_mw,
                        });
                    }
                }
                if let Some(c) = &fleet.converter {
                    convs.push(ConvPlant {
                        area: ai,
                        control: c.clone(),
                        rated: fleet.rated_mw,
                        droop_mw_per_hz: c
                            .droop
                            .map(|r| fleet.rated_mw / (r * f0))
                            .unwrap_or(T::zero()),
                        lo: -fleet.committed_mw,
                        hi: c.headroom_mw,
                    });
                }
            }
        }

        let ties = model
            .tie_lines
            .iter()
            .map(|t| TiePlant {
                from: model.area_index(&t.from).expect("validated"),
                to: model.area_index(&t.to).expect("validated"),
                k: t.k_sync,
                damping: t.damping_mw_per_hz,
                scheduled: t.scheduled_mw,
                limit: t.limit_mw,
            })
            .collect();

        Ok(Self {
            f0,
            f_init,
            areas,
            govs,
            convs,
            ties,
        })
    }

    fn layout(&self) -> Layout {
        Layout {
            na: self.areas.len(),
            ng: self.govs.len(),
            nc: self.convs.len(),
        }
    }

    /// Algebraic power flows for state `x`.
    fn flows(&self, lay: Layout, x: &[T], out: &mut Flows<T>) {
        for v in out
            .mech
            .iter_mut()
            .chain(out.conv.iter_mut())
            .chain(out.tie_out.iter_mut())
        {
            *v = T::zero();
        }
        for tie in &self.ties {
            let mut dev = tie.k * (x[lay.delta() + tie.from] - x[lay.delta() + tie.to])
                + tie.damping * (x[lay.df() + tie.from] - x[lay.df() + tie.to]);
            if let Some(limit) = tie.limit {
                dev = (tie.scheduled + dev).clamp_to(-limit, limit) - tie.scheduled;
            }
            out.tie_out[tie.from] = out.tie_out[tie.from] + dev;
            out.tie_out[tie.to] = out.tie_out[tie.to] - dev;
        }
        for (g, gov) in self.govs.iter().enumerate() {
            out.mech[gov.area] = out.mech[gov.area] + x[lay.mech() + g] * gov.rated;
        }
        for (c, conv) in self.convs.iter().enumerate() {
            let si = synthetic_inertia_power(x[lay.filt() + c], &conv.control, conv.rated);
            let p = (x[lay.conv() + c] + si).clamp_to(conv.lo, conv.hi);
            out.conv[conv.area] = out.conv[conv.area] + p;
        }
    }

    /// `dx/dt` given state `x` and per-area step inputs `ext` (MW).
    fn derivative(&self, lay: Layout, x: &[T], ext: &[T], flows: &mut Flows<T>, dx: &mut [T]) {
        self.flows(lay, x, flows);
        let two_pi = T::lit(2.0) * T::PI();
        for (a, area) in self.areas.iter().enumerate() {
            let df = x[lay.df() + a];
            let net = flows.mech[a] + flows.conv[a] + ext[a] - area.damping * df - flows.tie_out[a]
                + area.imbalance;
            dx[lay.df() + a] = net / area.m;
            dx[lay.delta() + a] = two_pi * df;
        }
        for (g, gov) in self.govs.iter().enumerate() {
            let df = x[lay.df() + gov.area];
            let signal = (apply_deadband(self.f_init - self.f0 + df, gov.db, gov.kind)
                - gov.offset_hz)
                / self.f0;
            let v = x[lay.valve() + g];
            let pm = x[lay.mech() + g];
            dx[lay.valve() + g] = (-signal * gov.gain - v) / gov.tg;
            let mut dpm = (v - pm) / gov.tt;
            if (pm >= gov.hi && dpm > T::zero()) || (pm <= gov.lo && dpm < T::zero()) {
                dpm = T::zero();
            }
            dx[lay.mech() + g] = dpm;
        }
        for (c, conv) in self.convs.iter().enumerate() {
            let df = x[lay.df() + conv.area];
            let p = x[lay.conv() + c];
            let mut dp = (-df * conv.droop_mw_per_hz - p) / conv.control.response_lag_t;
            if (p >= conv.hi && dp > T::zero()) || (p <= conv.lo && dp < T::zero()) {
                dp = T::zero();
            }
            dx[lay.conv() + c] = dp;
            let dfdt = dx[lay.df() + conv.area];
            dx[lay.filt() + c] = (dfdt - x[lay.filt() + c]) / conv.control.si_filter_t;
        }
    }

    fn project(&self, lay: Layout, x: &mut [T]) {
        for (g, gov) in self.govs.iter().enumerate() {
            let i = lay.mech() + g;
            x[i] = x[i].clamp_to(gov.lo, gov.hi);
        }
        for (c, conv) in self.convs.iter().enumerate() {
            let i = lay.conv() + c;
            x[i] = x[i].clamp_to(conv.lo, conv.hi);
        }
    }
}

/// Scratch buffers for one RK4 step.
struct Rk4<T> {
    k: [Vec<T>; 4],
    tmp: Vec<T>,
}

impl<T: Scalar> Rk4<T> {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![T::zero(); n]),
            tmp: vec![T::zero(); n],
        }
    }

    fn step(&mut self, x: &mut [T], dt: T, mut f: impl FnMut(&[T], &mut [T])) {
        let half = dt / T::lit(2.0);
        let [k1, k2, k3, k4] = &mut self.k;
        f(x, k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * k1[i];
        }
        f(&self.tmp, k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * k2[i];
        }
        f(&self.tmp, k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * k3[i];
        }
        f(&self.tmp, k4);
        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..x.len() {
            x[i] = x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
    }
}

/// Simulates one contingency. Deterministic: identical inputs give
/// bit-identical traces.
pub fn simulate<T: Scalar>(
    model: &GridModel<T>,
    contingency: &Contingency<T>,
    protection: &ProtectionScheme<T>,
    cfg: &SimConfig<T>,
) -> Result<SimulationResult<T>, SimError> {
    run(model, contingency, protection, cfg, true)
}

/// Like [`simulate`] but integrates a model whose areas are out of balance
/// at t=0, the mismatch acting as a standing power step.
pub fn simulate_unbalanced<T: Scalar>(
    model: &GridModel<T>,
    contingency: &Contingency<T>,
    protection: &ProtectionScheme<T>,
    cfg: &SimConfig<T>,
) -> Result<SimulationResult<T>, SimError> {
    run(model, contingency, protection, cfg, false)
}

fn run<T: Scalar>(
    model: &GridModel<T>,
    contingency: &Contingency<T>,
    protection: &ProtectionScheme<T>,
    cfg: &SimConfig<T>,
    strict_balance: bool,
) -> Result<SimulationResult<T>, SimError> {
    let (ratio, steps) = cfg.check()?;
    let plant = Plant::compile(model, protection, strict_balance)?;
    let loss_area = model
        .area_index(&contingency.area)
        .ok_or_else(|| SimError::UnknownArea(contingency.area.clone()))?;
    let committed = model.areas[loss_area].committed();
    if contingency.delta_p_mw.abs() > committed {
        return Err(SimError::ContingencyTooLarge {
            area: contingency.area.clone(),
            delta_mw: contingency.delta_p_mw.as_f64(),
            committed_mw: committed.as_f64(),
        });
    }

    let lay = plant.layout();
    let na = lay.na;
    let mut x = vec![T::zero(); lay.len()];
    let mut rk = Rk4::new(lay.len());
    let mut flows = Flows {
        mech: vec![T::zero(); na],
        conv: vec![T::zero(); na],
        tie_out: vec![T::zero(); na],
    };

    let mut relays: Vec<RelayState<T>> = vec![RelayState::default(); na];
    let mut loss = vec![T::zero(); na];
    let mut ffr_total = vec![T::zero(); na];
    let mut ufls_total = vec![T::zero(); na];
    let mut ext = vec![T::zero(); na];
    let mut contingency_applied = false;

    let n_out = steps / ratio + 1;
    let mut result = SimulationResult {
        area_ids: plant.areas.iter().map(|a| a.id.clone()).collect(),
        time: Vec::with_capacity(n_out),
        frequency: vec![Vec::with_capacity(n_out); na],
        mech_mw: vec![Vec::with_capacity(n_out); na],
        conv_mw: vec![Vec::with_capacity(n_out); na],
        ffr_mw: vec![Vec::with_capacity(n_out); na],
        ufls_mw: vec![Vec::with_capacity(n_out); na],
        events: Vec::new(),
        diagnostics: Diagnostics {
            diverged: false,
            over_frequency: false,
            max_frequency_hz: plant.f_init,
            min_frequency_hz: plant.f_init,
            max_abs_deviation_hz: T::zero(),
        },
        inertia_weights: plant.areas.iter().map(|a| a.m).collect(),
        system_load_mw: model.total_load(),
        t_event: contingency.t_event,
        output_dt: cfg.output_dt,
        f0: plant.f0,
        initial_frequency: plant.f_init,
    };

    let tol = cfg.dt * T::lit(1e-6);
    for k in 0..=steps {
        let t = T::from_count(k) * cfg.dt;
        if !contingency_applied && t + tol >= contingency.t_event {
            loss[loss_area] = contingency.delta_p_mw;
            contingency_applied = true;
        }

        for (a, area) in plant.areas.iter().enumerate() {
            let f = plant.f_init + x[lay.df() + a];
            if let Some(scheme) = &area.ufls {
                for ev in ufls_step(&mut relays[a], scheme, f, t, cfg.dt, area.load) {
                    ufls_total[a] = ufls_total[a] + ev.mw;
                    result.events.push(RelayEvent {
                        t,
                        area: area.id.clone(),
                        relay: format!("ufls-{}", ev.index + 1),
                        class: RelayClass::Ufls,
                        action: RelayAction::Shed,
                        mw: ev.mw,
                    });
                }
            }
            for ev in ffr_step(&mut relays[a], &area.ffr, f, t, cfg.dt) {
                ffr_total[a] = ffr_total[a] + ev.mw;
                let res = &area.ffr[ev.index];
                result.events.push(RelayEvent {
                    t,
                    area: area.id.clone(),
                    relay: if res.id.is_empty() {
                        format!("ffr-{}", ev.index + 1)
                    } else {
                        res.id.clone()
                    },
                    class: RelayClass::Ffr,
                    action: if ev.mw >= T::zero() {
                        RelayAction::Shed
                    } else {
                        RelayAction::Release
                    },
                    mw: ev.mw,
                });
            }
            ext[a] = ffr_total[a] + ufls_total[a] - loss[a];
        }

        for a in 0..na {
            let f = plant.f_init + x[lay.df() + a];
            let d = &mut result.diagnostics;
            d.max_frequency_hz = d.max_frequency_hz.max(f);
            d.min_frequency_hz = d.min_frequency_hz.min(f);
            d.max_abs_deviation_hz = d.max_abs_deviation_hz.max(x[lay.df() + a].abs());
        }

        if k % ratio == 0 {
            plant.flows(lay, &x, &mut flows);
            result.time.push(T::from_count(k) * cfg.dt);
            for a in 0..na {
                result.frequency[a].push(plant.f_init + x[lay.df() + a]);
                result.mech_mw[a].push(flows.mech[a]);
                result.conv_mw[a].push(flows.conv[a]);
                result.ffr_mw[a].push(ffr_total[a]);
                result.ufls_mw[a].push(ufls_total[a]);
            }
        }
        if k == steps {
            break;
        }

        rk.step(&mut x, cfg.dt, |s, d| {
            plant.derivative(lay, s, &ext, &mut flows, d)
        });
        plant.project(lay, &mut x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Divergence {
                last_valid_t: t.as_f64(),
            });
        }
    }
    result.diagnostics.over_frequency =
        result.diagnostics.max_frequency_hz > T::lit(OVER_FREQUENCY_HZ);
    Ok(result)
}

/// Which frequency signal to extract from a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// Centre-of-inertia frequency.
    Coi,
    Area(usize),
}

impl<T: Scalar> SimulationResult<T> {
    pub fn coi_frequency(&self) -> Vec<T> {
        let total = self.inertia_weights.iter().fold(T::zero(), |s, &m| s + m);
        (0..self.time.len())
            .map(|k| {
                self.inertia_weights
                    .iter()
                    .zip(&self.frequency)
                    .fold(T::zero(), |s, (&m, f)| s + m * f[k])
                    / total
            })
            .collect()
    }

    pub fn channel(&self, ch: Channel) -> Vec<T> {
        match ch {
            Channel::Coi => self.coi_frequency(),
            Channel::Area(i) => self.frequency[i].clone(),
        }
    }

    pub fn area_nadirs(&self) -> Vec<T> {
        self.frequency
            .iter()
            .map(|f| f.iter().fold(T::infinity(), |m, &v| m.min(v)))
            .collect()
    }

    /// Delimited trace: `time_s`, centre-of-inertia `f_coi`, `f_<area>`,
    /// then `pm_`, `pconv_`, `pffr_`, `pufls_` power channels, six decimals.
    pub fn to_csv(&self) -> String {
        let coi = self.coi_frequency();
        let mut out = String::from("time_s,f_coi");
        for prefix in ["f", "pm", "pconv", "pffr", "pufls"] {
            for id in &self.area_ids {
                out.push_str(&format!(",{prefix}_{id}"));
            }
        }
        out.push('\n');
        for (k, t) in self.time.iter().enumerate() {
            out.push_str(&format!("{:.6},{:.6}", t.as_f64(), coi[k].as_f64()));
            for series in [
                &self.frequency,
                &self.mech_mw,
                &self.conv_mw,
                &self.ffr_mw,
                &self.ufls_mw,
            ] {
                for s in series.iter() {
                    out.push_str(&format!(",{:.6}", s[k].as_f64()));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Relay event log as delimited text.
    pub fn events_csv(&self) -> String {
        let mut out = String::from("time_s,area,relay,class,action,mw\n");
        for e in &self.events {
            let class = match e.class {
                RelayClass::Ufls => "ufls",
                RelayClass::Ffr => "ffr",
            };
            let action = match e.action {
                RelayAction::Shed => "shed",
                RelayAction::Release => "release",
            };
            out.push_str(&format!(
                "{:.6},{},{},{},{},{:.6}\n",
                e.t.as_f64(),
                e.area,
                e.relay,
                class,
                action,
                e.mw.as_f64()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{load_system, GeneratorFleet, Governor};

    const SINGLE: &str = r#"
name = "single"
[[areas]]
id = "a"
load_mw = 1000.0
damping = 1.0
[[areas.fleets]]
id = "steam"
kind = "synchronous"
rated_mw = 1000.0
committed_mw = 1000.0
h = 4.0
[areas.fleets.governor]
droop = 0.05
deadband_hz = 0.0
headroom_mw = 0.0
"#;

    fn single() -> GridModel<f64> {
        load_system(SINGLE).unwrap()
    }

    /// Half-loaded fleet with all spare capacity as headroom.
    fn linear() -> GridModel<f64> {
        let mut m = single();
        m.areas[0].load_mw = 500.0;
        m.areas[0].fleets[0].committed_mw = 500.0;
        m.areas[0].fleets[0].governor.as_mut().unwrap().headroom_mw = 500.0;
        m
    }

    #[test]
    fn deadband_examples() {
        assert_eq!(apply_deadband(-0.020, 0.036, DeadbandKind::Step), 0.0);
        assert_eq!(apply_deadband(-0.3, 0.0, DeadbandKind::Offset), -0.3);
        assert_eq!(apply_deadband(0.7, 0.0, DeadbandKind::Step), 0.7);
        assert_eq!(apply_deadband(-0.050, 0.036, DeadbandKind::Step), -0.050);
        assert!((apply_deadband(-0.050_f64, 0.036, DeadbandKind::Offset) + 0.014).abs() < 1e-15);
    }

    #[test]
    fn synthetic_inertia_examples() {
        let conv = ConverterControl {
            synthetic_inertia_gain: 100.0,
            si_boost_limit: 0.05,
            si_filter_t: 0.1,
            droop: None,
            response_lag_t: 0.1,
            headroom_mw: 1e9,
        };
        assert_eq!(synthetic_inertia_power(0.0, &conv, 1000.0), 0.0);
        assert!((synthetic_inertia_power(-0.2_f64, &conv, 1000.0) - 20.0).abs() < 1e-12);
        assert_eq!(synthetic_inertia_power(-2.0, &conv, 1000.0), 50.0);
        // No curtailment on rising frequency.
        assert_eq!(synthetic_inertia_power(0.5, &conv, 1000.0), 0.0);
    }

    #[test]
    fn steady_state_examples() {
        let m = single();
        assert_eq!(steady_state_frequency(&m, 0.0).unwrap(), 0.0);
        let df = steady_state_frequency(&m, 10.0).unwrap();
        assert!((df - (-0.01 / 21.0 * 60.0)).abs() < 1e-12);
        assert!((df + 0.02857).abs() < 1e-5);

        let mut m = single();
        m.areas[0].damping = 0.0;
        m.areas[0].fleets[0]
            .governor
            .as_mut()
            .unwrap()
            .responsive_fraction = 0.5;
        let df = steady_state_frequency(&m, 10.0).unwrap();
        assert!((df + 0.06).abs() < 1e-12);

        m.areas[0].fleets[0].governor = None;
        assert_eq!(
            steady_state_frequency(&m, 10.0),
            Err(SimError::ZeroDenominator)
        );
    }

    #[test]
    fn rocof_examples() {
        let m = single();
        assert_eq!(initial_rocof(&m, 0.0).unwrap(), 0.0);
        // 0.02 pu on a 1,000 MW, H=4 s system.
        assert!((initial_rocof(&m, 20.0).unwrap() + 0.15).abs() < 1e-12);
    }

    #[test]
    fn zero_contingency_is_flat() {
        let m = single();
        let c = Contingency::new("a", 0.0, 1.0);
        let r = simulate(&m, &c, &ProtectionScheme::none(), &SimConfig::default()).unwrap();
        assert!(r.events.is_empty());
        assert!(r.frequency[0].iter().all(|&f| f == 60.0));
        assert_eq!(r.time.len(), 601);
    }

    #[test]
    fn trace_grid_is_uniform() {
        let m = single();
        let c = Contingency::new("a", 10.0, 1.0);
        let cfg = SimConfig {
            dt: 0.01,
            horizon_s: 5.0,
            output_dt: 0.05,
        };
        let r = simulate(&m, &c, &ProtectionScheme::none(), &cfg).unwrap();
        assert_eq!(r.time.len(), 101);
        for w in r.time.windows(2) {
            assert!((w[1] - w[0] - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn config_errors() {
        let m = single();
        let c = Contingency::new("a", 10.0, 1.0);
        let bad = SimConfig {
            dt: 0.003,
            horizon_s: 5.0,
            output_dt: 0.1,
        };
        assert!(matches!(
            simulate(&m, &c, &ProtectionScheme::none(), &bad),
            Err(SimError::Config(_))
        ));
        let bad = SimConfig {
            dt: 0.2,
            horizon_s: 5.0,
            output_dt: 0.1,
        };
        assert!(matches!(
            simulate(&m, &c, &ProtectionScheme::none(), &bad),
            Err(SimError::Config(_))
        ));
        let c = Contingency::new("zz", 10.0, 1.0);
        assert!(matches!(
            simulate(&m, &c, &ProtectionScheme::none(), &SimConfig::default()),
            Err(SimError::UnknownArea(_))
        ));
        let c = Contingency::new("a", 5000.0, 1.0);
        assert!(matches!(
            simulate(&m, &c, &ProtectionScheme::none(), &SimConfig::default()),
            Err(SimError::ContingencyTooLarge { .. })
        ));
    }

    #[test]
    fn unstable_step_reports_divergence() {
        let mut m = single();
        let g = m.areas[0].fleets[0].governor.as_mut().unwrap();
        g.tg = 0.001;
        g.tt = 0.001;
        let c = Contingency::new("a", 10.0, 0.5);
        let cfg = SimConfig {
            dt: 0.5,
            horizon_s: 2000.0,
            output_dt: 0.5,
        };
        match simulate(&m, &c, &ProtectionScheme::none(), &cfg) {
            Err(SimError::Divergence { last_valid_t }) => assert!(last_valid_t > 0.0),
            other => panic!(
                "expected divergence, got {:?}",
                other.map(|r| r.diagnostics)
            ),
        }
    }

    #[test]
    fn headroom_limits_governor_output() {
        let mut m = single();
        m.areas[0].fleets[0].rated_mw = 1100.0;
        m.areas[0].fleets[0].governor.as_mut().unwrap().headroom_mw = 5.0;
        let c = Contingency::new("a", 20.0, 1.0);
        let r = simulate(&m, &c, &ProtectionScheme::none(), &SimConfig::covering(&c)).unwrap();
        let peak = r.mech_mw[0].iter().fold(0.0f64, |m, &v| m.max(v));
        assert!(peak <= 5.0 + 1e-9, "{peak}");
        assert!(peak > 4.99);
    }

    #[test]
    fn converter_droop_contributes() {
        let mut m = linear();
        m.areas[0].load_mw = 600.0;
        m.areas[0].fleets.push(GeneratorFleet {
            id: "wind".into(),
            kind: FleetKind::Wtg,
            rated_mw: 200.0,
            committed_mw: 100.0,
            h: 0.0,
            governor: None,
            converter: Some(ConverterControl {
                synthetic_inertia_gain: 0.0,
                si_boost_limit: 0.0,
                si_filter_t: 0.1,
                droop: Some(0.05),
                response_lag_t: 0.2,
                headroom_mw: 100.0,
            }),
        });
        let expected = steady_state_frequency(&m, 20.0).unwrap();
        let c = Contingency::new("a", 20.0, 1.0);
        let cfg = SimConfig {
            horizon_s: 150.0,
            ..SimConfig::default()
        };
        let r = simulate(&m, &c, &ProtectionScheme::none(), &cfg).unwrap();
        let last = *r.frequency[0].last().unwrap() - 60.0;
        assert!((last - expected).abs() < 1e-3, "{last} vs {expected}");
        assert!(*r.conv_mw[0].last().unwrap() > 0.0);
    }

    #[test]
    fn governor_sits_at_equilibrium_away_from_nominal() {
        let mut m = single();
        m.initial_frequency = 59.974;
        let g: &mut Governor<f64> = m.areas[0].fleets[0].governor.as_mut().unwrap();
        g.deadband_hz = 0.0;
        let c = Contingency::new("a", 0.0, 1.0);
        let r = simulate(&m, &c, &ProtectionScheme::none(), &SimConfig::default()).unwrap();
        assert!(r.diagnostics.max_abs_deviation_hz < 1e-12);
        assert!(r.frequency[0].iter().all(|&f| f == 59.974));
    }
}
