//! Under-frequency load shedding and fast frequency response relays.
//!
//! Relays are evaluated by the engine once per integration step, at the step
//! boundary, against the local area frequency. Every relay latches: once a
//! block has shed or a resource has responded it stays that way for the rest
//! of the run.

use serde::{Deserialize, Serialize};

use crate::engine::{RelayClass, SimulationResult};
use crate::num::Scalar;

/// Trip and response delays are quoted in cycles of a 60 Hz system.
pub const CYCLES_PER_SECOND: f64 = 60.0;

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct UflsBlock<T> {
    pub setpoint_hz: T,
    /// Fraction of pre-event area load dropped by this block.
    pub shed_fraction: T,
    /// Definite relay delay, cycles.
    pub trip_cycles: T,
}

impl<T: Scalar> UflsBlock<T> {
    pub fn trip_time_s(&self) -> T {
        self.trip_cycles / T::lit(CYCLES_PER_SECOND)
    }
}

/// Ordered UFLS blocks, highest setpoint first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct UflsScheme<T> {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub blocks: Vec<UflsBlock<T>>,
}

impl<T: Scalar> UflsScheme<T> {
    /// Invariant violations, empty when the scheme is usable.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut cumulative = T::zero();
        for (k, b) in self.blocks.iter().enumerate() {
            let n = k + 1;
            if !(b.setpoint_hz < T::lit(60.0)) {
                out.push(format!(
                    "ufls block {n}: setpoint {} Hz must be below 60 Hz",
                    b.setpoint_hz
                ));
            }
            if !(b.shed_fraction > T::zero() && b.shed_fraction < T::one()) {
                out.push(format!(
                    "ufls block {n}: shed fraction {} outside (0, 1)",
                    b.shed_fraction
                ));
            }
            if !(b.trip_cycles > T::zero()) {
                out.push(format!("ufls block {n}: trip time must be > 0"));
            }
            if k > 0 && !(b.setpoint_hz < self.blocks[k - 1].setpoint_hz) {
                out.push(format!("ufls block {n}: setpoints must strictly decrease"));
            }
            cumulative = cumulative + b.shed_fraction;
        }
        if !(cumulative < T::one()) {
            out.push(format!(
                "ufls cumulative shed {} must stay below 100%",
                cumulative
            ));
        }
        out
    }

    pub fn cumulative_fraction(&self) -> T {
        self.blocks
            .iter()
            .fold(T::zero(), |s, b| s + b.shed_fraction)
    }
}

/// Relay-armed fast load reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct FfrResource<T> {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub id: String,
    /// Hosting area. Only meaningful in a [`ProtectionScheme`]; a resource
    /// without an area there is split across all areas by load share.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<String>,
    pub amount_mw: T,
    pub trigger_hz: T,
    /// Trigger-to-full-response time, cycles.
    pub response_cycles: T,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub latched: bool,
}

impl<T: Scalar> FfrResource<T> {
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let name = if self.id.is_empty() { "ffr" } else { &self.id };
        if !(self.amount_mw > T::zero()) {
            out.push(format!("{name}: amount must be > 0"));
        }
        if !(self.trigger_hz < T::lit(60.0)) {
            out.push(format!(
                "{name}: trigger {} Hz must be below 60 Hz",
                self.trigger_hz
            ));
        }
        if !(self.response_cycles >= T::zero() && self.response_cycles <= T::lit(30.0)) {
            out.push(format!(
                "{name}: response time {} cycles must be within 30 cycles",
                self.response_cycles
            ));
        }
        out
    }

    pub fn response_time_s(&self) -> T {
        self.response_cycles / T::lit(CYCLES_PER_SECOND)
    }
}

/// Protection applied on top of whatever the model's areas already carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(deny_unknown_fields)]
pub struct ProtectionScheme<T> {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    /// Used in every area that has no scheme of its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ufls: Option<UflsScheme<T>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ffr: Vec<FfrResource<T>>,
}

impl<T> Default for ProtectionScheme<T> {
    fn default() -> Self {
        Self {
            name: String::new(),
            ufls: None,
            ffr: Vec::new(),
        }
    }
}

impl<T: Scalar> ProtectionScheme<T> {
    pub fn none() -> Self {
        Self {
            name: "none".into(),
            ..Self::default()
        }
    }

    pub fn check(&self) -> Vec<String> {
        let mut out = self.ufls.as_ref().map(|s| s.check()).unwrap_or_default();
        for r in &self.ffr {
            out.extend(r.check());
        }
        out
    }

    /// Named presets: the mainstream interconnection UFLS plans, the ERCOT
    /// study configuration (14-cycle first block plus 1,400 MW of FFR), and
    /// `none`.
    pub fn preset(name: &str) -> Option<Self> {
        let blocks = |rows: &[(f64, f64, f64)]| {
            rows.iter()
                .map(|&(sp, frac, cyc)| UflsBlock {
                    setpoint_hz: T::lit(sp),
                    shed_fraction: T::lit(frac),
                    trip_cycles: T::lit(cyc),
                })
                .collect::<Vec<_>>()
        };
        let ufls = |scheme: &str, rows: &[(f64, f64, f64)]| {
            Some(UflsScheme {
                name: scheme.into(),
                blocks: blocks(rows),
            })
        };
        let scheme = match name {
            "none" => Self::none(),
            // Per-block shares are quoted as 6.5-7.5%; the midpoint is used.
            "ei-mainstream" => Self {
                name: name.into(),
                ufls: ufls(
                    name,
                    &[
                        (59.5, 0.07, 18.0),
                        (59.3, 0.07, 18.0),
                        (59.1, 0.07, 18.0),
                        (58.9, 0.07, 18.0),
                    ],
                ),
                ffr: vec![],
            },
            "ercot-mainstream" => Self {
                name: name.into(),
                ufls: ufls(
                    name,
                    &[(59.3, 0.05, 40.0), (58.9, 0.10, 40.0), (58.5, 0.10, 40.0)],
                ),
                ffr: vec![],
            },
            "wecc-primary" => Self {
                name: name.into(),
                ufls: ufls(
                    name,
                    &[
                        (59.1, 0.053, 14.0),
                        (58.9, 0.059, 14.0),
                        (58.7, 0.065, 14.0),
                        (58.5, 0.067, 14.0),
                        (58.3, 0.067, 14.0),
                    ],
                ),
                ffr: vec![],
            },
            "ercot-study" => Self {
                name: name.into(),
                ufls: ufls(
                    name,
                    &[(59.3, 0.05, 14.0), (58.9, 0.10, 40.0), (58.5, 0.10, 40.0)],
                ),
                ffr: vec![FfrResource {
                    id: "ffr".into(),
                    area: None,
                    amount_mw: T::lit(1400.0),
                    trigger_hz: T::lit(59.7),
                    response_cycles: T::lit(30.0),
                    latched: true,
                }],
            },
            _ => return None,
        };
        Some(scheme)
    }

    pub const PRESETS: [&'static str; 5] = [
        "none",
        "ei-mainstream",
        "ercot-mainstream",
        "wecc-primary",
        "ercot-study",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UflsTimer<T> {
    /// Time spent continuously below setpoint; `None` while above it.
    pub below_for: Option<T>,
    pub tripped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FfrStatus<T> {
    Armed,
    Pending { apply_at: T },
    Applied,
}

/// Per-area relay state owned by a single run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelayState<T> {
    pub ufls: Vec<UflsTimer<T>>,
    pub ffr: Vec<FfrStatus<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShedEvent<T> {
    pub t: T,
    /// Index of the block or resource that acted.
    pub index: usize,
    /// Load removed (positive) or restored (negative), MW.
    pub mw: T,
}

fn step_tolerance<T: Scalar>(dt: T) -> T {
    dt * T::lit(1e-6)
}

/// Advances every UFLS block of `scheme` by one step at frequency `local_f`.
pub fn ufls_step<T: Scalar>(
    state: &mut RelayState<T>,
    scheme: &UflsScheme<T>,
    local_f: T,
    t: T,
    dt: T,
    area_load_mw: T,
) -> Vec<ShedEvent<T>> {
    debug_assert!(dt > T::zero());
    if state.ufls.len() < scheme.blocks.len() {
        state.ufls.resize(scheme.blocks.len(), UflsTimer::default());
    }
    let tol = step_tolerance(dt);
    let mut events = Vec::new();
    for (index, (block, timer)) in scheme.blocks.iter().zip(state.ufls.iter_mut()).enumerate() {
        if timer.tripped {
            continue;
        }
        if local_f < block.setpoint_hz {
            let elapsed = match timer.below_for {
                None => T::zero(),
                Some(prev) => prev + dt,
            };
            timer.below_for = Some(elapsed);
            if elapsed + tol >= block.trip_time_s() {
                timer.tripped = true;
                events.push(ShedEvent {
                    t,
                    index,
                    mw: block.shed_fraction * area_load_mw,
                });
            }
        } else {
            timer.below_for = None;
        }
    }
    events
}

/// Advances every FFR resource by one step at frequency `local_f`.
pub fn ffr_step<T: Scalar>(
    state: &mut RelayState<T>,
    resources: &[FfrResource<T>],
    local_f: T,
    t: T,
    dt: T,
) -> Vec<ShedEvent<T>> {
    debug_assert!(dt > T::zero());
    if state.ffr.len() < resources.len() {
        state.ffr.resize(resources.len(), FfrStatus::Armed);
    }
    let tol = step_tolerance(dt);
    let mut events = Vec::new();
    for (index, (res, status)) in resources.iter().zip(state.ffr.iter_mut()).enumerate() {
        if *status == FfrStatus::Armed && local_f < res.trigger_hz {
            *status = FfrStatus::Pending {
                apply_at: t + res.response_time_s(),
            };
        }
        match *status {
            FfrStatus::Pending { apply_at } if t + tol >= apply_at => {
                *status = FfrStatus::Applied;
                events.push(ShedEvent {
                    t,
                    index,
                    mw: res.amount_mw,
                });
            }
            FfrStatus::Applied if !res.latched && local_f >= res.trigger_hz => {
                *status = FfrStatus::Armed;
                events.push(ShedEvent {
                    t,
                    index,
                    mw: -res.amount_mw,
                });
            }
            _ => {}
        }
    }
    events
}

/// Net load removed by each relay class over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ShedLedger<T> {
    pub ffr_mw: T,
    pub ufls_mw: T,
    /// UFLS shed as a fraction of pre-event system load.
    pub ufls_fraction: T,
}

pub fn shed_ledger<T: Scalar>(result: &SimulationResult<T>) -> ShedLedger<T> {
    let (mut ffr, mut ufls) = (T::zero(), T::zero());
    for e in &result.events {
        match e.class {
            RelayClass::Ffr => ffr = ffr + e.mw,
            RelayClass::Ufls => ufls = ufls + e.mw,
        }
    }
    let fraction = if result.system_load_mw > T::zero() {
        ufls / result.system_load_mw
    } else {
        T::zero()
    };
    ShedLedger {
        ffr_mw: ffr,
        ufls_mw: ufls,
        ufls_fraction: fraction,
    }
}
