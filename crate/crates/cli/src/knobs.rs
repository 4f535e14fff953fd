use std::fmt;

use freqlab_core::grid::{ConverterControl, FleetKind, GridModel};
use freqlab_core::protection::{FfrResource, ProtectionScheme};

use crate::inputs::{Failure, Outcome};

const FFR_TRIGGER_HZ: f64 = 59.7;
const FFR_RESPONSE_CYCLES: f64 = 30.0;

/// Settings a sweep or run can override.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Knob {
    /// Governor droop of every synchronous fleet, pu.
    Droop,
    /// Governor deadband of every synchronous fleet, Hz.
    Deadband,
    /// Total fast frequency response, MW, triggered at 59.7 Hz within 30 cycles.
    FfrMw,
    /// Synthetic inertia of every converter fleet as an equivalent inertia
    /// constant on its rating, s.
    SiGain,
}

impl Knob {
    pub fn parse(name: &str) -> Outcome<Self> {
        Ok(match name {
            "droop" => Knob::Droop,
            "deadband" => Knob::Deadband,
            "ffr-mw" => Knob::FfrMw,
            "si-gain" => Knob::SiGain,
            _ => {
                return Err(Failure::Input(format!(
                    "unknown knob '{name}' (droop, deadband, ffr-mw, si-gain)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Knob::Droop => "droop",
            Knob::Deadband => "deadband",
            Knob::FfrMw => "ffr-mw",
            Knob::SiGain => "si-gain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setting {
    pub knob: Knob,
    pub value: f64,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.knob.name(), self.value)
    }
}

/// `knob=value`.
pub fn parse_setting(text: &str) -> Outcome<Setting> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| Failure::Input(format!("expected knob=value, got '{text}'")))?;
    Ok(Setting {
        knob: Knob::parse(k.trim())?,
        value: parse_value(v)?,
    })
}

/// `knob=v1,v2,...`.
pub fn parse_sweep(text: &str) -> Outcome<(Knob, Vec<f64>)> {
    let (k, vs) = text
        .split_once('=')
        .ok_or_else(|| Failure::Input(format!("expected knob=v1,v2,..., got '{text}'")))?;
    let values = vs
        .split(',')
        .map(parse_value)
        .collect::<Outcome<Vec<_>>>()?;
    Ok((Knob::parse(k.trim())?, values))
}

fn parse_value(v: &str) -> Outcome<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite() && *x >= 0.0)
        .ok_or_else(|| Failure::Input(format!("knob value '{v}' must be a finite number >= 0")))
}

pub fn apply(
    model: &mut GridModel<f64>,
    protection: &mut ProtectionScheme<f64>,
    s: Setting,
) -> Outcome<()> {
    match s.knob {
        Knob::Droop => {
            if s.value <= 0.0 {
                return Err(Failure::Input("droop must be > 0".into()));
            }
            for g in governors(model) {
                g.droop = s.value;
            }
        }
        Knob::Deadband => {
            for g in governors(model) {
                g.deadband_hz = s.value;
            }
        }
        Knob::FfrMw => set_ffr(protection, s.value),
        Knob::SiGain => {
            let f0 = model.f0;
            for fleet in model.areas.iter_mut().flat_map(|a| a.fleets.iter_mut()) {
                if fleet.kind == FleetKind::Synchronous {
                    continue;
                }
                let gain = 2.0 * s.value * fleet.rated_mw / f0;
                let ctl = fleet.converter.get_or_insert(ConverterControl {
                    synthetic_inertia_gain: 0.0,
                    si_boost_limit: 0.1,
                    si_filter_t: 0.1,
                    droop: None,
                    response_lag_t: 0.2,
                    headroom_mw: 0.1 * fleet.rated_mw,
                });
                ctl.synthetic_inertia_gain = gain;
            }
        }
    }
    Ok(())
}

fn governors(
    model: &mut GridModel<f64>,
) -> impl Iterator<Item = &mut freqlab_core::grid::Governor<f64>> {
    model
        .areas
        .iter_mut()
        .flat_map(|a| a.fleets.iter_mut())
        .filter_map(|f| f.governor.as_mut())
}

/// Rescales the scheme's FFR to `total` MW, or adds one system-wide
/// resource when it has none.
fn set_ffr(p: &mut ProtectionScheme<f64>, total: f64) {
    if total == 0.0 {
        p.ffr.clear();
        return;
    }
    let current: f64 = p.ffr.iter().map(|r| r.amount_mw).sum();
    if current > 0.0 {
        for r in &mut p.ffr {
            r.amount_mw *= total / current;
        }
    } else {
        p.ffr = vec![FfrResource {
            id: "ffr".into(),
            area: None,
            amount_mw: total,
            trigger_hz: FFR_TRIGGER_HZ,
            response_cycles: FFR_RESPONSE_CYCLES,
            latched: true,
        }];
    }
}
