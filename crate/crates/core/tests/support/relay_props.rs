//! Randomized relay schemes and frequency trajectories, and the properties
//! every UFLS and FFR relay must satisfy on them.

#![allow(dead_code)]

use freqlab_core::protection::{
    ffr_step, ufls_step, FfrResource, RelayState, ShedEvent, UflsBlock, UflsScheme,
    CYCLES_PER_SECOND,
};
use proptest::prelude::*;

pub const LOAD_MW: f64 = 50_000.0;

/// Schemes with falling setpoints and non-decreasing delays.
pub fn scheme_strategy() -> impl Strategy<Value = UflsScheme<f64>> {
    (1usize..=5)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.05f64..0.4, n),
                prop::collection::vec(0.01f64..0.2, n),
                prop::collection::vec(0.5f64..40.0, n),
            )
        })
        .prop_map(|(gaps, fracs, cycles)| {
            let mut sp = 59.8;
            let mut delay = 0.0;
            let total: f64 = fracs.iter().sum();
            let scale = if total > 0.9 { 0.9 / total } else { 1.0 };
            let blocks = gaps
                .iter()
                .zip(&fracs)
                .zip(&cycles)
                .map(|((g, f), c)| {
                    sp -= g;
                    delay += c;
                    UflsBlock {
                        setpoint_hz: sp,
                        shed_fraction: f * scale,
                        trip_cycles: delay,
                    }
                })
                .collect();
            UflsScheme {
                name: String::new(),
                blocks,
            }
        })
}

/// Piecewise-constant random walk between 58 and 60.3 Hz.
pub fn trajectory() -> impl Strategy<Value = (f64, Vec<f64>)> {
    (
        prop::sample::select(vec![0.001, 0.0025, 0.005, 0.01]),
        prop::collection::vec((-0.08f64..0.08, 1usize..60), 5..60),
    )
        .prop_map(|(dt, legs)| {
            let mut f = 60.0;
            let mut out = Vec::new();
            for (step, hold) in legs {
                f = (f + step).clamp(58.0, 60.3);
                out.extend(std::iter::repeat_n(f, hold));
            }
            (dt, out)
        })
}

pub fn falling() -> impl Strategy<Value = (f64, Vec<f64>)> {
    (
        prop::sample::select(vec![0.001, 0.005, 0.01]),
        prop::collection::vec(0.0f64..0.01, 50..2000),
    )
        .prop_map(|(dt, drops)| {
            let mut f = 60.0;
            let out = drops
                .iter()
                .map(|d| {
                    f -= d;
                    f
                })
                .collect();
            (dt, out)
        })
}

fn walk(scheme: &UflsScheme<f64>, dt: f64, f: &[f64]) -> Vec<ShedEvent<f64>> {
    let mut st = RelayState::default();
    f.iter()
        .enumerate()
        .flat_map(|(k, &v)| ufls_step(&mut st, scheme, v, k as f64 * dt, dt, LOAD_MW))
        .collect()
}

/// First sample index at which `block` trips, from the run lengths of
/// consecutive sub-setpoint samples.
fn expected_trip(block: &UflsBlock<f64>, dt: f64, f: &[f64]) -> Option<usize> {
    let need = block.trip_cycles / CYCLES_PER_SECOND;
    let mut start = None;
    for (k, &v) in f.iter().enumerate() {
        if v < block.setpoint_hz {
            let s = *start.get_or_insert(k);
            if (k - s) as f64 * dt >= need - 1e-9 {
                return Some(k);
            }
        } else {
            start = None;
        }
    }
    None
}

pub fn shed_is_monotone(scheme: &UflsScheme<f64>, dt: f64, f: &[f64]) -> Result<(), TestCaseError> {
    let events = walk(scheme, dt, f);
    let mut seen = vec![false; scheme.blocks.len()];
    let mut total = 0.0;
    let mut last_t = f64::NEG_INFINITY;
    for e in &events {
        prop_assert!(e.mw > 0.0);
        prop_assert!(!seen[e.index], "block {} tripped twice", e.index);
        seen[e.index] = true;
        prop_assert!(e.t >= last_t);
        last_t = e.t;
        let before = total;
        total += e.mw;
        prop_assert!(total >= before);
        let b = &scheme.blocks[e.index];
        prop_assert!((e.mw - b.shed_fraction * LOAD_MW).abs() < 1e-9);
    }
    prop_assert!(total < LOAD_MW);
    Ok(())
}

pub fn trips_on_time(scheme: &UflsScheme<f64>, dt: f64, f: &[f64]) -> Result<(), TestCaseError> {
    let events = walk(scheme, dt, f);
    for (i, b) in scheme.blocks.iter().enumerate() {
        let got = events
            .iter()
            .find(|e| e.index == i)
            .map(|e| (e.t / dt).round() as usize);
        let want = expected_trip(b, dt, f);
        prop_assert_eq!(got, want, "block {}", i);
        if let Some(k) = got {
            let t_trip = k as f64 * dt;
            // Trip lands within one step of crossing time + delay.
            let crossed = (0..=k)
                .rev()
                .take_while(|&j| f[j] < b.setpoint_hz)
                .last()
                .unwrap();
            let late = t_trip - (crossed as f64 * dt + b.trip_time_s());
            prop_assert!(late > -1e-9 && late < dt + 1e-9);
        }
    }
    Ok(())
}

pub fn trips_in_order(scheme: &UflsScheme<f64>, dt: f64, f: &[f64]) -> Result<(), TestCaseError> {
    let events = walk(scheme, dt, f);
    for e in &events {
        for higher in 0..e.index {
            let h = events.iter().find(|x| x.index == higher);
            prop_assert!(
                h.is_some_and(|h| h.t <= e.t),
                "block {} tripped before block {}",
                e.index,
                higher
            );
        }
    }
    Ok(())
}

pub fn ffr_latches(trigger: f64, cycles: f64, dt: f64, f: &[f64]) -> Result<(), TestCaseError> {
    let res = vec![FfrResource {
        id: "ffr".into(),
        area: None,
        amount_mw: 1400.0,
        trigger_hz: trigger,
        response_cycles: cycles,
        latched: true,
    }];
    let mut st = RelayState::default();
    let events: Vec<_> = f
        .iter()
        .enumerate()
        .flat_map(|(k, &v)| ffr_step(&mut st, &res, v, k as f64 * dt, dt))
        .collect();
    let first_below = f.iter().position(|&v| v < trigger);
    let due = first_below.map(|k0| k0 as f64 * dt + cycles / CYCLES_PER_SECOND);
    let k_due = due.and_then(|due| (0..f.len()).find(|&k| k as f64 * dt >= due - 1e-6 * dt));
    match k_due {
        None => prop_assert!(events.is_empty()),
        Some(k) => {
            prop_assert_eq!(events.len(), 1);
            prop_assert_eq!(events[0].mw, 1400.0);
            prop_assert!((events[0].t - k as f64 * dt).abs() < 1e-9);
        }
    }
    Ok(())
}
