//! Closed-form response of one area with one governed fleet: settled
//! deviation from the combined governor and load stiffness, initial slope
//! from the stored energy alone.

#![allow(dead_code)]

use freqlab_core::engine::{
    initial_rocof, simulate, steady_state_frequency, Contingency, SimConfig,
};
use freqlab_core::grid::{load_system, GridModel};
use freqlab_core::protection::ProtectionScheme;

const F0: f64 = 60.0;
const LOAD_MW: f64 = 5000.0;
const RATED_MW: f64 = 6000.0;

/// (H, R, Kg, D, ΔP) over realistic inertia and droop.
pub const CASES: [(f64, f64, f64, f64, f64); 20] = [
    (4.0, 0.05, 1.0, 1.0, 50.0),
    (4.0, 0.05, 0.5, 1.0, 100.0),
    (4.5, 0.06, 0.8, 1.0, 100.0),
    (5.0, 0.05, 0.8, 1.0, 100.0),
    (5.0, 0.08, 1.0, 0.0, 200.0),
    (5.5, 0.07, 0.6, 2.0, 50.0),
    (6.0, 0.05, 0.5, 1.0, 150.0),
    (6.0, 0.04, 0.4, 1.5, 200.0),
    (6.5, 0.06, 0.9, 0.5, 120.0),
    (7.0, 0.05, 1.0, 3.0, 300.0),
    (7.0, 0.10, 1.0, 1.0, 250.0),
    (7.5, 0.05, 0.3, 1.0, 100.0),
    (8.0, 0.06, 1.0, 0.5, 250.0),
    (8.0, 0.04, 0.7, 1.0, 60.0),
    (8.5, 0.05, 0.9, 1.0, 10.0),
    (9.0, 0.05, 0.6, 1.2, 120.0),
    (4.0, 0.10, 1.0, 2.0, 150.0),
    (5.0, 0.09, 0.7, 1.0, 500.0),
    (6.0, 0.08, 0.2, 0.0, 40.0),
    (9.0, 0.03, 0.5, 1.0, 400.0),
];

/// One area, one governed fleet with ample headroom and no deadband.
pub fn single_area(h: f64, r: f64, kg: f64, d: f64) -> GridModel<f64> {
    let text = format!(
        r#"
name = "linear"
[[areas]]
id = "a"
load_mw = {LOAD_MW:?}
damping = {d}
[[areas.fleets]]
id = "steam"
kind = "synchronous"
rated_mw = {RATED_MW:?}
committed_mw = {LOAD_MW:?}
h = {h}
[areas.fleets.governor]
droop = {r}
deadband_hz = 0.0
responsive_fraction = {kg}
headroom_mw = 1000.0
"#
    );
    load_system(&text).unwrap()
}

/// Slope of the least-squares line through `ys` sampled every `dt`.
pub fn slope(ys: &[f64], dt: f64) -> f64 {
    let n = ys.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    sxy / sxx / dt
}

/// Simulates one case and compares it with the closed forms: settled
/// deviation within 1e-3 Hz, slope over the first half second within 10%.
pub fn check_case(h: f64, r: f64, kg: f64, d: f64, dp: f64) -> Result<(), String> {
    let tag = format!("H={h} R={r} Kg={kg} D={d} dP={dp}");
    let m = single_area(h, r, kg, d);
    let c = Contingency::new("a", dp, 5.0);
    let cfg = SimConfig {
        dt: 0.005,
        horizon_s: 300.0,
        output_dt: 0.005,
    };
    let res = simulate(&m, &c, &ProtectionScheme::none(), &cfg).map_err(|e| e.to_string())?;

    // Governor gain Kg·rated/R plus damping D·load, both MW per pu.
    let beta = kg * RATED_MW / r + d * LOAD_MW;
    let df_ss = -dp / beta * F0;
    let engine_ss = steady_state_frequency(&m, dp).map_err(|e| e.to_string())?;
    if (engine_ss - df_ss).abs() > 1e-9 {
        return Err(format!("{tag}: steady state {engine_ss} vs {df_ss}"));
    }
    let settled = res.frequency[0].last().unwrap() - F0;
    if (settled - df_ss).abs() >= 1e-3 {
        return Err(format!("{tag}: settled {settled} vs {df_ss}"));
    }

    // Stored energy H·rated, MW·s.
    let rocof0 = -dp * F0 / (2.0 * h * RATED_MW);
    let engine_rocof = initial_rocof(&m, dp).map_err(|e| e.to_string())?;
    if (engine_rocof - rocof0).abs() > 1e-12 {
        return Err(format!("{tag}: initial ROCOF {engine_rocof} vs {rocof0}"));
    }
    let k0 = (c.t_event / cfg.output_dt).round() as usize;
    let k1 = k0 + (0.5 / cfg.output_dt).round() as usize;
    let sim = slope(&res.frequency[0][k0..=k1], cfg.output_dt);
    if ((sim - rocof0) / rocof0).abs() >= 0.10 {
        return Err(format!("{tag}: ROCOF {sim} vs {rocof0}"));
    }
    Ok(())
}
