use freqlab_core::engine::{simulate, Channel, Contingency, SimConfig};
use freqlab_core::grid::load_system;
use freqlab_core::metrics::{
    nerc_response_from_values, read_trace_csv, write_trace_csv, FrequencyTrace, MetricsReport,
    TraceSource,
};
use freqlab_core::protection::ProtectionScheme;
use proptest::prelude::*;

fn simulated(name: &str, area: &str, mw: f64) -> FrequencyTrace<f64> {
    let path = format!(
        "{}/../../data/models/{name}.toml",
        env!("CARGO_MANIFEST_DIR")
    );
    let m = load_system(&std::fs::read_to_string(path).unwrap()).unwrap();
    let c = Contingency::new(area, mw, 16.0);
    let r = simulate(&m, &c, &ProtectionScheme::none(), &SimConfig::covering(&c)).unwrap();
    FrequencyTrace::from_result(&r, Channel::Coi).unwrap()
}

/// Synthetic dip: linear fall to a nadir, partial recovery, flat tail.
fn dip() -> impl Strategy<Value = FrequencyTrace<f64>> {
    (
        prop::sample::select(vec![0.01, 0.02, 0.05, 0.1]),
        16.0f64..30.0,
        0.02f64..0.6,
        0.5f64..10.0,
        0.1f64..0.9,
        5.0f64..20.0,
    )
        .prop_map(|(dt, t0, depth, fall_s, recover, rise_s)| {
            let n = ((t0 + 60.0) / dt).ceil() as usize;
            let samples = (0..n)
                .map(|k| {
                    let t = k as f64 * dt - t0;
                    let dev = if t < 0.0 {
                        0.0
                    } else if t < fall_s {
                        -depth * t / fall_s
                    } else if t < fall_s + rise_s {
                        -depth + depth * recover * (t - fall_s) / rise_s
                    } else {
                        -depth * (1.0 - recover)
                    };
                    60.0 + dev
                })
                .collect();
            FrequencyTrace::new(0.0, dt, samples, t0, TraceSource::Measured).unwrap()
        })
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

fn assert_shift_invariant(
    trace: &FrequencyTrace<f64>,
    shift: f64,
    dp: f64,
) -> Result<(), TestCaseError> {
    let a = MetricsReport::from_trace(trace, Some(dp)).unwrap();
    let b = MetricsReport::from_trace(&trace.shifted(shift), Some(dp)).unwrap();
    prop_assert!(same(a.nadir_hz, b.nadir_hz));
    prop_assert!(same(a.t_nadir + shift, b.t_nadir));
    prop_assert!(same(a.rocof_mhz_per_s, b.rocof_mhz_per_s));
    prop_assert!(same(a.settling_hz, b.settling_hz));
    prop_assert!(same(a.value_a_hz, b.value_a_hz));
    prop_assert!(same(a.value_b_hz, b.value_b_hz));
    match (a.nerc_response_mw_per_0p1hz, b.nerc_response_mw_per_0p1hz) {
        (Some(x), Some(y)) => prop_assert!(same(x, y)),
        (x, y) => prop_assert_eq!(x, y),
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn shifting_time_and_event_together_changes_no_metric(
        trace in dip(),
        shift in -1000.0f64..1000.0,
        dp in 10.0f64..5000.0,
    ) {
        assert_shift_invariant(&trace, shift, dp)?;
    }

    #[test]
    fn nerc_response_is_homogeneous(
        dp in 1.0f64..10_000.0,
        a in 59.5f64..60.5,
        drop in 0.001f64..1.0,
        scale in 0.01f64..100.0,
    ) {
        let b = a - drop;
        let base = nerc_response_from_values(dp, a, b).unwrap();
        // Scale the disturbance and the A-B gap together.
        let scaled = nerc_response_from_values(dp * scale, a, a - drop * scale).unwrap();
        prop_assert!(same(base, scaled), "{base} vs {scaled}");
        prop_assert!(same(base, dp / (drop * 10.0)));
    }
}

#[test]
fn simulated_traces_are_shift_invariant() {
    for (model, area, mw) in [
        ("ei-like", "east", 4500.0),
        ("wecc-like", "southwest", 2625.0),
        ("ercot-like", "south", 2740.0),
    ] {
        let trace = simulated(model, area, mw);
        for shift in [-16.0, 0.35, 1234.5] {
            assert_shift_invariant(&trace, shift, mw).unwrap();
        }
    }
}

#[test]
fn traces_round_trip_through_csv() {
    let trace = simulated("wecc-like", "southwest", 2625.0);
    let text = write_trace_csv(&trace);
    let back: FrequencyTrace<f64> = read_trace_csv(&text, None, trace.t0).unwrap();
    assert_eq!(back.samples.len(), trace.samples.len());
    for (x, y) in back.samples.iter().zip(&trace.samples) {
        // Six decimals on disk.
        assert!((x - y).abs() <= 5e-7 + 1e-12);
    }
    let a = MetricsReport::from_trace(&trace, Some(2625.0)).unwrap();
    let b = MetricsReport::from_trace(&back, Some(2625.0)).unwrap();
    assert!((a.nadir_hz - b.nadir_hz).abs() < 1e-6);
    assert!((a.settling_hz - b.settling_hz).abs() < 1e-6);
    assert!((a.rocof_mhz_per_s - b.rocof_mhz_per_s).abs() < 0.1);
}
