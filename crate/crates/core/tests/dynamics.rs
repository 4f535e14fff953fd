use freqlab_core::engine::{simulate, Channel, Contingency, SimConfig};
use freqlab_core::grid::{load_system, GridModel};
use freqlab_core::metrics::{nadir, FrequencyTrace};
use freqlab_core::protection::ProtectionScheme;
use freqlab_core::scenario::load_scenario;

#[path = "support/linear_oracle.rs"]
mod linear_oracle;

fn shipped(name: &str) -> GridModel<f64> {
    let path = format!(
        "{}/../../data/models/{name}.toml",
        env!("CARGO_MANIFEST_DIR")
    );
    load_system(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn single_area_runs_match_the_closed_form_response() {
    let started = std::time::Instant::now();
    for (h, r, kg, d, dp) in linear_oracle::CASES {
        linear_oracle::check_case(h, r, kg, d, dp).unwrap();
    }
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

fn two_identical_areas() -> GridModel<f64> {
    let area = |id: &str| {
        format!(
            r#"
[[areas]]
id = "{id}"
load_mw = 2000.0
[[areas.fleets]]
id = "{id}-steam"
kind = "synchronous"
rated_mw = 2500.0
committed_mw = 2000.0
h = 4.0
[areas.fleets.governor]
droop = 0.05
deadband_hz = 0.036
headroom_mw = 400.0
"#
        )
    };
    let text = format!(
        "name = \"twin\"\n{}{}\n[[tie_lines]]\nfrom = \"west\"\nto = \"east\"\nk_sync = 1500.0\ndamping_mw_per_hz = 100.0\n",
        area("west"),
        area("east")
    );
    load_system(&text).unwrap()
}

#[test]
fn mirrored_contingencies_give_mirrored_traces() {
    let m = two_identical_areas();
    let cfg = SimConfig::default();
    let p = ProtectionScheme::none();
    let west = simulate(&m, &Contingency::new("west", 150.0, 16.0), &p, &cfg).unwrap();
    let east = simulate(&m, &Contingency::new("east", 150.0, 16.0), &p, &cfg).unwrap();
    for k in 0..west.time.len() {
        assert!((west.frequency[0][k] - east.frequency[1][k]).abs() < 1e-9);
        assert!((west.frequency[1][k] - east.frequency[0][k]).abs() < 1e-9);
        assert!((west.mech_mw[0][k] - east.mech_mw[1][k]).abs() < 1e-6);
    }
    // The area that lost generation falls first.
    let k = west.time.iter().position(|&t| t > 16.0).unwrap();
    assert!(west.frequency[0][k] < west.frequency[1][k]);
}

#[test]
fn equal_losses_in_twin_areas_leave_the_tie_idle() {
    let mut m = two_identical_areas();
    // Same total loss split evenly: start both areas short by the same amount.
    for a in &mut m.areas {
        a.load_mw += 75.0;
    }
    let cfg = SimConfig::default();
    let res = freqlab_core::engine::simulate_unbalanced(
        &m,
        &Contingency::new("west", 0.0, 16.0),
        &ProtectionScheme::none(),
        &cfg,
    )
    .unwrap();
    for k in 0..res.time.len() {
        assert_eq!(res.frequency[0][k], res.frequency[1][k]);
    }
}

#[test]
fn repeated_runs_are_bit_identical() {
    let m = shipped("ercot-like");
    let c = Contingency::new("south", 2740.0, 16.0);
    let p = ProtectionScheme::preset("ercot-study").unwrap();
    let cfg = SimConfig::covering(&c);
    let a = simulate(&m, &c, &p, &cfg).unwrap();
    let b = simulate(&m, &c, &p, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
}

#[test]
fn halving_the_step_moves_the_nadir_by_under_a_tenth_of_a_millihertz() {
    for (model, area, mw) in [
        ("ei-like", "east", 4500.0),
        ("wecc-like", "southwest", 2625.0),
        ("ercot-like", "south", 2740.0),
    ] {
        for sc in ["s1", "s2", "s3", "s4"] {
            let path = format!(
                "{}/../../data/scenarios/{sc}.toml",
                env!("CARGO_MANIFEST_DIR")
            );
            let spec = load_scenario::<f64>(&std::fs::read_to_string(path).unwrap()).unwrap();
            let m = spec.apply(&shipped(model)).unwrap();
            let c = Contingency::new(area, mw, 16.0);
            let run = |dt: f64| {
                let cfg = SimConfig {
                    dt,
                    ..SimConfig::covering(&c)
                };
                let r = simulate(&m, &c, &ProtectionScheme::none(), &cfg).unwrap();
                nadir(&FrequencyTrace::from_result(&r, Channel::Coi).unwrap()).f_min
            };
            let (coarse, fine) = (run(0.005), run(0.0025));
            assert!(
                (coarse - fine).abs() < 1e-4,
                "{model} {sc}: {coarse} vs {fine}"
            );
        }
    }
}

#[test]
fn inertial_power_accounts_for_the_system_imbalance() {
    let m = shipped("wecc-like");
    let c = Contingency::new("southwest", 2625.0, 16.0);
    let cfg = SimConfig {
        dt: 0.005,
        horizon_s: 40.0,
        output_dt: 0.005,
    };
    let r = simulate(
        &m,
        &c,
        &ProtectionScheme::preset("wecc-primary").unwrap(),
        &cfg,
    )
    .unwrap();
    let na = r.area_ids.len();
    let damping: Vec<f64> = m
        .areas
        .iter()
        .map(|a| a.damping * a.load_mw / m.f0)
        .collect();
    let k_event = (c.t_event / cfg.output_dt).round() as usize;
    let event_ks: Vec<usize> = r
        .events
        .iter()
        .map(|e| (e.t / cfg.output_dt).round() as usize)
        .collect();
    let mut worst: f64 = 0.0;
    for k in 1..r.time.len() - 1 {
        if k.abs_diff(k_event) <= 1 || event_ks.iter().any(|&e| k.abs_diff(e) <= 1) {
            continue;
        }
        let lost = if r.time[k] >= c.t_event {
            c.delta_p_mw
        } else {
            0.0
        };
        let mut inertial = 0.0;
        let mut supplied = -lost;
        for a in 0..na {
            let dfdt = (r.frequency[a][k + 1] - r.frequency[a][k - 1]) / (2.0 * cfg.output_dt);
            inertial += r.inertia_weights[a] * dfdt;
            supplied += r.mech_mw[a][k] + r.conv_mw[a][k] + r.ffr_mw[a][k] + r.ufls_mw[a][k]
                - damping[a] * (r.frequency[a][k] - r.initial_frequency);
        }
        worst = worst.max((inertial - supplied).abs());
    }
    assert!(worst < 0.01 * c.delta_p_mw, "largest residual {worst} MW");
}
