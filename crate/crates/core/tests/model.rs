use freqlab_core::grid::{
    load_system, serialize, system_inertia, validate, Area, ConverterControl, DeadbandKind,
    FleetKind, GeneratorFleet, Governor, GridModel, TieLine,
};
use proptest::prelude::*;

fn shipped(name: &str) -> String {
    let path = format!(
        "{}/../../data/models/{name}.toml",
        env!("CARGO_MANIFEST_DIR")
    );
    std::fs::read_to_string(path).unwrap()
}

const MODELS: [&str; 4] = ["ei-like", "wecc-like", "ercot-like", "example"];

fn governor() -> impl Strategy<Value = Option<Governor<f64>>> {
    prop::option::of((
        0.02f64..0.1,
        0.0f64..0.06,
        any::<bool>(),
        0.0f64..=1.0,
        0.0f64..=1.0,
        0.05f64..2.0,
        0.5f64..12.0,
    ))
    .prop_map(|g| {
        g.map(|(droop, db, offset, kg, room, tg, tt)| Governor {
            droop,
            deadband_hz: db,
            deadband_kind: if offset {
                DeadbandKind::Offset
            } else {
                DeadbandKind::Step
            },
            responsive_fraction: kg,
            // Fraction of spare capacity; scaled once ratings are known.
            headroom_mw: room,
            tg,
            tt,
        })
    })
}

fn converter() -> impl Strategy<Value = Option<ConverterControl<f64>>> {
    prop::option::of((
        0.0f64..200.0,
        0.0f64..=0.1,
        0.01f64..0.5,
        prop::option::of(0.02f64..0.1),
        0.01f64..1.0,
        0.0f64..=1.0,
    ))
    .prop_map(|c| {
        c.map(|(gain, cap, filt, droop, lag, room)| ConverterControl {
            synthetic_inertia_gain: gain,
            si_boost_limit: cap,
            si_filter_t: filt,
            droop,
            response_lag_t: lag,
            headroom_mw: room,
        })
    })
}

fn area(id: String) -> impl Strategy<Value = Area<f64>> {
    (
        (100.0f64..50_000.0, 1.0f64..1.5, 1.0f64..10.0, governor()),
        prop::option::of((10.0f64..20_000.0, 1.0f64..1.5, converter())),
        0.0f64..3.0,
    )
        .prop_map(move |((sync_mw, sync_over, h, gov), pv, damping)| {
            let mut fleets = vec![GeneratorFleet {
                id: format!("{id}-sync"),
                kind: FleetKind::Synchronous,
                rated_mw: sync_mw * sync_over,
                committed_mw: sync_mw,
                h,
                governor: gov.map(|mut g| {
                    g.headroom_mw *= sync_mw * sync_over - sync_mw;
                    g
                }),
                converter: None,
            }];
            if let Some((mw, over, conv)) = pv {
                fleets.push(GeneratorFleet {
                    id: format!("{id}-pv"),
                    kind: FleetKind::Pv,
                    rated_mw: mw * over,
                    committed_mw: mw,
                    h: 0.0,
                    governor: None,
                    converter: conv.map(|mut c| {
                        c.headroom_mw *= mw * over - mw;
                        c
                    }),
                });
            }
            Area {
                load_mw: fleets.iter().map(|f| f.committed_mw).sum(),
                id: id.clone(),
                damping,
                fleets,
                ufls: None,
                ffr: Vec::new(),
            }
        })
}

fn model() -> impl Strategy<Value = GridModel<f64>> {
    (1usize..=3)
        .prop_flat_map(|n| {
            (
                (0..n).map(|i| area(format!("a{i}"))).collect::<Vec<_>>(),
                prop::collection::vec((100.0f64..20_000.0, 0.0f64..500.0), n - 1),
                59.5f64..60.5,
            )
        })
        .prop_map(|(areas, ties, f_init)| {
            let tie_lines = ties
                .into_iter()
                .enumerate()
                .map(|(i, (k, d))| TieLine {
                    from: format!("a{i}"),
                    to: format!("a{}", i + 1),
                    k_sync: k,
                    limit_mw: None,
                    scheduled_mw: 0.0,
                    damping_mw_per_hz: d,
                })
                .collect();
            GridModel {
                name: "generated".into(),
                f0: 60.0,
                initial_frequency: f_init,
                areas,
                tie_lines,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn serialized_models_load_back_unchanged(m in model()) {
        prop_assert_eq!(validate(&m), vec![]);
        let back: GridModel<f64> = load_system(&serialize(&m).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn splitting_a_fleet_leaves_inertia_unchanged(
        which in 0usize..4,
        pick in any::<prop::sample::Index>(),
        share in 0.01f64..0.99,
    ) {
        let m: GridModel<f64> = load_system(&shipped(MODELS[which])).unwrap();
        let before = system_inertia(&m).unwrap();
        let spots: Vec<(usize, usize)> = m
            .areas
            .iter()
            .enumerate()
            .flat_map(|(a, area)| (0..area.fleets.len()).map(move |f| (a, f)))
            .filter(|&(a, f)| m.areas[a].fleets[f].kind == FleetKind::Synchronous)
            .collect();
        let (a, f) = spots[pick.index(spots.len())];
        let mut split = m.clone();
        let whole = split.areas[a].fleets.remove(f);
        let part = |s: f64, tag: &str| {
            let mut p = whole.clone();
            p.id = format!("{}-{tag}", whole.id);
            p.rated_mw = whole.rated_mw * s;
            p.committed_mw = whole.committed_mw * s;
            if let Some(g) = p.governor.as_mut() {
                g.headroom_mw = whole.governor.as_ref().unwrap().headroom_mw * s;
            }
            p
        };
        let (x, y) = (part(share, "x"), part(1.0 - share, "y"));
        split.areas[a].fleets.push(x);
        split.areas[a].fleets.push(y);
        prop_assert_eq!(validate(&split), vec![]);
        let after = system_inertia(&split).unwrap();
        prop_assert!((after.h_sys - before.h_sys).abs() <= 1e-12 * before.h_sys);
        prop_assert!((after.kinetic_mws - before.kinetic_mws).abs() <= 1e-12 * before.kinetic_mws);
    }
}

#[test]
fn shipped_models_round_trip_in_both_precisions() {
    for name in MODELS {
        let text = shipped(name);
        let m: GridModel<f64> = load_system(&text).unwrap();
        assert_eq!(load_system::<f64>(&serialize(&m).unwrap()).unwrap(), m);
        let s: GridModel<f32> = load_system(&text).unwrap();
        assert_eq!(load_system::<f32>(&serialize(&s).unwrap()).unwrap(), s);
    }
}

#[test]
fn shipped_models_carry_the_stated_inertia() {
    // Kinetic energy summed directly from the document's committed
    // synchronous fleets.
    for name in MODELS {
        let doc: toml::Value = toml::from_str(&shipped(name)).unwrap();
        let mut kinetic = 0.0;
        let mut rated = 0.0;
        for area in doc["areas"].as_array().unwrap() {
            for f in area["fleets"].as_array().unwrap() {
                let committed = f["committed_mw"].as_float().unwrap();
                if f["kind"].as_str() == Some("synchronous") && committed > 0.0 {
                    let r = f["rated_mw"].as_float().unwrap();
                    kinetic += f["h"].as_float().unwrap() * r;
                    rated += r;
                }
            }
        }
        let m: GridModel<f64> = load_system(&shipped(name)).unwrap();
        let s = system_inertia(&m).unwrap();
        assert!((s.kinetic_mws - kinetic).abs() < 1e-6, "{name}");
        assert!((s.h_sys - kinetic / rated).abs() < 1e-12, "{name}");
    }
}
