//! Exhaustive enumeration of build combinations, each dispatched by an
//! independent LP solver: the reference the branch-and-bound solver is
//! checked against.

#![allow(dead_code)]

use std::path::PathBuf;

use freqlab_expansion::*;
use microlp::{ComparisonOp, OptimizationDirection, Problem};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/expansion")
}

pub fn load_toy() -> ExpansionProblem {
    parse_problem(&std::fs::read_to_string(data_dir().join("two-region.toml")).unwrap()).unwrap()
}

pub fn max_steps(p: &ExpansionProblem, r: usize) -> usize {
    (p.regions[r].pv_build_limit_mw / p.build_increment_mw + 1e-9).floor() as usize
}

/// Total discounted cost of the cheapest dispatch for fixed builds (MW per
/// region per year), or `None` when no dispatch is feasible.
pub fn brute_cost(p: &ExpansionProblem, build_mw: &[Vec<f64>]) -> Option<f64> {
    let nr = p.regions.len();
    let installed =
        |r: usize, y: usize| p.regions[r].existing_pv_mw + build_mw[r][..=y].iter().sum::<f64>();
    let region_of = |id: &str| p.regions.iter().position(|r| r.id == id).unwrap();
    let mut total = 0.0;
    for (y, year) in p.years.iter().enumerate() {
        let d = year.discount;
        let mut fixed: f64 = p
            .units
            .iter()
            .map(|u| u.fixed_om_per_mw_year * u.rated_mw)
            .sum();
        for r in 0..nr {
            fixed += p.pv_fixed_om_per_mw_year * installed(r, y);
            fixed += (year.pv_capex_per_mw + p.regions[r].land_price_per_mw) * build_mw[r][y];
        }
        total += d * fixed;

        for (b, block) in p.blocks.iter().enumerate() {
            for (r, region) in p.regions.iter().enumerate() {
                let load = block.load_mw.get(&region.id).copied().unwrap_or(0.0) * year.load_scale;
                let largest = if p.reserve.cover_largest_unit {
                    p.units
                        .iter()
                        .filter(|u| u.region == region.id)
                        .map(|u| u.rated_mw)
                        .fold(0.0, f64::max)
                } else {
                    0.0
                };
                let need = load + (p.reserve.margin * load).max(largest);
                let have: f64 = p
                    .units
                    .iter()
                    .filter(|u| u.region == region.id)
                    .map(|u| u.rated_mw * u.availability)
                    .sum::<f64>()
                    + region.pv_availability[b] * installed(r, y);
                if have < need - 1e-9 {
                    return None;
                }
            }
        }

        let mut lp = Problem::new(OptimizationDirection::Minimize);
        let mut balance: Vec<Vec<Vec<(microlp::Variable, f64)>>> =
            vec![vec![Vec::new(); nr]; p.blocks.len()];
        let mut green: Vec<Vec<(microlp::Variable, f64)>> = vec![Vec::new(); nr];
        for (b, block) in p.blocks.iter().enumerate() {
            let h = block.hours;
            for u in &p.units {
                let mc = u.heat_rate * u.fuel_price
                    + u.variable_om_per_mwh
                    + u.emission_rate * u.emission_price;
                let v = lp.add_var(d * h * mc, (0.0, u.rated_mw * u.availability));
                let r = region_of(&u.region);
                balance[b][r].push((v, 1.0));
                if u.renewable {
                    green[r].push((v, h));
                }
            }
            for (r, region) in p.regions.iter().enumerate() {
                let load = block.load_mw.get(&region.id).copied().unwrap_or(0.0) * year.load_scale;
                let pv = lp.add_var(0.0, (0.0, region.pv_availability[b] * installed(r, y)));
                let us = lp.add_var(d * h * region.lost_load_price_per_mwh, (0.0, load));
                balance[b][r].push((pv, 1.0));
                balance[b][r].push((us, 1.0));
                green[r].push((pv, h));
            }
            for itf in &p.interfaces {
                let (a, z) = (region_of(&itf.from), region_of(&itf.to));
                let fwd = lp.add_var(d * h * itf.wheeling_price_per_mwh, (0.0, itf.capacity_mw));
                let rev = lp.add_var(d * h * itf.wheeling_price_per_mwh, (0.0, itf.capacity_mw));
                balance[b][a].extend([(fwd, -1.0), (rev, 1.0)]);
                balance[b][z].extend([(fwd, 1.0), (rev, -1.0)]);
            }
        }
        for (b, block) in p.blocks.iter().enumerate() {
            for (r, region) in p.regions.iter().enumerate() {
                let load = block.load_mw.get(&region.id).copied().unwrap_or(0.0) * year.load_scale;
                lp.add_constraint(balance[b][r].as_slice(), ComparisonOp::Eq, load);
            }
        }
        for (r, region) in p.regions.iter().enumerate() {
            if let Some(floor) = region.renewable_floor {
                let demand: f64 = p
                    .blocks
                    .iter()
                    .map(|bl| {
                        bl.hours
                            * bl.load_mw.get(&region.id).copied().unwrap_or(0.0)
                            * year.load_scale
                    })
                    .sum();
                lp.add_constraint(green[r].as_slice(), ComparisonOp::Ge, floor * demand);
            }
        }
        match lp.solve() {
            Ok(out) => total += out.into_solution().unwrap().objective(),
            Err(microlp::Error::Infeasible) => return None,
            Err(e) => panic!("oracle LP failed: {e}"),
        }
    }
    Some(total)
}

pub struct Enumeration {
    pub combinations: usize,
    pub feasible: usize,
    pub best: Option<(f64, Vec<Vec<f64>>)>,
}

/// Every build vector within `[lo, hi]` increments per region-year, in
/// lexicographic order; ties keep the first found.
pub fn enumerate_box(p: &ExpansionProblem, lo: &[usize], hi: &[usize]) -> Enumeration {
    let (nr, ny) = (p.regions.len(), p.years.len());
    let mut steps = lo.to_vec();
    let mut out = Enumeration {
        combinations: 0,
        feasible: 0,
        best: None,
    };
    loop {
        out.combinations += 1;
        let build: Vec<Vec<f64>> = (0..nr)
            .map(|r| {
                (0..ny)
                    .map(|y| steps[r * ny + y] as f64 * p.build_increment_mw)
                    .collect()
            })
            .collect();
        if let Some(c) = brute_cost(p, &build) {
            out.feasible += 1;
            if out.best.as_ref().is_none_or(|(b, _)| c < *b) {
                out.best = Some((c, build));
            }
        }
        let mut k = steps.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if steps[k] < hi[k] {
                steps[k] += 1;
                break;
            }
            steps[k] = lo[k];
        }
    }
}

pub fn enumerate_all(p: &ExpansionProblem) -> Enumeration {
    let (nr, ny) = (p.regions.len(), p.years.len());
    let hi: Vec<usize> = (0..nr * ny).map(|k| max_steps(p, k / ny)).collect();
    enumerate_box(p, &vec![0; nr * ny], &hi)
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Solver and oracle agree on feasibility and optimal cost; the solver's
/// plan is feasible and its cost terms add up.
pub fn assert_matches_oracle(p: &ExpansionProblem) {
    let e = enumerate_all(p);
    assert!(
        e.combinations <= 1000,
        "instance too large to enumerate: {}",
        e.combinations
    );
    match (solve(p), e.best) {
        (Ok(s), Some((cost, _))) => {
            assert!(
                close(s.costs.total(), cost),
                "solver {} vs oracle {cost}",
                s.costs.total()
            );
            assert_eq!(s.certificate.gap, 0.0);
            let v = check_feasibility(&s.plan, p).unwrap();
            assert!(v.is_empty(), "{v:?}");
            let b = brute_cost(p, &s.plan.pv_build_mw).expect("oracle rejects solver builds");
            assert!(close(b, cost));
        }
        (Err(SolveError::Infeasible { .. }), None) => {}
        (s, o) => panic!("solver {s:?} disagrees with oracle {o:?}"),
    }
}

/// Variants of the toy that move the optimum around.
pub fn fixed_instances() -> Vec<(&'static str, ExpansionProblem)> {
    let base = load_toy();
    let mut out = vec![("toy", base.clone())];

    let mut p = base.clone();
    p.regions[0].renewable_floor = Some(0.08);
    out.push(("higher floor", p));

    let mut p = base.clone();
    p.years[0].pv_capex_per_mw = 40000.0;
    p.years[1].pv_capex_per_mw = 30000.0;
    out.push(("cheap pv", p));

    let mut p = base.clone();
    p.interfaces[0].capacity_mw = 0.0;
    p.regions[1].renewable_floor = Some(0.04);
    out.push(("islanded", p));

    let mut p = base.clone();
    p.units[0].emission_price = 80.0;
    p.units[1].emission_price = 80.0;
    p.reserve.margin = 0.2;
    out.push(("carbon price", p));

    let mut p = base.clone();
    p.regions[0].lost_load_price_per_mwh = 30.0;
    p.units[0].fuel_price = 6.0;
    out.push(("cheap shedding", p));

    let mut p = base.clone();
    p.regions[0].renewable_floor = Some(0.5);
    out.push(("unreachable floor", p));

    let mut p = base;
    p.years.truncate(1);
    p.regions[0].pv_build_limit_mw = 450.0;
    p.regions[1].pv_build_limit_mw = 450.0;
    out.push(("one year, fine steps", p));
    out
}
