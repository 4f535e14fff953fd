use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plan::{
    evaluate_cost, BlockDispatch, ConstraintFamily, CostBreakdown, ExpansionPlan, PlanError,
};
use crate::problem::{ExpansionProblem, ProblemError};
use crate::simplex::{LinearProgram, LpError, LpSolution, Relation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("infeasible: {family} constraint cannot be met ({detail})")]
    Infeasible {
        family: ConstraintFamily,
        detail: String,
    },
    #[error("numerical failure: {0}")]
    Numerical(#[from] LpError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Proof that the returned plan is optimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub objective: f64,
    /// Smallest relaxation bound among all leaves of the search tree.
    pub lower_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
}

/// One branch-and-bound node: build-count box and its relaxation bound.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
    /// `None` when the relaxation is infeasible.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solved {
    pub plan: ExpansionPlan,
    pub costs: CostBreakdown,
    pub certificate: Certificate,
    pub nodes: Vec<NodeRecord>,
}

/// Variable layout of the joint build and dispatch program.
struct Layout {
    ny: usize,
    nb: usize,
    nr: usize,
    nu: usize,
    ni: usize,
    per_block: usize,
}

impl Layout {
    fn new(p: &ExpansionProblem) -> Self {
        let (nr, nu, ni) = (p.regions.len(), p.units.len(), p.interfaces.len());
        Self {
            ny: p.years.len(),
            nb: p.blocks.len(),
            nr,
            nu,
            ni,
            per_block: nu + 2 * nr + 2 * ni,
        }
    }

    fn builds(&self) -> usize {
        self.nr * self.ny
    }

    fn build(&self, r: usize, y: usize) -> usize {
        r * self.ny + y
    }

    fn block0(&self, y: usize, b: usize) -> usize {
        self.builds() + (y * self.nb + b) * self.per_block
    }

    fn unit(&self, y: usize, b: usize, u: usize) -> usize {
        self.block0(y, b) + u
    }

    fn pv(&self, y: usize, b: usize, r: usize) -> usize {
        self.block0(y, b) + self.nu + r
    }

    fn unserved(&self, y: usize, b: usize, r: usize) -> usize {
        self.block0(y, b) + self.nu + self.nr + r
    }

    fn forward(&self, y: usize, b: usize, i: usize) -> usize {
        self.block0(y, b) + self.nu + 2 * self.nr + i
    }

    fn reverse(&self, y: usize, b: usize, i: usize) -> usize {
        self.block0(y, b) + self.nu + 2 * self.nr + self.ni + i
    }
}

/// Costs that no decision can change: unit fixed O&M and existing-PV O&M.
fn fixed_costs(p: &ExpansionProblem) -> f64 {
    let per_year: f64 = p
        .units
        .iter()
        .map(|u| u.fixed_om_per_mw_year * u.rated_mw)
        .sum::<f64>()
        + p.regions
            .iter()
            .map(|r| p.pv_fixed_om_per_mw_year * r.existing_pv_mw)
            .sum::<f64>();
    p.years.iter().map(|y| y.discount * per_year).sum()
}

/// Linear relaxation with build counts boxed to `[lo, hi]` increments.
fn relaxation(p: &ExpansionProblem, lay: &Layout, lo: &[usize], hi: &[usize]) -> LinearProgram {
    let inc = p.build_increment_mw;
    let mut lp = LinearProgram::default();
    for r in 0..lay.nr {
        for y in 0..lay.ny {
            let k = lay.build(r, y);
            let later_om: f64 =
                p.years[y..].iter().map(|yr| yr.discount).sum::<f64>() * p.pv_fixed_om_per_mw_year;
            let c = inc
                * (p.years[y].discount
                    * (p.years[y].pv_capex_per_mw + p.regions[r].land_price_per_mw)
                    + later_om);
            lp.add_var(c, lo[k] as f64, hi[k] as f64);
        }
    }
    for y in 0..lay.ny {
        let dy = p.years[y].discount;
        for b in 0..lay.nb {
            let h = p.blocks[b].hours;
            for unit in &p.units {
                lp.add_var(dy * h * unit.marginal_cost(), 0.0, unit.available_mw());
            }
            for _ in 0..lay.nr {
                lp.add_var(0.0, 0.0, f64::INFINITY);
            }
            for r in 0..lay.nr {
                lp.add_var(
                    dy * h * p.regions[r].lost_load_price_per_mwh,
                    0.0,
                    p.load(y, b, r),
                );
            }
            for _ in 0..2 {
                for itf in &p.interfaces {
                    lp.add_var(dy * h * itf.wheeling_price_per_mwh, 0.0, itf.capacity_mw);
                }
            }
        }
    }

    let installed_terms = |r: usize, y: usize, coef: f64| -> Vec<(usize, f64)> {
        (0..=y).map(|yy| (lay.build(r, yy), coef * inc)).collect()
    };
    for y in 0..lay.ny {
        for b in 0..lay.nb {
            for r in 0..lay.nr {
                let mut terms = vec![(lay.pv(y, b, r), 1.0), (lay.unserved(y, b, r), 1.0)];
                for u in 0..lay.nu {
                    if p.unit_region(u) == r {
                        terms.push((lay.unit(y, b, u), 1.0));
                    }
                }
                for i in 0..lay.ni {
                    let (from, to) = p.interface_ends(i);
                    if to == r {
                        terms.push((lay.forward(y, b, i), 1.0));
                        terms.push((lay.reverse(y, b, i), -1.0));
                    } else if from == r {
                        terms.push((lay.forward(y, b, i), -1.0));
                        terms.push((lay.reverse(y, b, i), 1.0));
                    }
                }
                lp.add_row(terms, Relation::Eq, p.load(y, b, r));

                let a = p.regions[r].pv_availability[b];
                let mut terms = vec![(lay.pv(y, b, r), 1.0)];
                terms.extend(installed_terms(r, y, -a));
                lp.add_row(terms, Relation::Le, a * p.regions[r].existing_pv_mw);

                let short = p.adequacy_requirement(y, b, r)
                    - p.unit_capacity(r)
                    - a * p.regions[r].existing_pv_mw;
                if short > 0.0 {
                    lp.add_row(installed_terms(r, y, a), Relation::Ge, short);
                }
            }
        }
        for r in 0..lay.nr {
            let Some(floor) = p.regions[r].renewable_floor else {
                continue;
            };
            let mut terms = Vec::new();
            let mut demand = 0.0;
            for b in 0..lay.nb {
                let h = p.blocks[b].hours;
                demand += h * p.load(y, b, r);
                terms.push((lay.pv(y, b, r), h));
                for u in 0..lay.nu {
                    if p.units[u].renewable && p.unit_region(u) == r {
                        terms.push((lay.unit(y, b, u), h));
                    }
                }
            }
            lp.add_row(terms, Relation::Ge, floor * demand);
        }
    }
    lp
}

fn extract_plan(p: &ExpansionProblem, lay: &Layout, builds: &[usize], x: &[f64]) -> ExpansionPlan {
    let mut plan = ExpansionPlan::empty(p);
    let clean = |v: f64| if v.abs() < 1e-9 { 0.0 } else { v };
    for r in 0..lay.nr {
        for y in 0..lay.ny {
            plan.pv_build_mw[r][y] = builds[lay.build(r, y)] as f64 * p.build_increment_mw;
        }
    }
    for y in 0..lay.ny {
        for b in 0..lay.nb {
            let mut d = BlockDispatch::zeros(p);
            for u in 0..lay.nu {
                d.unit_mw[u] = clean(x[lay.unit(y, b, u)]);
            }
            for r in 0..lay.nr {
                d.pv_mw[r] = clean(x[lay.pv(y, b, r)]);
                d.unserved_mw[r] = clean(x[lay.unserved(y, b, r)]);
            }
            for i in 0..lay.ni {
                d.flow_forward_mw[i] = clean(x[lay.forward(y, b, i)]);
                d.flow_reverse_mw[i] = clean(x[lay.reverse(y, b, i)]);
            }
            plan.dispatch[y][b] = d;
        }
    }
    plan
}

/// Names the constraint family that makes the problem infeasible even with
/// every region building as fast as allowed.
fn diagnose(p: &ExpansionProblem) -> SolveError {
    let ny = p.years.len();
    let max_installed = |r: usize, y: usize| {
        p.regions[r].existing_pv_mw
            + (y + 1) as f64 * p.max_increments(r) as f64 * p.build_increment_mw
    };
    for y in 0..ny {
        for b in 0..p.blocks.len() {
            for (r, region) in p.regions.iter().enumerate() {
                let avail = p.unit_capacity(r) + region.pv_availability[b] * max_installed(r, y);
                let need = p.adequacy_requirement(y, b, r);
                if avail < need {
                    return SolveError::Infeasible {
                        family: ConstraintFamily::CapacityAdequacy,
                        detail: format!(
                            "region {} year {y} block {}: at most {avail} MW available against {need} MW required",
                            region.id, p.blocks[b].id
                        ),
                    };
                }
            }
        }
    }
    let floored: Vec<&str> = p
        .regions
        .iter()
        .filter(|r| r.renewable_floor.is_some_and(|f| f > 0.0))
        .map(|r| r.id.as_str())
        .collect();
    SolveError::Infeasible {
        family: ConstraintFamily::RenewablePortfolio,
        detail: format!(
            "floors in {} exceed the renewable energy the system can absorb",
            floored.join(", ")
        ),
    }
}

fn most_fractional(x: &[f64], n: usize) -> Option<usize> {
    let mut pick = None;
    let mut best = 0.0;
    for (k, v) in x[..n].iter().enumerate() {
        let frac = v - v.floor();
        let dist = frac.min(1.0 - frac);
        if dist > 1e-6 && dist > best {
            best = dist;
            pick = Some(k);
        }
    }
    pick
}

/// Exact minimum-cost plan by depth-first branch-and-bound over build counts.
pub fn solve(p: &ExpansionProblem) -> Result<Solved, SolveError> {
    p.validate()?;
    p.check_size()?;
    let lay = Layout::new(p);
    let nk = lay.builds();
    let constant = fixed_costs(p);
    let mut hi0 = vec![0; nk];
    for r in 0..lay.nr {
        for y in 0..lay.ny {
            hi0[lay.build(r, y)] = p.max_increments(r);
        }
    }

    let mut stack = vec![(vec![0; nk], hi0)];
    let mut records = Vec::new();
    let mut incumbent: Option<(f64, Vec<usize>, LpSolution)> = None;
    let mut lower_bound = f64::INFINITY;
    let mut iterations = 0;
    while let Some((lo, hi)) = stack.pop() {
        let sol = match relaxation(p, &lay, &lo, &hi).solve() {
            Ok(s) => s,
            Err(LpError::Infeasible) => {
                records.push(NodeRecord {
                    lo,
                    hi,
                    bound: None,
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        iterations += sol.iterations;
        let bound = sol.objective + constant;
        records.push(NodeRecord {
            lo: lo.clone(),
            hi: hi.clone(),
            bound: Some(bound),
        });
        if let Some((best, ..)) = &incumbent {
            if bound >= *best {
                lower_bound = lower_bound.min(bound);
                continue;
            }
        }
        match most_fractional(&sol.x, nk) {
            None => {
                let builds: Vec<usize> = sol.x[..nk].iter().map(|v| v.round() as usize).collect();
                lower_bound = lower_bound.min(bound);
                incumbent = Some((bound, builds, sol));
            }
            Some(k) => {
                let v = sol.x[k];
                let mut down_hi = hi.clone();
                down_hi[k] = v.floor() as usize;
                let mut up_lo = lo.clone();
                up_lo[k] = v.ceil() as usize;
                let down = (lo, down_hi);
                let up = (up_lo, hi);
                if v - v.floor() < 0.5 {
                    stack.push(up);
                    stack.push(down);
                } else {
                    stack.push(down);
                    stack.push(up);
                }
            }
        }
    }

    let Some((objective, builds, sol)) = incumbent else {
        return Err(diagnose(p));
    };
    let plan = extract_plan(p, &lay, &builds, &sol.x);
    let costs = evaluate_cost(&plan, p)?;
    let lower_bound = lower_bound.min(objective);
    Ok(Solved {
        plan,
        costs,
        certificate: Certificate {
            objective,
            lower_bound,
            gap: objective - lower_bound,
            nodes: records.len(),
            lp_iterations: iterations,
        },
        nodes: records,
    })
}

/// Optimal dispatch and cost for fixed build counts, or `None` when those
/// builds leave the problem infeasible.
pub fn dispatch_for(
    p: &ExpansionProblem,
    builds: &[usize],
) -> Result<Option<(ExpansionPlan, CostBreakdown)>, SolveError> {
    p.validate()?;
    let lay = Layout::new(p);
    match relaxation(p, &lay, builds, builds).solve() {
        Ok(sol) => {
            let plan = extract_plan(p, &lay, builds, &sol.x);
            let costs = evaluate_cost(&plan, p)?;
            Ok(Some((plan, costs)))
        }
        Err(LpError::Infeasible) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Build table, per-block dispatch summary, cost breakdown and certificate.
pub fn report(p: &ExpansionProblem, s: &Solved) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "PV builds (MW)");
    let _ = write!(out, "{:<12}", "Region");
    for y in 0..p.years.len() {
        let _ = write!(out, "{:>10}", format!("Year {}", y + 1));
    }
    let _ = writeln!(out);
    for (r, region) in p.regions.iter().enumerate() {
        let _ = write!(out, "{:<12}", region.id);
        for y in 0..p.years.len() {
            let _ = write!(out, "{:>10.1}", s.plan.pv_build_mw[r][y]);
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Dispatch (MW)");
    let _ = writeln!(
        out,
        "{:<6}{:<12}{:>12}{:>12}{:>12}{:>12}",
        "Year", "Block", "Units", "PV", "Unserved", "Interface"
    );
    for y in 0..p.years.len() {
        for (b, block) in p.blocks.iter().enumerate() {
            let d = &s.plan.dispatch[y][b];
            let flow: f64 = d.flow_forward_mw.iter().chain(&d.flow_reverse_mw).sum();
            let _ = writeln!(
                out,
                "{:<6}{:<12}{:>12.1}{:>12.1}{:>12.1}{:>12.1}",
                y + 1,
                block.id,
                d.unit_mw.iter().sum::<f64>(),
                d.pv_mw.iter().sum::<f64>(),
                d.unserved_mw.iter().sum::<f64>(),
                flow
            );
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Cost breakdown");
    let _ = writeln!(out, "{}", s.costs);
    let _ = writeln!(out);
    let c = &s.certificate;
    let _ = writeln!(out, "Optimality certificate");
    let _ = writeln!(out, "objective    {:.6}", c.objective);
    let _ = writeln!(out, "lower bound  {:.6}", c.lower_bound);
    let _ = writeln!(out, "gap          {}", c.gap);
    let _ = writeln!(out, "nodes        {}", c.nodes);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::check_feasibility;
    use crate::problem::parse_problem;

    pub(crate) const ONE_REGION: &str = r#"
build_increment_mw = 10.0
[reserve]
margin = 0.1
cover_largest_unit = false
[[years]]
discount = 1.0
pv_capex_per_mw = 1000.0
[[blocks]]
id = "day"
hours = 4380.0
load_mw = { a = 100.0 }
[[blocks]]
id = "night"
hours = 4380.0
load_mw = { a = 60.0 }
[[regions]]
id = "a"
land_price_per_mw = 0.0
lost_load_price_per_mwh = 5000.0
pv_build_limit_mw = 200.0
pv_availability = [0.5, 0.0]
[[units]]
id = "gas"
region = "a"
rated_mw = 200.0
availability = 0.9
heat_rate = 0.01
fuel_price = 1.0
"#;

    #[test]
    fn adequate_system_builds_nothing() {
        let p = parse_problem(ONE_REGION).unwrap();
        let s = solve(&p).unwrap();
        assert!(s.plan.pv_build_mw[0].iter().all(|&v| v == 0.0));
        assert_eq!(s.certificate.gap, 0.0);
        assert!(check_feasibility(&s.plan, &p).unwrap().is_empty());
    }

    #[test]
    fn floor_forces_the_smallest_qualifying_build() {
        // Demand energy 4380 * 160 MWh; half of it from PV at 0.5 availability
        // in the day block needs 160 MW installed.
        let text = ONE_REGION.replace("pv_availability", "renewable_floor = 0.5\npv_availability");
        let p = parse_problem(&text).unwrap();
        let s = solve(&p).unwrap();
        assert_eq!(s.plan.pv_build_mw[0][0], 160.0);
        assert!(check_feasibility(&s.plan, &p).unwrap().is_empty());
        assert_eq!(s.certificate.gap, 0.0);
    }

    #[test]
    fn unreachable_floor_is_named() {
        let text = ONE_REGION.replace("pv_availability", "renewable_floor = 0.9\npv_availability");
        let p = parse_problem(&text).unwrap();
        match solve(&p) {
            Err(SolveError::Infeasible { family, .. }) => {
                assert_eq!(family, ConstraintFamily::RenewablePortfolio)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inadequate_capacity_is_named() {
        let text = ONE_REGION.replace("rated_mw = 200.0", "rated_mw = 50.0");
        let p = parse_problem(&text).unwrap();
        match solve(&p) {
            Err(SolveError::Infeasible { family, .. }) => {
                assert_eq!(family, ConstraintFamily::CapacityAdequacy)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reported_cost_matches_bound() {
        let text = ONE_REGION.replace("pv_availability", "renewable_floor = 0.3\npv_availability");
        let p = parse_problem(&text).unwrap();
        let s = solve(&p).unwrap();
        let total = s.costs.total();
        assert!((total - s.certificate.objective).abs() <= 1e-6 * total.abs().max(1.0));
        assert!(report(&p, &s).contains("Lost load"));
    }
}
