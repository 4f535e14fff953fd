use std::path::Path;

use serde::Serialize;

use freqlab_expansion::{parse_problem, report, solve, Certificate, CostBreakdown, ExpansionPlan};

use crate::inputs::{self, json, Outcome};

#[derive(Serialize)]
struct CostTerm {
    term: &'static str,
    cost: f64,
}

#[derive(Serialize)]
struct CostFile {
    terms: Vec<CostTerm>,
    total: f64,
    certificate: Certificate,
}

#[derive(Serialize)]
struct PlanFile<'a> {
    problem: &'a str,
    regions: Vec<&'a str>,
    plan: &'a ExpansionPlan,
}

fn cost_file(c: &CostBreakdown, certificate: Certificate) -> CostFile {
    CostFile {
        terms: CostBreakdown::LABELS
            .iter()
            .zip(c.terms())
            .map(|(&term, cost)| CostTerm { term, cost })
            .collect(),
        total: c.total(),
        certificate,
    }
}

pub fn cmd_expand(problem: &Path, out: &Path) -> Outcome<()> {
    let p = parse_problem(&inputs::read(problem)?)
        .map_err(|e| crate::inputs::Failure::Input(format!("{}: {e}", problem.display())))?;
    let solved = solve(&p)?;
    let text = report(&p, &solved);
    let dir = inputs::out_dir(out)?;
    inputs::write(&dir, "report.txt", &text)?;
    inputs::write(
        &dir,
        "plan.json",
        &json(&PlanFile {
            problem: &p.name,
            regions: p.regions.iter().map(|r| r.id.as_str()).collect(),
            plan: &solved.plan,
        }),
    )?;
    inputs::write(
        &dir,
        "cost.json",
        &json(&cost_file(&solved.costs, solved.certificate.clone())),
    )?;
    print!("{text}");
    Ok(())
}
