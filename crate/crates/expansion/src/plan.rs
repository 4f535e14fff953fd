use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::ExpansionProblem;

/// Dispatch of one time block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDispatch {
    /// Output per existing unit, MW.
    pub unit_mw: Vec<f64>,
    /// PV output per region, MW.
    pub pv_mw: Vec<f64>,
    /// Flow per interface in its from-to direction, MW.
    pub flow_forward_mw: Vec<f64>,
    /// Flow per interface in its to-from direction, MW.
    pub flow_reverse_mw: Vec<f64>,
    /// Load left unserved per region, MW.
    pub unserved_mw: Vec<f64>,
}

impl BlockDispatch {
    pub fn zeros(p: &ExpansionProblem) -> Self {
        Self {
            unit_mw: vec![0.0; p.units.len()],
            pv_mw: vec![0.0; p.regions.len()],
            flow_forward_mw: vec![0.0; p.interfaces.len()],
            flow_reverse_mw: vec![0.0; p.interfaces.len()],
            unserved_mw: vec![0.0; p.regions.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionPlan {
    /// PV added per region per year, MW.
    pub pv_build_mw: Vec<Vec<f64>>,
    /// Dispatch per year per block.
    pub dispatch: Vec<Vec<BlockDispatch>>,
}

impl ExpansionPlan {
    /// No builds and no output anywhere.
    pub fn empty(p: &ExpansionProblem) -> Self {
        Self {
            pv_build_mw: vec![vec![0.0; p.years.len()]; p.regions.len()],
            dispatch: vec![vec![BlockDispatch::zeros(p); p.blocks.len()]; p.years.len()],
        }
    }

    /// PV in service in region `r` during year `y`, MW.
    pub fn installed_pv(&self, p: &ExpansionProblem, r: usize, y: usize) -> f64 {
        p.regions[r].existing_pv_mw + self.pv_build_mw[r][..=y].iter().sum::<f64>()
    }

    /// Unserved energy of region `r` in block `b` of year `y`, MWh.
    pub fn unserved_mwh(&self, p: &ExpansionProblem, y: usize, b: usize, r: usize) -> f64 {
        self.dispatch[y][b].unserved_mw[r] * p.blocks[b].hours
    }

    pub fn check_shape(&self, p: &ExpansionProblem) -> Result<(), PlanError> {
        let (nr, ny, nb) = (p.regions.len(), p.years.len(), p.blocks.len());
        let mismatch = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(PlanError::Dimension(format!(
                    "{what}: {got} entries, expected {want}"
                )))
            }
        };
        mismatch("pv_build_mw regions", self.pv_build_mw.len(), nr)?;
        for row in &self.pv_build_mw {
            mismatch("pv_build_mw years", row.len(), ny)?;
        }
        mismatch("dispatch years", self.dispatch.len(), ny)?;
        for year in &self.dispatch {
            mismatch("dispatch blocks", year.len(), nb)?;
            for d in year {
                mismatch("unit_mw", d.unit_mw.len(), p.units.len())?;
                mismatch("pv_mw", d.pv_mw.len(), nr)?;
                mismatch(
                    "flow_forward_mw",
                    d.flow_forward_mw.len(),
                    p.interfaces.len(),
                )?;
                mismatch(
                    "flow_reverse_mw",
                    d.flow_reverse_mw.len(),
                    p.interfaces.len(),
                )?;
                mismatch("unserved_mw", d.unserved_mw.len(), nr)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// The seven discounted cost terms of the planning objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub pv_expansion: f64,
    pub fixed_om: f64,
    pub variable_om: f64,
    pub fuel: f64,
    pub wheeling: f64,
    pub lost_load: f64,
    pub emission: f64,
}

impl CostBreakdown {
    pub const LABELS: [&'static str; 7] = [
        "PV expansion",
        "Fixed O&M",
        "Varying O&M",
        "Fuel",
        "Wheeling",
        "Lost load",
        "Emission",
    ];

    pub fn terms(&self) -> [f64; 7] {
        [
            self.pv_expansion,
            self.fixed_om,
            self.variable_om,
            self.fuel,
            self.wheeling,
            self.lost_load,
            self.emission,
        ]
    }

    pub fn total(&self) -> f64 {
        self.terms().iter().sum()
    }

    fn add_scaled(&mut self, o: &CostBreakdown, k: f64) {
        self.pv_expansion += k * o.pv_expansion;
        self.fixed_om += k * o.fixed_om;
        self.variable_om += k * o.variable_om;
        self.fuel += k * o.fuel;
        self.wheeling += k * o.wheeling;
        self.lost_load += k * o.lost_load;
        self.emission += k * o.emission;
    }
}

impl fmt::Display for CostBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, v) in Self::LABELS.iter().zip(self.terms()) {
            writeln!(f, "{label:<14} {v:>18.2}")?;
        }
        write!(f, "{:<14} {:>18.2}", "Total", self.total())
    }
}

/// Undiscounted costs of year `y`.
pub fn year_costs(plan: &ExpansionPlan, p: &ExpansionProblem, y: usize) -> CostBreakdown {
    let mut c = CostBreakdown::default();
    for (r, region) in p.regions.iter().enumerate() {
        c.pv_expansion +=
            (p.years[y].pv_capex_per_mw + region.land_price_per_mw) * plan.pv_build_mw[r][y];
        c.fixed_om += p.pv_fixed_om_per_mw_year * plan.installed_pv(p, r, y);
    }
    for u in &p.units {
        c.fixed_om += u.fixed_om_per_mw_year * u.rated_mw;
    }
    for (b, block) in p.blocks.iter().enumerate() {
        let d = &plan.dispatch[y][b];
        let h = block.hours;
        for (u, unit) in p.units.iter().enumerate() {
            let mwh = h * d.unit_mw[u];
            c.variable_om += unit.variable_om_per_mwh * mwh;
            c.fuel += unit.heat_rate * unit.fuel_price * mwh;
            c.emission += unit.emission_price * unit.emission_rate * mwh;
        }
        for (i, itf) in p.interfaces.iter().enumerate() {
            c.wheeling +=
                itf.wheeling_price_per_mwh * h * (d.flow_forward_mw[i] + d.flow_reverse_mw[i]);
        }
        for (r, region) in p.regions.iter().enumerate() {
            c.lost_load += region.lost_load_price_per_mwh * h * d.unserved_mw[r];
        }
    }
    c
}

/// Total discounted cost, term by term.
pub fn evaluate_cost(
    plan: &ExpansionPlan,
    p: &ExpansionProblem,
) -> Result<CostBreakdown, PlanError> {
    plan.check_shape(p)?;
    let mut total = CostBreakdown::default();
    for (y, year) in p.years.iter().enumerate() {
        total.add_scaled(&year_costs(plan, p, y), year.discount);
    }
    Ok(total)
}

/// The constraint families of the planning problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintFamily {
    PowerBalance,
    BuildSpeed,
    UnitCapacity,
    CapacityAdequacy,
    InterfaceCapacity,
    RenewablePortfolio,
    PvOutput,
}

impl ConstraintFamily {
    pub const ALL: [ConstraintFamily; 7] = [
        Self::PowerBalance,
        Self::BuildSpeed,
        Self::UnitCapacity,
        Self::CapacityAdequacy,
        Self::InterfaceCapacity,
        Self::RenewablePortfolio,
        Self::PvOutput,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::PowerBalance => "regional power balance",
            Self::BuildSpeed => "PV installation speed",
            Self::UnitCapacity => "unit capacity",
            Self::CapacityAdequacy => "capacity adequacy",
            Self::InterfaceCapacity => "interface capacity",
            Self::RenewablePortfolio => "renewable portfolio",
            Self::PvOutput => "PV output",
        }
    }
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub family: ConstraintFamily,
    pub year: usize,
    pub block: Option<usize>,
    /// Region, unit or interface id.
    pub entity: String,
    pub detail: String,
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (year {}", self.family, self.year)?;
        if let Some(b) = self.block {
            write!(f, ", block {b}")?;
        }
        write!(f, ", {}): {}", self.entity, self.detail)
    }
}

/// Absolute slack allowed on MW and MWh comparisons, scaled by magnitude.
const FEAS_TOL: f64 = 1e-6;

fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs > rhs + FEAS_TOL * (1.0 + rhs.abs().max(lhs.abs()))
}

/// Every violated constraint of `plan`; empty iff the plan is feasible.
pub fn check_feasibility(
    plan: &ExpansionPlan,
    p: &ExpansionProblem,
) -> Result<Vec<PlanViolation>, PlanError> {
    plan.check_shape(p)?;
    let mut out = Vec::new();
    let mut push = |family, year, block, entity: &str, detail: String| {
        out.push(PlanViolation {
            family,
            year,
            block,
            entity: entity.to_string(),
            detail,
        })
    };
    let inc = p.build_increment_mw;
    for (r, region) in p.regions.iter().enumerate() {
        for y in 0..p.years.len() {
            let mw = plan.pv_build_mw[r][y];
            let steps = mw / inc;
            if exceeds(0.0, mw) || (steps - steps.round()).abs() > 1e-9 * (1.0 + steps.abs()) {
                push(
                    ConstraintFamily::BuildSpeed,
                    y,
                    None,
                    &region.id,
                    format!("build {mw} MW is not a whole multiple of {inc} MW"),
                );
            }
            if exceeds(mw, region.pv_build_limit_mw) {
                push(
                    ConstraintFamily::BuildSpeed,
                    y,
                    None,
                    &region.id,
                    format!(
                        "build {mw} MW exceeds the {} MW/yr limit",
                        region.pv_build_limit_mw
                    ),
                );
            }
        }
    }
    for y in 0..p.years.len() {
        let mut renewable = vec![0.0; p.regions.len()];
        let mut demand = vec![0.0; p.regions.len()];
        for (b, block) in p.blocks.iter().enumerate() {
            let d = &plan.dispatch[y][b];
            let mut net = vec![0.0; p.regions.len()];
            for (u, unit) in p.units.iter().enumerate() {
                let r = p.unit_region(u);
                let g = d.unit_mw[u];
                if exceeds(0.0, g) || exceeds(g, unit.available_mw()) {
                    push(
                        ConstraintFamily::UnitCapacity,
                        y,
                        Some(b),
                        &unit.id,
                        format!("output {g} MW outside [0, {}]", unit.available_mw()),
                    );
                }
                net[r] += g;
                if unit.renewable {
                    renewable[r] += g * block.hours;
                }
            }
            for (i, itf) in p.interfaces.iter().enumerate() {
                let (a, z) = p.interface_ends(i);
                for (dir, f) in [
                    ("forward", d.flow_forward_mw[i]),
                    ("reverse", d.flow_reverse_mw[i]),
                ] {
                    if exceeds(0.0, f) || exceeds(f, itf.capacity_mw) {
                        push(
                            ConstraintFamily::InterfaceCapacity,
                            y,
                            Some(b),
                            &format!("{}-{}", itf.from, itf.to),
                            format!("{dir} flow {f} MW outside [0, {}]", itf.capacity_mw),
                        );
                    }
                }
                let f = d.flow_forward_mw[i] - d.flow_reverse_mw[i];
                net[a] -= f;
                net[z] += f;
            }
            for (r, region) in p.regions.iter().enumerate() {
                let installed = plan.installed_pv(p, r, y);
                let pv = d.pv_mw[r];
                let cap = region.pv_availability[b] * installed;
                if exceeds(0.0, pv) || exceeds(pv, cap) {
                    push(
                        ConstraintFamily::PvOutput,
                        y,
                        Some(b),
                        &region.id,
                        format!("PV output {pv} MW outside [0, {cap}]"),
                    );
                }
                renewable[r] += pv * block.hours;
                let load = p.load(y, b, r);
                demand[r] += load * block.hours;
                let us = d.unserved_mw[r];
                if exceeds(0.0, us) || exceeds(us, load) {
                    push(
                        ConstraintFamily::PowerBalance,
                        y,
                        Some(b),
                        &region.id,
                        format!("unserved {us} MW outside [0, {load}]"),
                    );
                }
                let supply = net[r] + pv + us;
                if exceeds(supply, load) || exceeds(load, supply) {
                    push(
                        ConstraintFamily::PowerBalance,
                        y,
                        Some(b),
                        &region.id,
                        format!("supply {supply} MW against load {load} MW"),
                    );
                }
                let available = p.unit_capacity(r) + cap;
                let required = p.adequacy_requirement(y, b, r);
                if exceeds(required, available) {
                    push(
                        ConstraintFamily::CapacityAdequacy,
                        y,
                        Some(b),
                        &region.id,
                        format!("available {available} MW below requirement {required} MW"),
                    );
                }
            }
        }
        for (r, region) in p.regions.iter().enumerate() {
            if let Some(floor) = region.renewable_floor {
                let need = floor * demand[r];
                if exceeds(need, renewable[r]) {
                    push(
                        ConstraintFamily::RenewablePortfolio,
                        y,
                        None,
                        &region.id,
                        format!("renewable {} MWh below {need} MWh", renewable[r]),
                    );
                }
            }
        }
    }
    Ok(out)
}
