use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Largest instance [`crate::solve`] accepts.
pub const MAX_REGIONS: usize = 5;
pub const MAX_YEARS: usize = 3;
pub const MAX_BLOCKS: usize = 12;
pub const MAX_INCREMENTS: usize = 20;

fn default_increment() -> f64 {
    50.0
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningYear {
    /// Present-value coefficient applied to every cost of the year.
    pub discount: f64,
    /// Multiplier on every block load.
    #[serde(default = "one")]
    pub load_scale: f64,
    /// PV panel cost for capacity built this year, per MW.
    pub pv_capex_per_mw: f64,
}

/// Duration-weighted representative operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub id: String,
    pub hours: f64,
    /// Load per region id, MW.
    pub load_mw: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub id: String,
    pub land_price_per_mw: f64,
    pub lost_load_price_per_mwh: f64,
    /// Minimum renewable share of annual regional demand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renewable_floor: Option<f64>,
    /// Annual PV build limit, MW.
    pub pv_build_limit_mw: f64,
    /// PV output per MW installed, one entry per block.
    pub pv_availability: Vec<f64>,
    #[serde(default)]
    pub existing_pv_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExistingUnit {
    pub id: String,
    pub region: String,
    pub rated_mw: f64,
    /// Share of the rating left after forced outage and maintenance.
    pub availability: f64,
    /// MMBtu per MWh.
    #[serde(default)]
    pub heat_rate: f64,
    /// Per MMBtu.
    #[serde(default)]
    pub fuel_price: f64,
    #[serde(default)]
    pub variable_om_per_mwh: f64,
    #[serde(default)]
    pub fixed_om_per_mw_year: f64,
    /// Tons per MWh.
    #[serde(default)]
    pub emission_rate: f64,
    /// Per ton.
    #[serde(default)]
    pub emission_price: f64,
    /// Counts toward the regional renewable floor.
    #[serde(default)]
    pub renewable: bool,
}

impl ExistingUnit {
    pub fn available_mw(&self) -> f64 {
        self.rated_mw * self.availability
    }

    /// Fuel, variable O&M and emission cost per MWh.
    pub fn marginal_cost(&self) -> f64 {
        self.heat_rate * self.fuel_price
            + self.variable_om_per_mwh
            + self.emission_rate * self.emission_price
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interface {
    pub from: String,
    pub to: String,
    /// Limit in either direction, MW.
    pub capacity_mw: f64,
    pub wheeling_price_per_mwh: f64,
}

/// Capacity adequacy rule: available regional capacity must cover load
/// plus the larger of `margin` times load and the biggest local unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReserveRule {
    pub margin: f64,
    #[serde(default = "yes")]
    pub cover_largest_unit: bool,
}

fn yes() -> bool {
    true
}

impl Default for ReserveRule {
    fn default() -> Self {
        Self {
            margin: 0.0,
            cover_largest_unit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionProblem {
    #[serde(default)]
    pub name: String,
    /// PV builds come in whole multiples of this, MW.
    #[serde(default = "default_increment")]
    pub build_increment_mw: f64,
    #[serde(default)]
    pub pv_fixed_om_per_mw_year: f64,
    #[serde(default)]
    pub reserve: ReserveRule,
    pub years: Vec<PlanningYear>,
    pub blocks: Vec<TimeBlock>,
    pub regions: Vec<Region>,
    #[serde(default)]
    pub units: Vec<ExistingUnit>,
    #[serde(default)]
    pub interfaces: Vec<Interface>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid problem: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("too large for exact solve: {0}")]
    TooLarge(String),
}

impl ExpansionProblem {
    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    /// Load of region `r` in block `b` of year `y`, MW.
    pub fn load(&self, y: usize, b: usize, r: usize) -> f64 {
        let id = &self.regions[r].id;
        self.blocks[b].load_mw.get(id).copied().unwrap_or(0.0) * self.years[y].load_scale
    }

    /// Most whole increments region `r` may add in one year.
    pub fn max_increments(&self, r: usize) -> usize {
        let n = self.regions[r].pv_build_limit_mw / self.build_increment_mw;
        (n + 1e-9).floor().max(0.0) as usize
    }

    pub fn unit_region(&self, u: usize) -> usize {
        self.region_index(&self.units[u].region).expect("validated")
    }

    pub fn interface_ends(&self, i: usize) -> (usize, usize) {
        let f = &self.interfaces[i];
        (
            self.region_index(&f.from).expect("validated"),
            self.region_index(&f.to).expect("validated"),
        )
    }

    /// Capacity region `r` must have available in block `b` of year `y`.
    pub fn adequacy_requirement(&self, y: usize, b: usize, r: usize) -> f64 {
        let load = self.load(y, b, r);
        let largest = if self.reserve.cover_largest_unit {
            self.units
                .iter()
                .filter(|u| u.region == self.regions[r].id)
                .map(|u| u.rated_mw)
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        load + (self.reserve.margin * load).max(largest)
    }

    /// Available capacity of the existing units of region `r`, MW.
    pub fn unit_capacity(&self, r: usize) -> f64 {
        self.units
            .iter()
            .filter(|u| u.region == self.regions[r].id)
            .map(ExistingUnit::available_mw)
            .sum()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let mut e = Vec::new();
        let mut nonneg = |what: String, v: f64| {
            if !(v >= 0.0 && v.is_finite()) {
                e.push(format!("{what} must be a finite value >= 0, got {v}"));
            }
        };
        nonneg("build_increment_mw".into(), self.build_increment_mw);
        nonneg(
            "pv_fixed_om_per_mw_year".into(),
            self.pv_fixed_om_per_mw_year,
        );
        nonneg("reserve.margin".into(), self.reserve.margin);
        for (y, yr) in self.years.iter().enumerate() {
            nonneg(format!("years[{y}].pv_capex_per_mw"), yr.pv_capex_per_mw);
            nonneg(format!("years[{y}].load_scale"), yr.load_scale);
        }
        for b in &self.blocks {
            nonneg(format!("block {} hours", b.id), b.hours);
            for (r, v) in &b.load_mw {
                nonneg(format!("block {} load of {r}", b.id), *v);
            }
        }
        for r in &self.regions {
            nonneg(format!("region {} land price", r.id), r.land_price_per_mw);
            nonneg(
                format!("region {} lost-load price", r.id),
                r.lost_load_price_per_mwh,
            );
            nonneg(format!("region {} build limit", r.id), r.pv_build_limit_mw);
            nonneg(format!("region {} existing pv", r.id), r.existing_pv_mw);
        }
        for u in &self.units {
            for (what, v) in [
                ("rated_mw", u.rated_mw),
                ("heat_rate", u.heat_rate),
                ("fuel_price", u.fuel_price),
                ("variable_om_per_mwh", u.variable_om_per_mwh),
                ("fixed_om_per_mw_year", u.fixed_om_per_mw_year),
                ("emission_rate", u.emission_rate),
                ("emission_price", u.emission_price),
            ] {
                nonneg(format!("unit {} {what}", u.id), v);
            }
        }
        for i in &self.interfaces {
            nonneg(
                format!("interface {}-{} capacity", i.from, i.to),
                i.capacity_mw,
            );
            nonneg(
                format!("interface {}-{} wheeling price", i.from, i.to),
                i.wheeling_price_per_mwh,
            );
        }

        if !(self.build_increment_mw > 0.0) {
            e.push("build_increment_mw must be > 0".into());
        }
        if self.years.is_empty() {
            e.push("at least one year is required".into());
        }
        for (y, yr) in self.years.iter().enumerate() {
            if !(yr.discount > 0.0 && yr.discount.is_finite()) {
                e.push(format!(
                    "years[{y}].discount must be > 0, got {}",
                    yr.discount
                ));
            }
        }
        if self.blocks.is_empty() {
            e.push("at least one time block is required".into());
        }
        let hours: f64 = self.blocks.iter().map(|b| b.hours).sum();
        if (hours - HOURS_PER_YEAR).abs() > 1e-6 {
            e.push(format!(
                "block hours sum to {hours}, expected {HOURS_PER_YEAR}"
            ));
        }
        if self.regions.is_empty() {
            e.push("at least one region is required".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.regions {
            if !seen.insert(r.id.as_str()) {
                e.push(format!("duplicate region {}", r.id));
            }
            if r.pv_availability.len() != self.blocks.len() {
                e.push(format!(
                    "region {} has {} availability factors for {} blocks",
                    r.id,
                    r.pv_availability.len(),
                    self.blocks.len()
                ));
            }
            if r.pv_availability.iter().any(|a| !(0.0..=1.0).contains(a)) {
                e.push(format!(
                    "region {} availability factors must lie in [0, 1]",
                    r.id
                ));
            }
            if let Some(f) = r.renewable_floor {
                if !(0.0..=1.0).contains(&f) {
                    e.push(format!(
                        "region {} renewable floor {f} outside [0, 1]",
                        r.id
                    ));
                }
            }
        }
        for b in &self.blocks {
            for id in b.load_mw.keys() {
                if self.region_index(id).is_none() {
                    e.push(format!("block {} loads unknown region {id}", b.id));
                }
            }
        }
        for u in &self.units {
            if self.region_index(&u.region).is_none() {
                e.push(format!("unit {} sits in unknown region {}", u.id, u.region));
            }
            if !(0.0..=1.0).contains(&u.availability) {
                e.push(format!(
                    "unit {} availability {} outside [0, 1]",
                    u.id, u.availability
                ));
            }
        }
        for i in &self.interfaces {
            if self.region_index(&i.from).is_none() || self.region_index(&i.to).is_none() {
                e.push(format!(
                    "interface {}-{} references an unknown region",
                    i.from, i.to
                ));
            } else if i.from == i.to {
                e.push(format!(
                    "interface {}-{} joins a region to itself",
                    i.from, i.to
                ));
            }
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(ProblemError::Invalid(e))
        }
    }

    /// Rejects instances beyond desk scale.
    pub fn check_size(&self) -> Result<(), ProblemError> {
        let mut why = Vec::new();
        if self.regions.len() > MAX_REGIONS {
            why.push(format!(
                "{} regions (max {MAX_REGIONS})",
                self.regions.len()
            ));
        }
        if self.years.len() > MAX_YEARS {
            why.push(format!("{} years (max {MAX_YEARS})", self.years.len()));
        }
        if self.blocks.len() > MAX_BLOCKS {
            why.push(format!("{} blocks (max {MAX_BLOCKS})", self.blocks.len()));
        }
        for r in 0..self.regions.len() {
            if self.max_increments(r) > MAX_INCREMENTS {
                why.push(format!(
                    "region {} allows {} increments per year (max {MAX_INCREMENTS})",
                    self.regions[r].id,
                    self.max_increments(r)
                ));
            }
        }
        if why.is_empty() {
            Ok(())
        } else {
            Err(ProblemError::TooLarge(why.join(", ")))
        }
    }
}

/// Parses and validates a problem file.
pub fn parse_problem(text: &str) -> Result<ExpansionProblem, ProblemError> {
    let p: ExpansionProblem =
        toml::from_str(text).map_err(|e| ProblemError::Parse(e.to_string()))?;
    p.validate()?;
    Ok(p)
}
