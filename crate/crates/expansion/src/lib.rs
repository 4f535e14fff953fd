//! Desk-scale PV capacity expansion: the planning formulation, its
//! seven-term discounted cost, feasibility checking, and an exact solver
//! (bounded simplex under depth-first branch-and-bound).

pub mod plan;
pub mod problem;
pub mod simplex;
pub mod solve;

pub use plan::{
    check_feasibility, evaluate_cost, BlockDispatch, ConstraintFamily, CostBreakdown,
    ExpansionPlan, PlanError, PlanViolation,
};
pub use problem::{
    parse_problem, ExistingUnit, ExpansionProblem, Interface, PlanningYear, ProblemError, Region,
    ReserveRule, TimeBlock,
};
pub use solve::{dispatch_for, report, solve, Certificate, NodeRecord, SolveError, Solved};
