//! Dense two-phase primal simplex with implicit variable bounds.
//!
//! Nonbasic variables rest at either bound, so box constraints never become
//! rows. Pricing is Dantzig's rule until a run of degenerate pivots, after
//! which Bland's rule takes over for the rest of the solve.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Minimize `cost · x` subject to rows and `lower <= x <= upper`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("variable {0} has an empty or non-finite lower bound")]
    BadBounds(usize),
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
}

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const MAX_ITERATIONS: usize = 200_000;

impl LinearProgram {
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push(Row {
            terms,
            relation,
            rhs,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.num_vars();
        for j in 0..n {
            if !self.lower[j].is_finite() || self.upper[j] < self.lower[j] || self.upper[j].is_nan()
            {
                return Err(LpError::BadBounds(j));
            }
        }
        let mut t = Tableau::build(self);
        let scale_b = t.beta.iter().fold(1.0_f64, |m, v| m.max(v.abs()));

        let phase1: Vec<f64> = (0..t.cols)
            .map(|j| if j >= t.art0 { 1.0 } else { 0.0 })
            .collect();
        t.optimize(&phase1)?;
        let infeas: f64 = (0..t.m)
            .filter(|&i| t.basis[i] >= t.art0)
            .map(|i| t.beta[i])
            .sum();
        if infeas > 1e-7 * scale_b {
            return Err(LpError::Infeasible);
        }
        for j in t.art0..t.cols {
            t.upper[j] = 0.0;
        }
        let mut phase2 = vec![0.0; t.cols];
        phase2[..n].copy_from_slice(&self.cost);
        t.optimize(&phase2)?;

        let mut x = t.values();
        x.truncate(n);
        for j in 0..n {
            x[j] = (x[j] + self.lower[j]).clamp(self.lower[j], self.upper[j]);
        }
        let objective = self.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution {
            x,
            objective,
            iterations: t.iterations,
        })
    }
}

struct Tableau {
    m: usize,
    cols: usize,
    art0: usize,
    /// Row-major `m x cols`, always `B^-1 A`.
    a: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    upper: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    /// Shifts variables to zero lower bounds, adds one slack per inequality
    /// and one artificial per row, and starts from the artificial basis.
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.rows.len();
        let art0 = n + m;
        let cols = n + 2 * m;
        let mut a = vec![0.0; m * cols];
        let mut beta = vec![0.0; m];
        let mut upper = vec![f64::INFINITY; cols];
        for j in 0..n {
            upper[j] = lp.upper[j] - lp.lower[j];
        }
        for (i, row) in lp.rows.iter().enumerate() {
            let r = &mut a[i * cols..(i + 1) * cols];
            let mut rhs = row.rhs;
            for &(j, v) in &row.terms {
                r[j] += v;
                rhs -= v * lp.lower[j];
            }
            match row.relation {
                Relation::Le => r[n + i] = 1.0,
                Relation::Ge => r[n + i] = -1.0,
                Relation::Eq => upper[n + i] = 0.0,
            }
            if rhs < 0.0 {
                for v in r.iter_mut() {
                    *v = -*v;
                }
                rhs = -rhs;
            }
            r[art0 + i] = 1.0;
            beta[i] = rhs;
        }
        let basis: Vec<usize> = (art0..cols).collect();
        let mut is_basic = vec![false; cols];
        for &k in &basis {
            is_basic[k] = true;
        }
        Self {
            m,
            cols,
            art0,
            a,
            beta,
            basis,
            at_upper: vec![false; cols],
            is_basic,
            upper,
            iterations: 0,
        }
    }

    fn values(&self) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.cols)
            .map(|j| if self.at_upper[j] { self.upper[j] } else { 0.0 })
            .collect();
        for (i, &k) in self.basis.iter().enumerate() {
            x[k] = self.beta[i];
        }
        x
    }

    fn reduced_costs(&self, c: &[f64]) -> Vec<f64> {
        let mut d = c.to_vec();
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let r = &self.a[i * self.cols..(i + 1) * self.cols];
                for j in 0..self.cols {
                    d[j] -= cb * r[j];
                }
            }
        }
        d
    }

    fn optimize(&mut self, c: &[f64]) -> Result<(), LpError> {
        let cscale = c.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let dtol = 1e-9 * cscale;
        let mut d = self.reduced_costs(c);
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(LpError::IterationLimit(MAX_ITERATIONS));
            }
            let mut q = None;
            let mut best = 0.0;
            for j in 0..self.cols {
                if self.is_basic[j] || self.upper[j] <= 0.0 {
                    continue;
                }
                let score = if self.at_upper[j] { d[j] } else { -d[j] };
                if score > dtol && (q.is_none() || (!bland && score > best)) {
                    q = Some(j);
                    best = score;
                    if bland {
                        break;
                    }
                }
            }
            let Some(q) = q else {
                return Ok(());
            };
            self.iterations += 1;
            let sigma = if self.at_upper[q] { -1.0 } else { 1.0 };

            let mut theta = self.upper[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = 0.0;
            for i in 0..self.m {
                let alpha = sigma * self.a[i * self.cols + q];
                let k = self.basis[i];
                let (lim, to_upper) = if alpha > PIVOT_TOL {
                    (self.beta[i].max(0.0) / alpha, false)
                } else if alpha < -PIVOT_TOL && self.upper[k].is_finite() {
                    ((self.upper[k] - self.beta[i]).max(0.0) / -alpha, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => lim < theta || (lim == theta && theta.is_finite()),
                    Some((p, _)) => {
                        lim < theta
                            || (lim == theta
                                && if bland {
                                    k < self.basis[p]
                                } else {
                                    alpha.abs() > leave_alpha
                                })
                    }
                };
                if better {
                    theta = lim;
                    leave = Some((i, to_upper));
                    leave_alpha = alpha.abs();
                }
            }
            if !theta.is_finite() {
                return Err(LpError::Unbounded);
            }
            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }

            for i in 0..self.m {
                self.beta[i] -= sigma * theta * self.a[i * self.cols + q];
            }
            let Some((p, to_upper)) = leave else {
                self.at_upper[q] = !self.at_upper[q];
                continue;
            };
            let entering_value = if self.at_upper[q] { self.upper[q] } else { 0.0 } + sigma * theta;
            let k = self.basis[p];
            self.is_basic[k] = false;
            self.at_upper[k] = to_upper;
            self.is_basic[q] = true;
            self.at_upper[q] = false;
            self.basis[p] = q;
            self.beta[p] = entering_value;
            self.pivot(p, q, &mut d);
        }
    }

    fn pivot(&mut self, p: usize, q: usize, d: &mut [f64]) {
        let cols = self.cols;
        let piv = self.a[p * cols + q];
        for v in &mut self.a[p * cols..(p + 1) * cols] {
            *v /= piv;
        }
        let prow: Vec<f64> = self.a[p * cols..(p + 1) * cols].to_vec();
        for i in 0..self.m {
            if i == p {
                continue;
            }
            let f = self.a[i * cols + q];
            if f != 0.0 {
                let r = &mut self.a[i * cols..(i + 1) * cols];
                for j in 0..cols {
                    r[j] -= f * prow[j];
                }
                r[q] = 0.0;
            }
        }
        let f = d[q];
        if f != 0.0 {
            for j in 0..cols {
                d[j] -= f * prow[j];
            }
            d[q] = 0.0;
        }
    }
}
