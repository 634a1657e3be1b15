//! Bounded-variable primal revised simplex.
//!
//! Two phases with artificial columns, Dantzig pricing with a Harris
//! two-pass ratio test, and a switch to Bland's rule after a run of
//! non-improving pivots. The basis inverse is kept as a factorization plus
//! a product-form eta file that is rebuilt every [`REFACTOR_EVERY`] pivots.

use crate::factor::{BasisFactor, SparseCol};
use crate::problem::LpProblem;
use crate::solution::{LpSolution, LpStatus};
use crate::LpError;

pub const FEAS_TOL: f64 = 1e-7;
pub const OPT_TOL: f64 = 1e-7;
pub const REFACTOR_EVERY: usize = 50;
pub const BLAND_AFTER: usize = 200;
const PIVOT_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub max_iterations: Option<usize>,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub refactor_every: usize,
    pub bland_after: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: None,
            feasibility_tol: FEAS_TOL,
            optimality_tol: OPT_TOL,
            refactor_every: REFACTOR_EVERY,
            bland_after: BLAND_AFTER,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic,
    AtLower,
    AtUpper,
    /// Free nonbasic variable parked at zero.
    Zero,
}

struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

enum Phase<'p> {
    One,
    Two(&'p [f64]),
}

enum PhaseOutcome {
    Optimal,
    Unbounded {
        entering: usize,
        dir: f64,
        alpha: Vec<f64>,
    },
    IterationLimit,
}

struct Simplex<'a> {
    opts: &'a SolverOptions,
    m: usize,
    n_struct: usize,
    n_slack: usize,
    cols: Vec<SparseCol>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    factor: BasisFactor,
    etas: Vec<Eta>,
    iterations: usize,
    max_iterations: usize,
}

/// Solves `p` with default options.
pub fn solve(p: &LpProblem) -> Result<LpSolution, LpError> {
    solve_with(p, &SolverOptions::default())
}

pub fn solve_with(p: &LpProblem, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    p.validate()?;
    let mut s = Simplex::new(p, opts)?;

    s.set_phase_costs(Phase::One);
    match s.run()? {
        PhaseOutcome::Optimal => {}
        PhaseOutcome::IterationLimit => return Ok(s.incomplete(p, LpStatus::IterationLimit)),
        PhaseOutcome::Unbounded { .. } => {
            return Err(LpError::NumericalBreakdown(
                "phase one reported an unbounded ray".into(),
            ))
        }
    }
    let infeas: f64 = (s.n_struct + s.n_slack..s.x.len())
        .map(|j| s.x[j].abs())
        .sum();
    let rhs_scale = s.rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if infeas > opts.feasibility_tol * rhs_scale {
        return Ok(s.incomplete(p, LpStatus::Infeasible));
    }
    s.fix_artificials();

    s.set_phase_costs(Phase::Two(&p.objective));
    match s.run()? {
        PhaseOutcome::Optimal => {}
        PhaseOutcome::IterationLimit => return Ok(s.incomplete(p, LpStatus::IterationLimit)),
        PhaseOutcome::Unbounded {
            entering,
            dir,
            alpha,
        } => {
            let ray = s.ray(entering, dir, &alpha);
            let mut sol = s.incomplete(p, LpStatus::Unbounded);
            sol.ray = Some(ray);
            return Ok(sol);
        }
    }
    s.refactor()?;
    s.recompute_basics();
    let sol = s.extract(p);
    sol.verify(p)?;
    Ok(sol)
}

impl<'a> Simplex<'a> {
    fn new(p: &LpProblem, opts: &'a SolverOptions) -> Result<Self, LpError> {
        let n_struct = p.num_vars();
        let n_eq = p.eq_rows.len();
        let n_le = p.le_rows.len();
        let m = n_eq + n_le;

        let mut cols: Vec<SparseCol> = vec![Vec::new(); n_struct];
        let mut rhs = Vec::with_capacity(m);
        for (i, row) in p.eq_rows.iter().chain(&p.le_rows).enumerate() {
            for &(j, a) in &row.coeffs {
                cols[j].push((i, a));
            }
            rhs.push(row.rhs);
        }
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        let mut x = vec![0.0; n_struct];
        let mut state = vec![State::Zero; n_struct];
        for j in 0..n_struct {
            if lower[j].is_finite() {
                x[j] = lower[j];
                state[j] = State::AtLower;
            } else if upper[j].is_finite() {
                x[j] = upper[j];
                state[j] = State::AtUpper;
            }
        }
        let mut resid = rhs.clone();
        for j in 0..n_struct {
            if x[j] != 0.0 {
                for &(i, a) in &cols[j] {
                    resid[i] -= a * x[j];
                }
            }
        }

        // slacks for <= rows
        for k in 0..n_le {
            cols.push(vec![(n_eq + k, 1.0)]);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(0.0);
            state.push(State::AtLower);
        }
        let n_slack = n_le;

        let mut basis = vec![usize::MAX; m];
        for k in 0..n_le {
            let i = n_eq + k;
            if resid[i] >= 0.0 {
                let j = n_struct + k;
                x[j] = resid[i];
                state[j] = State::Basic;
                basis[i] = j;
            }
        }
        for i in 0..m {
            if basis[i] == usize::MAX {
                let sign = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
                cols.push(vec![(i, sign)]);
                lower.push(0.0);
                upper.push(f64::INFINITY);
                x.push(resid[i].abs());
                state.push(State::Basic);
                basis[i] = cols.len() - 1;
            }
        }

        let factor = BasisFactor::new(m, basis.iter().map(|&j| cols[j].clone()).collect())
            .map_err(|_| LpError::NumericalBreakdown("initial basis singular".into()))?;
        let total = cols.len();
        let max_iterations = opts.max_iterations.unwrap_or(50_000 + 20 * (m + total));
        Ok(Self {
            opts,
            m,
            n_struct,
            n_slack,
            cols,
            lower,
            upper,
            cost: vec![0.0; total],
            rhs,
            x,
            state,
            basis,
            factor,
            etas: Vec::new(),
            iterations: 0,
            max_iterations,
        })
    }

    fn set_phase_costs(&mut self, phase: Phase<'_>) {
        let total = self.cols.len();
        self.cost = vec![0.0; total];
        match phase {
            Phase::One => {
                for j in self.n_struct + self.n_slack..total {
                    self.cost[j] = -1.0;
                }
            }
            Phase::Two(objective) => self.cost[..self.n_struct].copy_from_slice(objective),
        }
    }

    fn fix_artificials(&mut self) {
        for j in self.n_struct + self.n_slack..self.cols.len() {
            self.upper[j] = 0.0;
            if self.state[j] != State::Basic {
                self.x[j] = 0.0;
                self.state[j] = State::AtLower;
            }
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let cols = self.basis.iter().map(|&j| self.cols[j].clone()).collect();
        self.factor = BasisFactor::new(self.m, cols).map_err(|_| {
            LpError::NumericalBreakdown(format!("basis singular at iteration {}", self.iterations))
        })?;
        self.etas.clear();
        Ok(())
    }

    fn ftran(&self, v: &mut [f64]) -> Vec<f64> {
        let mut x = self.factor.ftran(v);
        for eta in &self.etas {
            let xr = x[eta.pos] / eta.pivot;
            if xr != 0.0 {
                for &(i, a) in &eta.entries {
                    x[i] -= a * xr;
                }
            }
            x[eta.pos] = xr;
        }
        x
    }

    fn btran(&self, c: &mut [f64]) -> Vec<f64> {
        for eta in self.etas.iter().rev() {
            let mut s = c[eta.pos];
            for &(i, a) in &eta.entries {
                s -= a * c[i];
            }
            c[eta.pos] = s / eta.pivot;
        }
        self.factor.btran(c)
    }

    fn column_dense(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.m];
        for &(i, a) in &self.cols[j] {
            v[i] = a;
        }
        v
    }

    fn recompute_basics(&mut self) {
        let mut r = self.rhs.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                for &(i, a) in col {
                    r[i] -= a * self.x[j];
                }
            }
        }
        let xb = self.ftran(&mut r);
        for (pos, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[pos];
        }
    }

    fn duals(&self) -> Vec<f64> {
        let mut cb: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
        self.btran(&mut cb)
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(i, a)| a * y[i]).sum::<f64>()
    }

    /// Returns `(entering, direction, |d_j|)`.
    fn price(&self, y: &[f64], bland: bool) -> Option<(usize, f64, f64)> {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.cols.len() {
            let st = self.state[j];
            if st == State::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(j, y);
            let dir = match st {
                State::AtLower if d > tol => 1.0,
                State::AtUpper if d < -tol => -1.0,
                State::Zero if d.abs() > tol => d.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir, d.abs()));
            }
            if best.map_or(true, |(_, _, b)| d.abs() > b) {
                best = Some((j, dir, d.abs()));
            }
        }
        best
    }

    /// Harris two-pass ratio test. Returns `(step, leaving position or
    /// None for a bound flip)`, or `None` when the step is unlimited.
    fn ratio_test(
        &self,
        q: usize,
        dir: f64,
        alpha: &[f64],
        bland: bool,
    ) -> Option<(f64, Option<usize>)> {
        let flip = self.upper[q] - self.lower[q];
        let mut limit = f64::INFINITY;
        for (pos, &j) in self.basis.iter().enumerate() {
            let a = dir * alpha[pos];
            let bound_gap = if a > PIVOT_TOL {
                self.x[j] - self.lower[j]
            } else if a < -PIVOT_TOL {
                self.upper[j] - self.x[j]
            } else {
                continue;
            };
            if !bound_gap.is_finite() {
                continue;
            }
            let relax = if bland { 0.0 } else { HARRIS_TOL };
            let r = (bound_gap.max(0.0) + relax) / a.abs();
            limit = limit.min(r);
        }
        if !limit.is_finite() && !flip.is_finite() {
            return None;
        }
        if flip <= limit {
            return Some((flip, None));
        }
        let mut chosen: Option<(usize, f64, f64)> = None; // (pos, ratio, |a|)
        for (pos, &j) in self.basis.iter().enumerate() {
            let a = dir * alpha[pos];
            let bound_gap = if a > PIVOT_TOL {
                self.x[j] - self.lower[j]
            } else if a < -PIVOT_TOL {
                self.upper[j] - self.x[j]
            } else {
                continue;
            };
            if !bound_gap.is_finite() {
                continue;
            }
            let r = bound_gap.max(0.0) / a.abs();
            if r > limit {
                continue;
            }
            let better = match chosen {
                None => true,
                Some((cp, cr, ca)) => {
                    if bland {
                        r < cr || (r == cr && j < self.basis[cp])
                    } else {
                        a.abs() > ca
                    }
                }
            };
            if better {
                chosen = Some((pos, r, a.abs()));
            }
        }
        chosen.map(|(pos, r, _)| (r, Some(pos)))
    }

    fn run(&mut self) -> Result<PhaseOutcome, LpError> {
        let mut stalled = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= self.max_iterations {
                return Ok(PhaseOutcome::IterationLimit);
            }
            let y = self.duals();
            let Some((q, dir, dabs)) = self.price(&y, bland) else {
                return Ok(PhaseOutcome::Optimal);
            };
            let mut col = self.column_dense(q);
            let alpha = self.ftran(&mut col);
            let Some((step, leaving)) = self.ratio_test(q, dir, &alpha, bland) else {
                return Ok(PhaseOutcome::Unbounded {
                    entering: q,
                    dir,
                    alpha,
                });
            };
            self.iterations += 1;

            if step * dabs > 1e-12 {
                stalled = 0;
                bland = false;
            } else {
                stalled += 1;
                if stalled > self.opts.bland_after {
                    bland = true;
                }
            }

            if step != 0.0 {
                self.x[q] += dir * step;
                for (pos, &j) in self.basis.iter().enumerate() {
                    if alpha[pos] != 0.0 {
                        self.x[j] -= dir * step * alpha[pos];
                    }
                }
            }
            match leaving {
                None => {
                    if dir > 0.0 {
                        self.x[q] = self.upper[q];
                        self.state[q] = State::AtUpper;
                    } else {
                        self.x[q] = self.lower[q];
                        self.state[q] = State::AtLower;
                    }
                }
                Some(r) => {
                    let out = self.basis[r];
                    let a = dir * alpha[r];
                    if a > 0.0 {
                        self.x[out] = self.lower[out];
                        self.state[out] = State::AtLower;
                    } else {
                        self.x[out] = self.upper[out];
                        self.state[out] = State::AtUpper;
                    }
                    self.basis[r] = q;
                    self.state[q] = State::Basic;
                    let entries = alpha
                        .iter()
                        .enumerate()
                        .filter(|&(i, &v)| i != r && v != 0.0)
                        .map(|(i, &v)| (i, v))
                        .collect();
                    self.etas.push(Eta {
                        pos: r,
                        pivot: alpha[r],
                        entries,
                    });
                    if self.etas.len() >= self.opts.refactor_every {
                        self.refactor()?;
                        self.recompute_basics();
                    }
                }
            }
        }
    }

    fn ray(&self, q: usize, dir: f64, alpha: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.cols.len()];
        d[q] = dir;
        for (pos, &j) in self.basis.iter().enumerate() {
            d[j] = -dir * alpha[pos];
        }
        d.truncate(self.n_struct);
        d
    }

    fn incomplete(&self, p: &LpProblem, status: LpStatus) -> LpSolution {
        let x = self.x[..self.n_struct].to_vec();
        LpSolution {
            status,
            objective: p.objective_value(&x),
            x,
            eq_duals: Vec::new(),
            ineq_duals: Vec::new(),
            reduced_costs: Vec::new(),
            ray: None,
            iterations: self.iterations,
        }
    }

    fn extract(&self, p: &LpProblem) -> LpSolution {
        let y = self.duals();
        let n_eq = p.eq_rows.len();
        let reduced_costs = (0..self.n_struct)
            .map(|j| self.reduced_cost(j, &y))
            .collect();
        let mut x = self.x[..self.n_struct].to_vec();
        for (j, v) in x.iter_mut().enumerate() {
            match self.state[j] {
                State::AtLower => *v = p.lower[j],
                State::AtUpper => *v = p.upper[j],
                _ => {}
            }
        }
        LpSolution {
            status: LpStatus::Optimal,
            objective: p.objective_value(&x),
            x,
            eq_duals: y[..n_eq].to_vec(),
            ineq_duals: y[n_eq..].to_vec(),
            reduced_costs,
            ray: None,
            iterations: self.iterations,
        }
    }
}
