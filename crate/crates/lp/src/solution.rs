use crate::problem::LpProblem;
use crate::LpError;

/// Primal feasibility bound (row-scaled) enforced on every optimal solve.
pub const PRIMAL_RESIDUAL_MAX: f64 = 1e-7;
/// Complementary slackness bound, relative to `max(1, |objective|)`.
pub const COMPLEMENTARITY_MAX: f64 = 1e-6;
/// Primal/dual objective agreement, relative to `max(1, |objective|)`.
pub const DUALITY_GAP_MAX: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Result of a solve.
///
/// Dual sign convention for a maximization: `eq_duals` are unrestricted,
/// `ineq_duals` are nonnegative for `a·x <= b` rows, and every dual is the
/// marginal change of the optimal objective per unit increase of its
/// right-hand side. `reduced_costs[j] = c_j - Aᵀy` over all rows.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    /// Improving direction when `status == Unbounded`.
    pub ray: Option<Vec<f64>>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualityCheck {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
}

impl DualityCheck {
    pub fn passes(&self) -> bool {
        self.primal_residual <= PRIMAL_RESIDUAL_MAX
            && self.complementarity <= COMPLEMENTARITY_MAX
            && self.relative_gap <= DUALITY_GAP_MAX
    }
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn eq_dual(&self, p: &LpProblem, name: &str) -> Option<f64> {
        p.eq_row_index(name)
            .and_then(|i| self.eq_duals.get(i).copied())
    }

    pub fn ineq_dual(&self, p: &LpProblem, name: &str) -> Option<f64> {
        p.le_row_index(name)
            .and_then(|i| self.ineq_duals.get(i).copied())
    }

    /// Recomputes primal, dual and complementarity residuals from scratch.
    pub fn duality_check(&self, p: &LpProblem) -> DualityCheck {
        let x = &self.x;
        let mut primal: f64 = 0.0;
        let mut dual: f64 = 0.0;
        let mut comp: f64 = 0.0;
        let mut dual_obj = p.objective_offset;

        for (row, &y) in p.eq_rows.iter().zip(&self.eq_duals) {
            primal = primal.max((row.dot(x) - row.rhs).abs() / row.scale(x));
            dual_obj += y * row.rhs;
        }
        for (row, &u) in p.le_rows.iter().zip(&self.ineq_duals) {
            let ax = row.dot(x);
            primal = primal.max((ax - row.rhs).max(0.0) / row.scale(x));
            dual = dual.max((-u).max(0.0));
            comp = comp.max((u * (row.rhs - ax)).abs());
            dual_obj += u * row.rhs;
        }
        for j in 0..p.num_vars() {
            let (l, u) = (p.lower[j], p.upper[j]);
            let scale = x[j].abs().max(1.0);
            primal = primal
                .max((l - x[j]).max(0.0) / scale)
                .max((x[j] - u).max(0.0) / scale);
            let d = self.reduced_costs[j];
            let anchor = if d > 0.0 && u.is_finite() {
                u
            } else if d < 0.0 && l.is_finite() {
                l
            } else {
                x[j]
            };
            let at_lower =
                l.is_finite() && (x[j] - l).abs() <= PRIMAL_RESIDUAL_MAX * l.abs().max(1.0);
            let at_upper =
                u.is_finite() && (u - x[j]).abs() <= PRIMAL_RESIDUAL_MAX * u.abs().max(1.0);
            let violation = match (at_lower, at_upper) {
                (true, true) => 0.0,
                (true, false) => d.max(0.0),
                (false, true) => (-d).max(0.0),
                (false, false) => d.abs(),
            };
            dual = dual.max(violation);
            comp = comp.max((d * (x[j] - anchor)).abs());
            dual_obj += d * anchor;
        }
        let obj_scale = self.objective.abs().max(1.0);
        DualityCheck {
            primal_residual: primal,
            dual_residual: dual,
            complementarity: comp / obj_scale,
            dual_objective: dual_obj,
            relative_gap: (self.objective - dual_obj).abs() / obj_scale,
        }
    }

    /// Asserts the optimality certificate; used on every optimal solve.
    pub fn verify(&self, p: &LpProblem) -> Result<DualityCheck, LpError> {
        let check = self.duality_check(p);
        if check.passes() {
            Ok(check)
        } else {
            Err(LpError::NumericalBreakdown(format!(
                "optimality certificate failed: primal {:.3e}, complementarity {:.3e}, gap {:.3e}",
                check.primal_residual, check.complementarity, check.relative_gap
            )))
        }
    }
}
