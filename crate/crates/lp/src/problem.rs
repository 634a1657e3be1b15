//! Linear program data model.
//!
//! Problems are always stated as maximizations:
//!
//! ```text
//! max  c·x + offset
//! s.t. a_i·x  = b_i    (equality rows)
//!      a_j·x <= b_j    (inequality rows)
//!      l <= x <= u     (variable bounds, infinite allowed)
//! ```
//!
//! Rows are stored sparsely as `(column, coefficient)` pairs; a dense view
//! is available through [`Row::dense`].

use crate::LpError;

/// Index of a variable (column) in an [`LpProblem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Index of a constraint row inside its own family (equality or inequality).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowId {
    Eq(usize),
    Le(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Row {
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(j, a) in &self.coeffs {
            out[j] += a;
        }
        out
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Magnitude used for row-relative feasibility checks.
    pub(crate) fn scale(&self, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .map(|&(j, a)| (a * x[j]).abs())
            .fold(self.rhs.abs().max(1.0), f64::max)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub eq_rows: Vec<Row>,
    pub le_rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub var_names: Vec<String>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_names.push(name.into());
        VarId(self.objective.len() - 1)
    }

    pub fn add_eq(&mut self, name: impl Into<String>, terms: &[(VarId, f64)], rhs: f64) -> RowId {
        self.eq_rows.push(make_row(name, terms, rhs));
        RowId::Eq(self.eq_rows.len() - 1)
    }

    pub fn add_le(&mut self, name: impl Into<String>, terms: &[(VarId, f64)], rhs: f64) -> RowId {
        self.le_rows.push(make_row(name, terms, rhs));
        RowId::Le(self.le_rows.len() - 1)
    }

    /// Adds `terms·x >= rhs`, stored negated as a `<=` row.
    pub fn add_ge(&mut self, name: impl Into<String>, terms: &[(VarId, f64)], rhs: f64) -> RowId {
        let neg: Vec<(VarId, f64)> = terms.iter().map(|&(v, a)| (v, -a)).collect();
        self.add_le(name, &neg, -rhs)
    }

    pub fn eq_row_index(&self, name: &str) -> Option<usize> {
        self.eq_rows.iter().position(|r| r.name == name)
    }

    pub fn le_row_index(&self, name: &str) -> Option<usize> {
        self.le_rows.iter().position(|r| r.name == name)
    }

    pub fn var_index(&self, name: &str) -> Option<VarId> {
        self.var_names.iter().position(|n| n == name).map(VarId)
    }

    pub fn row_mut(&mut self, id: RowId) -> &mut Row {
        match id {
            RowId::Eq(i) => &mut self.eq_rows[i],
            RowId::Le(i) => &mut self.le_rows[i],
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective
            .iter()
            .zip(x)
            .map(|(c, v)| c * v)
            .sum::<f64>()
            + self.objective_offset
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.var_names.len() != n {
            return Err(LpError::InvalidProblem(
                "bound or name vector length differs from objective".into(),
            ));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::InvalidProblem(format!(
                    "variable {} has invalid bounds [{l}, {u}]",
                    self.var_names[j]
                )));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) || !self.objective_offset.is_finite() {
            return Err(LpError::InvalidProblem(
                "non-finite objective coefficient".into(),
            ));
        }
        for row in self.eq_rows.iter().chain(&self.le_rows) {
            if !row.rhs.is_finite() {
                return Err(LpError::InvalidProblem(format!(
                    "row {} has non-finite rhs",
                    row.name
                )));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::InvalidProblem(format!(
                        "row {} references column {j} of {n}",
                        row.name
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::InvalidProblem(format!(
                        "row {} has non-finite coefficient",
                        row.name
                    )));
                }
            }
        }
        Ok(())
    }
}

fn make_row(name: impl Into<String>, terms: &[(VarId, f64)], rhs: f64) -> Row {
    let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for &(VarId(j), a) in terms {
        if a == 0.0 {
            continue;
        }
        match coeffs.iter_mut().find(|(k, _)| *k == j) {
            Some(entry) => entry.1 += a,
            None => coeffs.push((j, a)),
        }
    }
    Row {
        name: name.into(),
        coeffs,
        rhs,
    }
}
