//! Fixed-format MPS export, for cross-checking problems against external
//! solvers.
//!
//! Names longer than eight characters do not fit fixed MPS fields, so every
//! row and column is written under a generated short name (`R0000001`,
//! `C0000001`, ...). A comment block at the top maps short names back to
//! the original labels.

use std::fmt::Write as _;
use std::io;

use crate::problem::LpProblem;

fn row_name(i: usize) -> String {
    format!("R{:07}", i + 1)
}

fn col_name(j: usize) -> String {
    format!("C{:07}", j + 1)
}

fn num(v: f64) -> String {
    let s = format!("{v:.6e}");
    if s.len() <= 12 {
        s
    } else {
        format!("{v:.5e}")
    }
}

/// Renders `p` as fixed-format MPS text. The objective row is `OBJ` and the
/// sense is declared with an `OBJSENSE MAX` section.
pub fn to_mps_string(p: &LpProblem, name: &str) -> String {
    let n = p.num_vars();
    let rows: Vec<_> = p
        .eq_rows
        .iter()
        .map(|r| ('E', r))
        .chain(p.le_rows.iter().map(|r| ('L', r)))
        .collect();
    let mut out = String::new();

    for (i, (_, r)) in rows.iter().enumerate() {
        let _ = writeln!(out, "* {} = {}", row_name(i), r.name);
    }
    for j in 0..n {
        let _ = writeln!(out, "* {} = {}", col_name(j), p.var_names[j]);
    }
    let _ = writeln!(
        out,
        "NAME          {}",
        name.chars().take(8).collect::<String>()
    );
    out.push_str("OBJSENSE\n    MAX\n");
    out.push_str("ROWS\n N  OBJ\n");
    for (i, (kind, _)) in rows.iter().enumerate() {
        let _ = writeln!(out, " {kind}  {}", row_name(i));
    }

    let mut by_col: Vec<Vec<(String, f64)>> = vec![Vec::new(); n];
    for (j, &c) in p.objective.iter().enumerate() {
        if c != 0.0 {
            by_col[j].push(("OBJ".to_string(), c));
        }
    }
    for (i, (_, r)) in rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            by_col[j].push((row_name(i), a));
        }
    }
    out.push_str("COLUMNS\n");
    for (j, entries) in by_col.iter().enumerate() {
        for (rname, a) in entries {
            let _ = writeln!(out, "    {:<8}  {:<8}  {:>12}", col_name(j), rname, num(*a));
        }
    }

    out.push_str("RHS\n");
    if p.objective_offset != 0.0 {
        // MPS convention: the RHS of the objective row is minus the constant.
        let _ = writeln!(
            out,
            "    {:<8}  {:<8}  {:>12}",
            "RHS",
            "OBJ",
            num(-p.objective_offset)
        );
    }
    for (i, (_, r)) in rows.iter().enumerate() {
        if r.rhs != 0.0 {
            let _ = writeln!(
                out,
                "    {:<8}  {:<8}  {:>12}",
                "RHS",
                row_name(i),
                num(r.rhs)
            );
        }
    }

    out.push_str("BOUNDS\n");
    for j in 0..n {
        let (l, u) = (p.lower[j], p.upper[j]);
        let c = col_name(j);
        if l == f64::NEG_INFINITY && u == f64::INFINITY {
            let _ = writeln!(out, " FR BND       {c}");
        } else if l == u {
            let _ = writeln!(out, " FX BND       {c}  {:>12}", num(l));
        } else {
            if l == f64::NEG_INFINITY {
                let _ = writeln!(out, " MI BND       {c}");
            } else if l != 0.0 {
                let _ = writeln!(out, " LO BND       {c}  {:>12}", num(l));
            }
            if u.is_finite() {
                let _ = writeln!(out, " UP BND       {c}  {:>12}", num(u));
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

pub fn write_mps<W: io::Write>(p: &LpProblem, name: &str, mut w: W) -> io::Result<()> {
    w.write_all(to_mps_string(p, name).as_bytes())
}
