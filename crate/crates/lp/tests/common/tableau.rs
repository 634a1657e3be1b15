//! Textbook dense tableau simplex used as an independent oracle.
//!
//! Works on `max c·x, rows (≤ | ≥ | =), x ≥ 0` with a full tableau,
//! explicit artificials, two phases and Bland's rule throughout. Shares no
//! code with the revised simplex under test.

use eqforward_lp::{LpProblem, VarId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, PartialEq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

pub struct OracleLp {
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Sense, f64)>,
}

#[derive(Debug, PartialEq)]
pub enum OracleResult {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

pub fn tableau_simplex(lp: &OracleLp) -> OracleResult {
    let n = lp.c.len();
    let m = lp.rows.len();
    // normalize to nonnegative rhs
    let rows: Vec<(Vec<f64>, Sense, f64)> = lp
        .rows
        .iter()
        .map(|(a, s, b)| {
            if *b < 0.0 {
                let flipped = match s {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
                (a.iter().map(|v| -v).collect(), flipped, -b)
            } else {
                (a.clone(), *s, *b)
            }
        })
        .collect();
    let n_slack = rows.iter().filter(|r| r.1 != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Sense::Le).count();
    let width = n + n_slack + n_art + 1;
    let mut t = vec![vec![0.0; width]; m];
    let mut basis = vec![0usize; m];
    let (mut si, mut ai) = (n, n + n_slack);
    for (i, (a, s, b)) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(a);
        t[i][width - 1] = *b;
        match s {
            Sense::Le => {
                t[i][si] = 1.0;
                basis[i] = si;
                si += 1;
            }
            Sense::Ge => {
                t[i][si] = -1.0;
                si += 1;
                t[i][ai] = 1.0;
                basis[i] = ai;
                ai += 1;
            }
            Sense::Eq => {
                t[i][ai] = 1.0;
                basis[i] = ai;
                ai += 1;
            }
        }
    }

    // Runs Bland-rule simplex maximizing `cost` over allowed columns.
    fn run(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> bool {
        let width = cost.len() + 1;
        loop {
            let mut entering = None;
            for j in 0..allowed {
                let z: f64 = basis
                    .iter()
                    .enumerate()
                    .map(|(i, &b)| cost[b] * t[i][j])
                    .sum();
                if cost[j] - z > 1e-9 {
                    entering = Some(j);
                    break;
                }
            }
            let Some(q) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..t.len() {
                if t[i][q] > 1e-10 {
                    let r = t[i][width - 1] / t[i][q];
                    match leave {
                        None => leave = Some((i, r)),
                        Some((li, lr)) => {
                            if r < lr - 1e-12 || ((r - lr).abs() <= 1e-12 && basis[i] < basis[li]) {
                                leave = Some((i, r));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else { return false };
            let piv = t[r][q];
            for v in t[r].iter_mut() {
                *v /= piv;
            }
            for i in 0..t.len() {
                if i != r && t[i][q] != 0.0 {
                    let f = t[i][q];
                    for j in 0..width {
                        t[i][j] -= f * t[r][j];
                    }
                }
            }
            basis[r] = q;
        }
    }

    let mut phase1 = vec![0.0; width - 1];
    for j in n + n_slack..width - 1 {
        phase1[j] = -1.0;
    }
    run(&mut t, &mut basis, &phase1, width - 1);
    let infeas: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= n + n_slack)
        .map(|(i, _)| t[i][width - 1])
        .sum();
    if infeas > 1e-7 {
        return OracleResult::Infeasible;
    }
    // drive zero-level artificials out where possible
    for i in 0..m {
        if basis[i] >= n + n_slack {
            if let Some(q) = (0..n + n_slack).find(|&j| t[i][j].abs() > 1e-9) {
                let piv = t[i][q];
                for v in t[i].iter_mut() {
                    *v /= piv;
                }
                for k in 0..m {
                    if k != i && t[k][q] != 0.0 {
                        let f = t[k][q];
                        for j in 0..width {
                            t[k][j] -= f * t[i][j];
                        }
                    }
                }
                basis[i] = q;
            }
        }
    }
    let mut phase2 = vec![0.0; width - 1];
    phase2[..n].copy_from_slice(&lp.c);
    if !run(&mut t, &mut basis, &phase2, n + n_slack) {
        return OracleResult::Unbounded;
    }
    let obj = basis
        .iter()
        .enumerate()
        .map(|(i, &b)| phase2[b] * t[i][width - 1])
        .sum();
    OracleResult::Optimal(obj)
}

/// Random feasible, bounded LP expressed both ways. Upper bounds on the
/// solver side become explicit `≤` rows on the oracle side.
pub fn random_pair(rng: &mut ChaCha8Rng) -> (LpProblem, OracleLp) {
    let n = rng.gen_range(1..=40);
    let m = rng.gen_range(1..=40);
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut p = LpProblem::new();
    let mut o = OracleLp {
        c: c.clone(),
        rows: Vec::new(),
    };
    let mut vars = Vec::new();
    for j in 0..n {
        let upper = if rng.gen_bool(0.3) {
            x0[j] + rng.gen_range(0.0..2.0)
        } else {
            f64::INFINITY
        };
        vars.push(p.add_var(format!("x{j}"), 0.0, upper, c[j]));
        if upper.is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            o.rows.push((a, Sense::Le, upper));
        }
    }
    for i in 0..m {
        let a: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.6) {
                    rng.gen_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let ax: f64 = a.iter().zip(&x0).map(|(u, v)| u * v).sum();
        let terms: Vec<(VarId, f64)> = vars.iter().zip(&a).map(|(&v, &w)| (v, w)).collect();
        let (sense, b) = match rng.gen_range(0..4) {
            0 => (Sense::Eq, ax),
            1 => (Sense::Ge, ax - rng.gen_range(0.0..1.0)),
            _ => (Sense::Le, ax + rng.gen_range(0.0..1.0)),
        };
        match sense {
            Sense::Eq => p.add_eq(format!("r{i}"), &terms, b),
            Sense::Ge => p.add_ge(format!("r{i}"), &terms, b),
            Sense::Le => p.add_le(format!("r{i}"), &terms, b),
        };
        o.rows.push((a, sense, b));
    }
    // bounding row
    let cap = n as f64 + 1.0;
    let ones: Vec<(VarId, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
    p.add_le("cap", &ones, cap);
    o.rows.push((vec![1.0; n], Sense::Le, cap));
    (p, o)
}
