//! Basis factorization.
//!
//! The basis is permuted to block-triangular form by repeatedly peeling
//! column singletons (columns with a single nonzero among the rows that are
//! still active). Whatever remains is a square kernel that is factorized
//! with dense LU and partial pivoting. Scenario LPs produce bases that are
//! mostly unit columns (slacks and tail variables), so the dense kernel is
//! tiny compared with the basis dimension.
//!
//! Invariant used by both solves: a peeled column has no entries in kernel
//! rows, nor in the rows of columns peeled after it.

pub(crate) type SparseCol = Vec<(usize, f64)>;

#[derive(Debug)]
pub(crate) struct Singular;

const PEEL_REL_TOL: f64 = 1e-9;
const KERNEL_PIVOT_TOL: f64 = 1e-11;

#[derive(Debug)]
pub(crate) struct BasisFactor {
    cols: Vec<SparseCol>,
    /// `(row, position, pivot)` in peel order.
    peeled: Vec<(usize, usize, f64)>,
    kernel_rows: Vec<usize>,
    kernel_pos: Vec<usize>,
    row_in_kernel: Vec<Option<usize>>,
    lu: DenseLu,
}

impl BasisFactor {
    pub(crate) fn new(m: usize, cols: Vec<SparseCol>) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];
        let mut count = vec![0usize; m];
        let mut rows_of: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (p, col) in cols.iter().enumerate() {
            for &(i, v) in col {
                if v != 0.0 {
                    count[p] += 1;
                    rows_of[i].push(p);
                }
            }
            if count[p] == 0 {
                return Err(Singular);
            }
        }

        let mut queue: Vec<usize> = (0..m).filter(|&p| count[p] == 1).collect();
        let mut peeled = Vec::new();
        while let Some(p) = queue.pop() {
            if !col_active[p] || count[p] != 1 {
                continue;
            }
            let col_max = cols[p].iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
            let Some(&(row, piv)) = cols[p].iter().find(|&&(i, v)| row_active[i] && v != 0.0)
            else {
                continue;
            };
            if piv.abs() < PEEL_REL_TOL * col_max {
                continue;
            }
            col_active[p] = false;
            row_active[row] = false;
            peeled.push((row, p, piv));
            for &q in &rows_of[row] {
                if col_active[q] {
                    count[q] -= 1;
                    match count[q] {
                        0 => return Err(Singular),
                        1 => queue.push(q),
                        _ => {}
                    }
                }
            }
        }

        let kernel_rows: Vec<usize> = (0..m).filter(|&i| row_active[i]).collect();
        let kernel_pos: Vec<usize> = (0..m).filter(|&p| col_active[p]).collect();
        if kernel_rows.len() != kernel_pos.len() {
            return Err(Singular);
        }
        let mut row_in_kernel = vec![None; m];
        for (k, &i) in kernel_rows.iter().enumerate() {
            row_in_kernel[i] = Some(k);
        }
        let n = kernel_rows.len();
        let mut dense = vec![0.0; n * n];
        for (jj, &p) in kernel_pos.iter().enumerate() {
            for &(i, v) in &cols[p] {
                if let Some(ii) = row_in_kernel[i] {
                    dense[ii * n + jj] += v;
                }
            }
        }
        let lu = DenseLu::factor(n, dense)?;
        Ok(Self {
            cols,
            peeled,
            kernel_rows,
            kernel_pos,
            row_in_kernel,
            lu,
        })
    }

    /// Solves `B x = v`. `v` is indexed by row and is consumed as scratch;
    /// the result is indexed by basis position.
    pub(crate) fn ftran(&self, v: &mut [f64]) -> Vec<f64> {
        let m = v.len();
        let mut x = vec![0.0; m];
        if !self.kernel_rows.is_empty() {
            let mut rhs: Vec<f64> = self.kernel_rows.iter().map(|&i| v[i]).collect();
            self.lu.solve(&mut rhs);
            for (jj, &p) in self.kernel_pos.iter().enumerate() {
                let xp = rhs[jj];
                x[p] = xp;
                if xp != 0.0 {
                    for &(i, a) in &self.cols[p] {
                        v[i] -= a * xp;
                    }
                }
            }
        }
        for &(row, p, piv) in self.peeled.iter().rev() {
            let xp = v[row] / piv;
            x[p] = xp;
            if xp != 0.0 {
                for &(i, a) in &self.cols[p] {
                    v[i] -= a * xp;
                }
            }
        }
        x
    }

    /// Solves `Bᵀ y = c` with `c` indexed by basis position; result by row.
    pub(crate) fn btran(&self, c: &[f64]) -> Vec<f64> {
        let m = c.len();
        let mut y = vec![0.0; m];
        for &(row, p, piv) in &self.peeled {
            let mut s = c[p];
            for &(i, a) in &self.cols[p] {
                if i != row {
                    s -= a * y[i];
                }
            }
            y[row] = s / piv;
        }
        if !self.kernel_rows.is_empty() {
            let mut rhs: Vec<f64> = self
                .kernel_pos
                .iter()
                .map(|&p| {
                    let mut s = c[p];
                    for &(i, a) in &self.cols[p] {
                        if self.row_in_kernel[i].is_none() {
                            s -= a * y[i];
                        }
                    }
                    s
                })
                .collect();
            self.lu.solve_transpose(&mut rhs);
            for (ii, &i) in self.kernel_rows.iter().enumerate() {
                y[i] = rhs[ii];
            }
        }
        y
    }

    #[cfg(test)]
    pub(crate) fn kernel_size(&self) -> usize {
        self.kernel_rows.len()
    }
}

/// Row-major dense LU with partial pivoting: `P A = L U`.
#[derive(Debug)]
struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn factor(n: usize, mut a: Vec<f64>) -> Result<Self, Singular> {
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (piv_row, piv_abs) =
                (k..n)
                    .map(|i| (i, a[i * n + k].abs()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if piv_abs <= KERNEL_PIVOT_TOL * scale {
                return Err(Singular);
            }
            if piv_row != k {
                for j in 0..n {
                    a.swap(k * n + j, piv_row * n + j);
                }
                perm.swap(k, piv_row);
            }
            let piv = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / piv;
                if f == 0.0 {
                    continue;
                }
                a[i * n + k] = f;
                for j in (k + 1)..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        b.copy_from_slice(&x);
    }

    /// Solves `Aᵀ y = c`, i.e. `Uᵀ Lᵀ P y = c`.
    fn solve_transpose(&self, c: &mut [f64]) {
        let n = self.n;
        let mut z = c.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for j in 0..i {
                s -= self.lu[j * n + i] * z[j];
            }
            z[i] = s / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for j in (i + 1)..n {
                s -= self.lu[j * n + i] * z[j];
            }
            z[i] = s;
        }
        for (k, &i) in self.perm.iter().enumerate() {
            c[i] = z[k];
        }
    }
}
