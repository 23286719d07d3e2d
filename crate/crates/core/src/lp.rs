//! Small dense revised simplex for `min c.x  s.t.  A x = b, x >= 0` with at
//! most four equality rows and many columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const MAX_ROWS: usize = 4;

const MAX_ITERATIONS: usize = 20_000;
const DEGENERATE_STREAK: usize = 50;

pub(crate) struct LpSolution {
    pub value: f64,
    /// Dual multipliers, one per row.
    pub dual: Vec<f64>,
}

struct Tableau<'a> {
    cols: &'a [[f64; MAX_ROWS]],
    m: usize,
    b: &'a [f64],
    basis: Vec<usize>,
}

impl Tableau<'_> {
    fn column(&self, j: usize) -> DVector<f64> {
        let n = self.cols.len();
        if j < n {
            DVector::from_fn(self.m, |i, _| self.cols[j][i])
        } else {
            DVector::from_fn(self.m, |i, _| if i == j - n { 1.0 } else { 0.0 })
        }
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        let mut bm = DMatrix::zeros(self.m, self.m);
        for (c, &j) in self.basis.iter().enumerate() {
            bm.set_column(c, &self.column(j));
        }
        bm
    }

    fn run_phase(&mut self, cost: &dyn Fn(usize) -> f64, allow: &dyn Fn(usize) -> bool) -> Result<DVector<f64>> {
        let n = self.cols.len();
        let scale = (0..n).fold(1.0f64, |s, j| s.max(cost(j).abs()));
        let tol = 1e-11 * scale;
        let mut bland = false;
        let mut streak = 0;
        for _ in 0..MAX_ITERATIONS {
            let lu = self.basis_matrix().lu();
            let xb = lu
                .solve(&DVector::from_column_slice(self.b))
                .ok_or_else(|| Error::Domain("singular simplex basis".into()))?;
            let cb = DVector::from_fn(self.m, |i, _| cost(self.basis[i]));
            let y = self
                .basis_matrix()
                .transpose()
                .lu()
                .solve(&cb)
                .ok_or_else(|| Error::Domain("singular simplex basis".into()))?;

            let mut entering = None;
            let mut best = -tol;
            for j in 0..n + self.m {
                if !allow(j) || self.basis.contains(&j) {
                    continue;
                }
                let col = &self.cols[j.min(n - 1)];
                let dot = if j < n {
                    (0..self.m).map(|i| col[i] * y[i]).sum()
                } else {
                    y[j - n]
                };
                let d = cost(j) - dot;
                if d < best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(q) = entering else {
                return Ok(y);
            };

            let u = lu
                .solve(&self.column(q))
                .ok_or_else(|| Error::Domain("singular simplex basis".into()))?;
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if u[i] > 1e-12 {
                    let ratio = xb[i].max(0.0) / u[i];
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((r, best_ratio)) => {
                            if ratio < best_ratio - 1e-15
                                || (ratio <= best_ratio + 1e-15 && self.basis[i] < self.basis[r])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(Error::Domain("linear program is unbounded".into()));
            };
            if ratio <= 1e-14 {
                streak += 1;
                if streak > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
            }
            self.basis[r] = q;
        }
        Err(Error::NonConvergence {
            what: "simplex",
            iterations: MAX_ITERATIONS,
            detail: "pivot limit reached".into(),
            last: None,
        })
    }
}

/// Two-phase revised simplex. `cols[j][..m]` is column `j` of `A`; `b >= 0`.
pub(crate) fn minimize(cols: &[[f64; MAX_ROWS]], m: usize, b: &[f64], c: &[f64]) -> Result<LpSolution> {
    debug_assert!(m <= MAX_ROWS && b.len() == m && c.len() == cols.len());
    debug_assert!(b.iter().all(|&v| v >= 0.0));
    let n = cols.len();
    let mut t = Tableau {
        cols,
        m,
        b,
        basis: (n..n + m).collect(),
    };

    t.run_phase(&|j| if j >= n { 1.0 } else { 0.0 }, &|j| j < n)?;
    let xb = t
        .basis_matrix()
        .lu()
        .solve(&DVector::from_column_slice(b))
        .ok_or_else(|| Error::Domain("singular simplex basis".into()))?;
    let infeasibility: f64 = (0..m).filter(|&i| t.basis[i] >= n).map(|i| xb[i]).sum();
    if infeasibility > 1e-9 {
        return Err(Error::Domain(format!(
            "linear program infeasible (phase one residual {infeasibility:e})"
        )));
    }

    // drive remaining artificials out of the basis where possible
    for r in 0..m {
        if t.basis[r] < n {
            continue;
        }
        // row r of B^-1
        let mut er = DVector::zeros(m);
        er[r] = 1.0;
        let row = t
            .basis_matrix()
            .transpose()
            .lu()
            .solve(&er)
            .ok_or_else(|| Error::Domain("singular simplex basis".into()))?;
        let pick = (0..n)
            .filter(|j| !t.basis.contains(j))
            .max_by(|&a, &b| {
                let va = t.column(a).dot(&row).abs();
                let vb = t.column(b).dot(&row).abs();
                va.total_cmp(&vb)
            });
        if let Some(j) = pick {
            if t.column(j).dot(&row).abs() > 1e-9 {
                t.basis[r] = j;
            }
        }
    }

    let y = t.run_phase(&|j| if j >= n { 0.0 } else { c[j] }, &|j| j < n)?;
    let xb = t
        .basis_matrix()
        .lu()
        .solve(&DVector::from_column_slice(b))
        .ok_or_else(|| Error::Domain("singular simplex basis".into()))?;
    let value = (0..m)
        .filter(|&i| t.basis[i] < n)
        .map(|i| c[t.basis[i]] * xb[i])
        .sum();
    Ok(LpSolution {
        value,
        dual: y.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_program() {
        // min x0 + 2 x1 + 3 x2 with x0 + x1 + x2 = 1 and x1 - x2 = 0
        let cols = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, -1.0, 0.0, 0.0]];
        let sol = minimize(&cols, 2, &[1.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn segment_midpoint() {
        // points -1 and 3 on a line: the only feasible weights average to 0
        let cols = [[1.0, -1.0, 0.0, 0.0], [1.0, 3.0, 0.0, 0.0]];
        let sol = minimize(&cols, 2, &[1.0, 0.0], &[5.0, 1.0]).unwrap();
        assert!((sol.value - (0.75 * 5.0 + 0.25)).abs() < 1e-13);
    }

    #[test]
    fn infeasible_detected() {
        let cols = [[1.0, 1.0, 0.0, 0.0], [1.0, 2.0, 0.0, 0.0]];
        assert!(minimize(&cols, 2, &[1.0, 0.0], &[1.0, 1.0]).is_err());
    }
}
