//! Dense two-phase simplex for small linear programs
//! `maximize c·x  s.t.  A x ≤ b, x ≥ 0`.
//!
//! Pivoting follows Bland's rule, so the method terminates without cycling.
//! Problems handled here have a handful of variables and constraints.

use alloc::vec;
use alloc::vec::Vec;

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Columns allowed to enter the basis.
    allowed: Vec<bool>,
}

impl Tableau {
    fn m(&self) -> usize {
        self.basis.len()
    }

    fn rhs_col(&self) -> usize {
        self.rows[0].len() - 1
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Makes the objective row consistent with the current basis.
    fn price_out(&mut self) {
        let m = self.m();
        for r in 0..m {
            let c = self.basis[r];
            let f = self.rows[m][c];
            if f != 0.0 {
                let row = self.rows[r].clone();
                for (v, rv) in self.rows[m].iter_mut().zip(&row) {
                    *v -= f * rv;
                }
                self.rows[m][c] = 0.0;
            }
        }
    }

    /// Runs the simplex on the objective row; `false` means unbounded.
    fn run(&mut self) -> bool {
        let m = self.m();
        let rhs = self.rhs_col();
        loop {
            let entering = (0..rhs).find(|&j| self.allowed[j] && self.rows[m][j] < -TOL);
            let Some(c) = entering else { return true };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..m {
                let a = self.rows[r][c];
                if a > TOL {
                    let ratio = self.rows[r][rhs] / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - TOL
                                || (ratio <= bratio + TOL && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            match best {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }
}

/// Solves `maximize c·x s.t. a x ≤ b, x ≥ 0`.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    debug_assert_eq!(b.len(), m);
    let n_art = b.iter().filter(|v| **v < 0.0).count();
    let cols = n + m + n_art;
    let mut rows = Vec::with_capacity(m + 1);
    let mut basis = Vec::with_capacity(m);
    let mut art = n + m;
    for i in 0..m {
        let mut row = vec![0.0; cols + 1];
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = sign;
        row[cols] = sign * b[i];
        if sign < 0.0 {
            row[art] = 1.0;
            basis.push(art);
            art += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }
    rows.push(vec![0.0; cols + 1]);
    let mut t = Tableau {
        rows,
        basis,
        allowed: vec![true; cols],
    };

    if n_art > 0 {
        for j in n + m..cols {
            t.rows[m][j] = 1.0;
        }
        t.price_out();
        t.run();
        if t.rows[m][cols] < -TOL {
            return LpOutcome::Infeasible;
        }
        for r in 0..m {
            if t.basis[r] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| t.rows[r][j].abs() > TOL) {
                    t.pivot(r, j);
                }
            }
        }
        for j in n + m..cols {
            t.allowed[j] = false;
        }
    }

    for v in t.rows[m].iter_mut() {
        *v = 0.0;
    }
    for j in 0..n {
        t.rows[m][j] = -c[j];
    }
    t.price_out();
    if !t.run() {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = t.rows[r][cols].max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, value }
}

/// Whether `x` satisfies `a x ≤ b` and `x ≥ 0` up to `tol`.
pub fn is_feasible(x: &[f64], a: &[Vec<f64>], b: &[f64], tol: f64) -> bool {
    x.iter().all(|v| *v >= -tol)
        && a.iter().zip(b).all(|(row, bi)| {
            let lhs: f64 = row.iter().zip(x).map(|(r, v)| r * v).sum();
            lhs <= bi + tol * (1.0 + bi.abs())
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opt(o: LpOutcome) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), value 36.
        let a = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]];
        let (x, v) = opt(maximize(&[3.0, 5.0], &a, &[4.0, 12.0, 18.0]));
        assert!((v - 36.0).abs() < 1e-12);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn needs_phase_one() {
        // x + y ≥ 2 written as -x - y ≤ -2, x ≤ 3, y ≤ 3; minimize x + y.
        let a = vec![vec![-1.0, -1.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let (x, v) = opt(maximize(&[-1.0, -1.0], &a, &[-2.0, 3.0, 3.0]));
        assert!((v + 2.0).abs() < 1e-12);
        assert!(is_feasible(&x, &a, &[-2.0, 3.0, 3.0], 1e-9));
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = vec![vec![1.0], vec![-1.0]];
        assert_eq!(maximize(&[1.0], &a, &[1.0, -2.0]), LpOutcome::Infeasible);
        let a = vec![vec![-1.0, 1.0]];
        assert_eq!(maximize(&[1.0, 0.0], &a, &[1.0]), LpOutcome::Unbounded);
    }

    #[test]
    fn degenerate_redundant_rows() {
        // Two copies of the same equality-like pair.
        let a = vec![
            vec![1.0, 1.0],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
            vec![-1.0, -1.0],
        ];
        let b = [1.0, -1.0, 1.0, -1.0];
        let (x, v) = opt(maximize(&[1.0, 2.0], &a, &b));
        assert!((v - 2.0).abs() < 1e-12);
        assert!(is_feasible(&x, &a, &b, 1e-9));
    }
}
