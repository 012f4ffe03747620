//! Dense two-phase simplex for the small linear programs behind the error
//! bounds: minimize `c'x` subject to `A x <= b` with free variables.
//!
//! Free variables are split into positive parts, slack variables complete
//! the basis, and rows with negative right-hand sides get phase-1
//! artificials. Pivoting uses Bland's rule throughout, so cycling cannot
//! occur. Problem sizes here are tiny (hundreds of rows at most), dense
//! tableaus are fine.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-1 objective {0:.3e} > 0)")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Primal solution for the original free variables.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers `y <= 0` with `b'y = objective` at optimality.
    pub duals: Vec<f64>,
}

const EPS: f64 = 1e-11;

/// Minimizes `c'x` over `{x : A x <= b}`.
pub fn solve_min(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution, LpError> {
    let n = c.len();
    let m = a.len();
    assert_eq!(b.len(), m);
    for row in a {
        assert_eq!(row.len(), n);
    }

    // Columns: x+ (n), x- (n), slacks (m), artificials (#neg rows).
    let neg_rows: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = neg_rows.len();
    let total = 2 * n + m + n_art;

    // Tableau rows: m constraint rows, then the objective row is handled
    // separately per phase via reduced-cost computation against `basis`.
    let mut t = vec![vec![0.0f64; total + 1]; m];
    let mut basis = vec![0usize; m];
    let mut art_of_row = vec![usize::MAX; m];
    for (aj, &i) in neg_rows.iter().enumerate() {
        art_of_row[i] = 2 * n + m + aj;
    }
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
            t[i][n + j] = -sign * a[i][j];
        }
        t[i][2 * n + i] = sign; // slack
        t[i][total] = sign * b[i];
        if b[i] < 0.0 {
            t[i][art_of_row[i]] = 1.0;
            basis[i] = art_of_row[i];
        } else {
            basis[i] = 2 * n + i;
        }
    }

    let mut cost = vec![0.0f64; total];
    if n_art > 0 {
        for &i in &neg_rows {
            cost[art_of_row[i]] = 1.0;
        }
        let obj = simplex(&mut t, &mut basis, &cost, total)?;
        if obj > 1e-7 {
            return Err(LpError::Infeasible(obj));
        }
        // Drive any residual artificial out of the basis if possible.
        for i in 0..m {
            if basis[i] >= 2 * n + m {
                if let Some(j) = (0..2 * n + m).find(|&j| t[i][j].abs() > EPS) {
                    pivot(&mut t, i, j, total);
                    basis[i] = j;
                }
            }
        }
        // Forbid artificials from re-entering.
        for row in t.iter_mut() {
            for j in 2 * n + m..total {
                row[j] = 0.0;
            }
        }
    }

    let mut cost2 = vec![0.0f64; total];
    for j in 0..n {
        cost2[j] = c[j];
        cost2[n + j] = -c[j];
    }
    // Artificial columns keep zero cost and are zeroed out above.
    let objective = simplex(&mut t, &mut basis, &cost2, total)?;

    let mut x = vec![0.0f64; n];
    for (i, &bj) in basis.iter().enumerate() {
        if bj < n {
            x[bj] += t[i][total];
        } else if bj < 2 * n {
            x[bj - n] -= t[i][total];
        }
    }

    // y_i = -reduced cost of slack i. The row sign flip negates both the
    // slack column and the multiplier, so the two cancel.
    let reduced = reduced_costs(&t, &basis, &cost2, total);
    let duals: Vec<f64> = (0..m).map(|i| -reduced[2 * n + i]).collect();

    Ok(LpSolution { x, objective, duals })
}

/// Maximizes `c'x` over the same polytope.
pub fn solve_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution, LpError> {
    let neg: Vec<f64> = c.iter().map(|v| -v).collect();
    let mut sol = solve_min(&neg, a, b)?;
    sol.objective = -sol.objective;
    for d in &mut sol.duals {
        *d = -*d;
    }
    Ok(sol)
}

fn reduced_costs(t: &[Vec<f64>], basis: &[usize], cost: &[f64], total: usize) -> Vec<f64> {
    let m = t.len();
    let mut r = cost.to_vec();
    for i in 0..m {
        let cb = cost[basis[i]];
        if cb != 0.0 {
            for j in 0..total {
                r[j] -= cb * t[i][j];
            }
        }
    }
    r
}

fn pivot(t: &mut [Vec<f64>], row: usize, col: usize, total: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    for i in 0..t.len() {
        if i != row && t[i][col].abs() > 0.0 {
            let factor = t[i][col];
            for j in 0..=total {
                t[i][j] -= factor * t[row][j];
            }
        }
    }
}

/// Runs Bland-rule simplex to optimality; returns the objective value.
fn simplex(
    t: &mut Vec<Vec<f64>>,
    basis: &mut [usize],
    cost: &[f64],
    total: usize,
) -> Result<f64, LpError> {
    let m = t.len();
    loop {
        let r = reduced_costs(t, basis, cost, total);
        // Bland: smallest-index column with negative reduced cost.
        let Some(col) = (0..total).find(|&j| r[j] < -EPS) else {
            let mut obj = 0.0;
            for i in 0..m {
                obj += cost[basis[i]] * t[i][total];
            }
            return Ok(obj);
        };
        // Ratio test, ties broken by smallest basis index.
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][col] > EPS {
                let ratio = t[i][total] / t[i][col];
                match best {
                    None => best = Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - EPS
                            || (ratio < br + EPS && basis[i] < basis[bi])
                        {
                            best = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((row, _)) = best else {
            return Err(LpError::Unbounded);
        };
        pivot(t, row, col, total);
        basis[row] = col;
    }
}
