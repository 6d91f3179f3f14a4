//! Minimal dense two-phase simplex, specialized for the zonotope containment
//! program: minimize the infinity norm of the generator coefficients subject
//! to matching a target point.

use nalgebra::{DMatrix, DVector};

const PIVOT_EPS: f64 = 1e-10;

/// Minimizes ||beta||_inf subject to G beta = d. Returns the optimal norm,
/// or `None` when the equality system is infeasible (d outside the span) or
/// the iteration limit is hit.
pub fn min_inf_norm_solution(g: &DMatrix<f64>, d: &DVector<f64>) -> Option<f64> {
    // Tube generators span many orders of magnitude; condition the program
    // first. Rows whose generator entries are numerical noise pin the point
    // to the center up to an absolute tolerance; meaningful rows are scaled
    // to unit magnitude, and negligible columns are dropped.
    let scale = g.amax().max(d.amax());
    if scale == 0.0 {
        return Some(0.0);
    }
    let kept_rows: Vec<usize> = (0..g.nrows())
        .filter(|&r| {
            let row_max = (0..g.ncols()).map(|c| g[(r, c)].abs()).fold(0.0, f64::max);
            row_max > 1e-12 * scale
        })
        .collect();
    for r in 0..g.nrows() {
        if !kept_rows.contains(&r) && d[r].abs() > 1e-9 * scale {
            return None;
        }
    }
    let kept_cols: Vec<usize> = (0..g.ncols())
        .filter(|&j| g.column(j).amax() > 1e-13 * scale)
        .collect();
    let mut gs = DMatrix::<f64>::zeros(kept_rows.len(), kept_cols.len());
    let mut ds = DVector::<f64>::zeros(kept_rows.len());
    for (rr, &r) in kept_rows.iter().enumerate() {
        let row_max = (0..g.ncols()).map(|c| g[(r, c)].abs()).fold(0.0, f64::max);
        for (cc, &c) in kept_cols.iter().enumerate() {
            gs[(rr, cc)] = g[(r, c)] / row_max;
        }
        ds[rr] = d[r] / row_max;
    }
    solve_normalized(&gs, &ds)
}

fn solve_normalized(g: &DMatrix<f64>, d: &DVector<f64>) -> Option<f64> {
    let n = g.nrows();
    let m = g.ncols();
    if m == 0 {
        return if d.amax() <= 1e-12 { Some(0.0) } else { None };
    }
    // Structural variables: beta+ (m), beta- (m), t (1), slack (m).
    // Rows: n equality rows, then m rows  beta+_i + beta-_i - t + s_i = 0.
    let n_struct = 3 * m + 1;
    let n_rows = n + m;
    let n_cols = n_struct + n; // artificials on the equality rows
    let t_col = 2 * m;

    let mut tab = DMatrix::<f64>::zeros(n_rows, n_cols + 1);
    let mut basis = vec![0usize; n_rows];

    for r in 0..n {
        let sign = if d[r] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..m {
            tab[(r, c)] = sign * g[(r, c)];
            tab[(r, m + c)] = -sign * g[(r, c)];
        }
        tab[(r, n_struct + r)] = 1.0;
        tab[(r, n_cols)] = sign * d[r];
        basis[r] = n_struct + r;
    }
    for i in 0..m {
        let r = n + i;
        tab[(r, i)] = 1.0;
        tab[(r, m + i)] = 1.0;
        tab[(r, t_col)] = -1.0;
        tab[(r, t_col + 1 + i)] = 1.0;
        basis[r] = t_col + 1 + i;
    }

    // Phase 1: minimize the sum of artificials.
    let mut cost = vec![0.0; n_cols];
    cost[n_struct..].fill(1.0);
    if !simplex_iterate(&mut tab, &mut basis, &cost, n_cols)? {
        return None;
    }
    let phase1_obj: f64 = (0..n_rows)
        .filter(|&r| basis[r] >= n_struct)
        .map(|r| tab[(r, n_cols)])
        .sum();
    if phase1_obj > 1e-7 {
        return None;
    }
    // Drive any basic artificial at zero out of the basis (only through
    // columns that are not already basic elsewhere).
    for r in 0..n_rows {
        if basis[r] >= n_struct {
            if let Some(c) =
                (0..n_struct).find(|&c| !basis.contains(&c) && tab[(r, c)].abs() > PIVOT_EPS)
            {
                pivot(&mut tab, &mut basis, r, c);
            }
        }
    }

    // Phase 2: minimize t, with artificial columns frozen.
    let mut cost = vec![0.0; n_cols];
    cost[t_col] = 1.0;
    if !simplex_iterate(&mut tab, &mut basis, &cost, n_struct)? {
        return None;
    }
    let rhs_col = n_cols;
    let t_value = (0..n_rows)
        .find(|&r| basis[r] == t_col)
        .map(|r| tab[(r, rhs_col)])
        .unwrap_or(0.0);
    Some(t_value)
}

/// Runs Bland-rule simplex iterations; returns Some(true) at optimality,
/// Some(false) on unboundedness, None when the iteration cap is exceeded.
fn simplex_iterate(
    tab: &mut DMatrix<f64>,
    basis: &mut [usize],
    cost: &[f64],
    usable_cols: usize,
) -> Option<bool> {
    let n_rows = tab.nrows();
    let rhs_col = tab.ncols() - 1;
    for _ in 0..20_000 {
        // Reduced costs over usable columns, Bland's smallest-index entering rule.
        let mut entering = None;
        for c in 0..usable_cols {
            if basis.contains(&c) {
                continue;
            }
            let mut reduced = cost[c];
            for r in 0..n_rows {
                reduced -= cost[basis[r]] * tab[(r, c)];
            }
            if reduced < -1e-9 {
                entering = Some(c);
                break;
            }
        }
        let Some(col) = entering else {
            return Some(true);
        };
        // Ratio test, Bland tie-break on the smallest basis index.
        let mut leaving: Option<(usize, f64)> = None;
        for r in 0..n_rows {
            let a = tab[(r, col)];
            if a > PIVOT_EPS {
                let ratio = tab[(r, rhs_col)] / a;
                let better = match leaving {
                    None => true,
                    Some((lr, lratio)) => {
                        ratio < lratio - 1e-12 || (ratio < lratio + 1e-12 && basis[r] < basis[lr])
                    }
                };
                if better {
                    leaving = Some((r, ratio));
                }
            }
        }
        let Some((row, _)) = leaving else {
            return Some(false);
        };
        pivot(tab, basis, row, col);
    }
    None
}

fn pivot(tab: &mut DMatrix<f64>, basis: &mut [usize], row: usize, col: usize) {
    let scale = tab[(row, col)];
    for c in 0..tab.ncols() {
        tab[(row, c)] /= scale;
    }
    for r in 0..tab.nrows() {
        if r != row {
            let factor = tab[(r, col)];
            if factor != 0.0 {
                for c in 0..tab.ncols() {
                    tab[(r, c)] -= factor * tab[(row, c)];
                }
            }
        }
    }
    basis[row] = col;
}
