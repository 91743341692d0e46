//! Small dense two-phase simplex with Bland's rule.
//!
//! Used where an LP must be solved independently of the sparse solver behind
//! the robust model: ambiguity-set feasibility, coordinate ranges, and the
//! inner worst-case expectation in the oracles. Intended for problems with at
//! most a few hundred rows and columns.

const TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

/// `minimize c^T x` subject to linear rows; variables are non-negative unless
/// marked free.
#[derive(Debug, Clone)]
pub struct DenseLp {
    objective: Vec<f64>,
    maximize: bool,
    free: Vec<bool>,
    rows: Vec<(Vec<f64>, Cmp, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenseOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl DenseOutcome {
    pub fn optimal(&self) -> Option<(&[f64], f64)> {
        match self {
            DenseOutcome::Optimal { x, objective } => Some((x, *objective)),
            _ => None,
        }
    }
}

impl DenseLp {
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            maximize: false,
            free: vec![false; n],
            rows: Vec::new(),
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        let mut lp = Self::minimize(objective.into_iter().map(|c| -c).collect());
        lp.maximize = true;
        lp
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, cmp: Cmp, rhs: f64) {
        assert_eq!(coeffs.len(), self.n_vars(), "row length must match variable count");
        self.rows.push((coeffs, cmp, rhs));
    }

    /// Solves the program. The reported objective is in the original sense,
    /// i.e. the maximum for a program built with [`DenseLp::maximize`].
    pub fn solve(&self) -> DenseOutcome {
        self.solve_inner()
    }

    fn solve_inner(&self) -> DenseOutcome {
        let n = self.n_vars();
        // Column map: each original variable gets one column, free ones a second
        // (negative part) column.
        let mut col_of = Vec::with_capacity(n);
        let mut neg_col = vec![None; n];
        let mut ncols = 0;
        for j in 0..n {
            col_of.push(ncols);
            ncols += 1;
            if self.free[j] {
                neg_col[j] = Some(ncols);
                ncols += 1;
            }
        }
        let m = self.rows.len();
        // Slack per inequality row.
        let mut slack_col = vec![None; m];
        for (i, (_, cmp, _)) in self.rows.iter().enumerate() {
            if *cmp != Cmp::Eq {
                slack_col[i] = Some(ncols);
                ncols += 1;
            }
        }
        // Build equality rows with non-negative rhs.
        let mut a = vec![vec![0.0; ncols]; m];
        let mut rhs = vec![0.0; m];
        for (i, (coeffs, cmp, b)) in self.rows.iter().enumerate() {
            for j in 0..n {
                a[i][col_of[j]] = coeffs[j];
                if let Some(nc) = neg_col[j] {
                    a[i][nc] = -coeffs[j];
                }
            }
            if let Some(s) = slack_col[i] {
                a[i][s] = if *cmp == Cmp::Le { 1.0 } else { -1.0 };
            }
            rhs[i] = *b;
            if rhs[i] < 0.0 {
                for v in a[i].iter_mut() {
                    *v = -*v;
                }
                rhs[i] = -rhs[i];
            }
        }
        // Initial basis: a slack with +1 coefficient where available, else an
        // artificial.
        let mut basis = vec![usize::MAX; m];
        let mut n_art = 0;
        for i in 0..m {
            if let Some(s) = slack_col[i] {
                if a[i][s] > 0.0 {
                    basis[i] = s;
                    continue;
                }
            }
            n_art += 1;
        }
        let total = ncols + n_art;
        let width = total + 1;
        let mut t = vec![vec![0.0; width]; m + 1];
        let mut next_art = ncols;
        for i in 0..m {
            t[i][..ncols].copy_from_slice(&a[i]);
            t[i][total] = rhs[i];
            if basis[i] == usize::MAX {
                t[i][next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            }
        }
        let is_art = |c: usize| c >= ncols && c < total;

        // Phase 1: minimize the sum of artificials.
        if n_art > 0 {
            let obj = m;
            for v in t[obj].iter_mut() {
                *v = 0.0;
            }
            for c in ncols..total {
                t[obj][c] = 1.0;
            }
            for i in 0..m {
                if is_art(basis[i]) {
                    for c in 0..width {
                        t[obj][c] -= t[i][c];
                    }
                }
            }
            if run_simplex(&mut t, &mut basis, total, |_| true).is_err() {
                return DenseOutcome::Infeasible;
            }
            let infeas = -t[obj][total];
            if infeas > 1e-9 * (1.0 + rhs.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))) {
                return DenseOutcome::Infeasible;
            }
            // Drive zero-level artificials out of the basis.
            let mut redundant = Vec::new();
            for i in 0..m {
                if !is_art(basis[i]) {
                    continue;
                }
                match (0..ncols).find(|&c| t[i][c].abs() > 1e-9) {
                    Some(c) => pivot(&mut t, &mut basis, i, c),
                    None => redundant.push(i),
                }
            }
            for &i in redundant.iter().rev() {
                t.remove(i);
                basis.remove(i);
            }
        }
        let m = basis.len();
        // Phase 2 objective row.
        let obj = m;
        for v in t[obj].iter_mut() {
            *v = 0.0;
        }
        for j in 0..n {
            t[obj][col_of[j]] = self.objective[j];
            if let Some(nc) = neg_col[j] {
                t[obj][nc] = -self.objective[j];
            }
        }
        for i in 0..m {
            let cb = t[obj][basis[i]];
            if cb != 0.0 {
                for c in 0..width {
                    t[obj][c] -= cb * t[i][c];
                }
            }
        }
        if run_simplex(&mut t, &mut basis, total, |c| !is_art(c)).is_err() {
            return DenseOutcome::Unbounded;
        }
        let mut values = vec![0.0; total];
        for i in 0..m {
            values[basis[i]] = t[i][total];
        }
        let x: Vec<f64> = (0..n)
            .map(|j| values[col_of[j]] - neg_col[j].map_or(0.0, |nc| values[nc]))
            .collect();
        let min_value: f64 = x.iter().zip(&self.objective).map(|(v, c)| v * c).sum();
        let objective = if self.maximize { -min_value } else { min_value };
        DenseOutcome::Optimal { x, objective }
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let f = r[col];
        if f != 0.0 {
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            r[col] = 0.0;
        }
    }
    basis[row] = col;
}

// Bland's rule: lowest-index improving column enters; ties in the ratio test
// go to the lowest basic index. Returns Err on unboundedness.
fn run_simplex(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    total: usize,
    allowed: impl Fn(usize) -> bool,
) -> Result<(), ()> {
    let m = basis.len();
    let obj = m;
    for _ in 0..50_000 {
        let entering = (0..total).find(|&c| allowed(c) && t[obj][c] < -TOL);
        let Some(col) = entering else {
            return Ok(());
        };
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i][col];
            if a > TOL {
                let ratio = t[i][total] / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - TOL || (ratio <= br + TOL && basis[i] < basis[bi]) {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = best else {
            return Err(());
        };
        pivot(t, basis, row, col);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let mut lp = DenseLp::maximize(vec![3.0, 5.0]);
        lp.add_row(vec![1.0, 0.0], Cmp::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], Cmp::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], Cmp::Le, 18.0);
        let (x, obj) = lp.solve().optimal().map(|(x, o)| (x.to_vec(), o)).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
        assert!((obj - 36.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x + y with x - y = -3, y <= 1, x free -> x = -2, y = 1.
        let mut lp = DenseLp::minimize(vec![1.0, 1.0]);
        lp.set_free(0);
        lp.add_row(vec![1.0, -1.0], Cmp::Eq, -3.0);
        lp.add_row(vec![0.0, 1.0], Cmp::Le, 1.0);
        let DenseOutcome::Optimal { x, objective } = lp.solve() else { panic!() };
        assert!((x[0] + 3.0).abs() < 1e-12 && x[1].abs() < 1e-12, "{x:?}");
        assert!((objective + 3.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = DenseLp::minimize(vec![1.0]);
        lp.add_row(vec![1.0], Cmp::Ge, 2.0);
        lp.add_row(vec![1.0], Cmp::Le, 1.0);
        assert_eq!(lp.solve(), DenseOutcome::Infeasible);
        let mut lp = DenseLp::maximize(vec![1.0, 0.0]);
        lp.add_row(vec![1.0, -1.0], Cmp::Le, 1.0);
        assert_eq!(lp.solve(), DenseOutcome::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = DenseLp::minimize(vec![1.0, 2.0]);
        lp.add_row(vec![1.0, 1.0], Cmp::Eq, 1.0);
        lp.add_row(vec![2.0, 2.0], Cmp::Eq, 2.0);
        let DenseOutcome::Optimal { x, objective } = lp.solve() else { panic!() };
        assert!((x[0] - 1.0).abs() < 1e-12 && (objective - 1.0).abs() < 1e-12);
    }
}
