//! Polyhedral ambiguity sets `{p in S_m : A0 p = d0, A1 p <= d1}`.

use serde::{Deserialize, Serialize};

use crate::dense_lp::{Cmp, DenseLp, DenseOutcome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PolyhedralAmbiguitySet {
    a0: Vec<Vec<f64>>,
    d0: Vec<f64>,
    a1: Vec<Vec<f64>>,
    d1: Vec<f64>,
    m: usize,
    gamma: Option<f64>,
}

impl PolyhedralAmbiguitySet {
    /// General constructor. Fails when dimensions disagree or the set is empty.
    pub fn new(a0: Vec<Vec<f64>>, d0: Vec<f64>, a1: Vec<Vec<f64>>, d1: Vec<f64>, m: usize) -> Result<Self> {
        let set = Self::unchecked(a0, d0, a1, d1, m, None)?;
        match set.feasibility_lp(vec![0.0; m], false).solve() {
            DenseOutcome::Optimal { .. } => Ok(set),
            _ => Err(Error::EmptyAmbiguitySet),
        }
    }

    fn unchecked(
        a0: Vec<Vec<f64>>,
        d0: Vec<f64>,
        a1: Vec<Vec<f64>>,
        d1: Vec<f64>,
        m: usize,
        gamma: Option<f64>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::Dimension("ambiguity set needs m >= 1".into()));
        }
        if a0.len() != d0.len() || a1.len() != d1.len() {
            return Err(Error::Dimension(format!(
                "A0 has {} rows for {} entries of d0; A1 has {} rows for {} entries of d1",
                a0.len(),
                d0.len(),
                a1.len(),
                d1.len()
            )));
        }
        for (name, rows) in [("A0", &a0), ("A1", &a1)] {
            if let Some(i) = rows.iter().position(|r| r.len() != m) {
                return Err(Error::Dimension(format!("{name} row {i} has {} columns, expected {m}", rows[i].len())));
            }
        }
        let finite = a0.iter().chain(&a1).flatten().chain(&d0).chain(&d1).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("ambiguity set data must be finite".into()));
        }
        Ok(Self { a0, d0, a1, d1, m, gamma: None }.with_gamma(gamma))
    }

    fn with_gamma(mut self, gamma: Option<f64>) -> Self {
        self.gamma = gamma;
        self
    }

    /// Contamination set `{p in S_m : p_j >= (1 - gamma) p_hat_j}`.
    pub fn from_gamma(p_hat: &[f64], gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Domain(format!("gamma must lie in [0, 1], got {gamma}")));
        }
        let m = p_hat.len();
        if m == 0 {
            return Err(Error::Dimension("empirical distribution is empty".into()));
        }
        if p_hat.iter().any(|p| !(*p >= 0.0)) || (p_hat.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("empirical distribution must lie on the simplex".into()));
        }
        let a1 = (0..m)
            .map(|j| {
                let mut row = vec![0.0; m];
                row[j] = -1.0;
                row
            })
            .collect();
        let d1 = p_hat.iter().map(|p| -(1.0 - gamma) * p).collect();
        // Nonempty by construction: p_hat is a member.
        Self::unchecked(Vec::new(), Vec::new(), a1, d1, m, Some(gamma))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn a0(&self) -> &[Vec<f64>] {
        &self.a0
    }

    pub fn d0(&self) -> &[f64] {
        &self.d0
    }

    pub fn a1(&self) -> &[Vec<f64>] {
        &self.a1
    }

    pub fn d1(&self) -> &[f64] {
        &self.d1
    }

    /// The contamination level, when the set was built by [`Self::from_gamma`].
    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> Result<bool> {
        if p.len() != self.m {
            return Err(Error::Dimension(format!("p has length {}, expected {}", p.len(), self.m)));
        }
        if p.iter().any(|v| *v < -tol) || (p.iter().sum::<f64>() - 1.0).abs() > tol {
            return Ok(false);
        }
        let eq_ok = self.a0.iter().zip(&self.d0).all(|(row, d)| (dot(row, p) - d).abs() <= tol);
        let le_ok = self.a1.iter().zip(&self.d1).all(|(row, d)| dot(row, p) <= d + tol);
        Ok(eq_ok && le_ok)
    }

    /// `A0^T nu + A1^T lambda`, the per-scenario shift in the dual objective.
    pub fn dual_shift(&self, nu: &[f64], lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (row, v) in self.a0.iter().zip(nu).chain(self.a1.iter().zip(lambda)) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * v;
            }
        }
        out
    }

    /// `nu^T d0 + lambda^T d1`.
    pub fn dual_offset(&self, nu: &[f64], lambda: &[f64]) -> f64 {
        dot(nu, &self.d0) + dot(lambda, &self.d1)
    }

    fn feasibility_lp(&self, objective: Vec<f64>, maximize: bool) -> DenseLp {
        let mut lp = if maximize {
            DenseLp::maximize(objective)
        } else {
            DenseLp::minimize(objective)
        };
        lp.add_row(vec![1.0; self.m], Cmp::Eq, 1.0);
        for (row, d) in self.a0.iter().zip(&self.d0) {
            lp.add_row(row.clone(), Cmp::Eq, *d);
        }
        for (row, d) in self.a1.iter().zip(&self.d1) {
            lp.add_row(row.clone(), Cmp::Le, *d);
        }
        lp
    }

    /// `min_{p in set} p^T q` with a minimizing distribution.
    pub fn min_expectation(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        if q.len() != self.m {
            return Err(Error::Dimension(format!("q has length {}, expected {}", q.len(), self.m)));
        }
        match self.feasibility_lp(q.to_vec(), false).solve() {
            DenseOutcome::Optimal { x, objective } => Ok((objective, x)),
            DenseOutcome::Infeasible => Err(Error::EmptyAmbiguitySet),
            DenseOutcome::Unbounded => Err(Error::Numerical("expectation over the simplex is unbounded".into())),
        }
    }

    /// Smallest and largest value of coordinate `j` over the set.
    pub fn coordinate_range(&self, j: usize) -> Result<(f64, f64)> {
        if j >= self.m {
            return Err(Error::Dimension(format!("coordinate {j} out of range for m = {}", self.m)));
        }
        let mut e = vec![0.0; self.m];
        e[j] = 1.0;
        let lo = self.min_expectation(&e)?.0;
        let hi = match self.feasibility_lp(e, true).solve() {
            DenseOutcome::Optimal { objective, .. } => objective,
            _ => return Err(Error::EmptyAmbiguitySet),
        };
        Ok((lo, hi))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Configuration form: either a contamination level or explicit matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AmbiguitySpec {
    Gamma {
        gamma: f64,
    },
    Explicit {
        #[serde(rename = "A0", default)]
        a0: Vec<Vec<f64>>,
        #[serde(default)]
        d0: Vec<f64>,
        #[serde(rename = "A1", default)]
        a1: Vec<Vec<f64>>,
        #[serde(default)]
        d1: Vec<f64>,
    },
}

impl AmbiguitySpec {
    /// Builds the set for a scenario set with empirical weights `p_hat`.
    pub fn build(&self, p_hat: &[f64]) -> Result<PolyhedralAmbiguitySet> {
        match self {
            AmbiguitySpec::Gamma { gamma } => PolyhedralAmbiguitySet::from_gamma(p_hat, *gamma),
            AmbiguitySpec::Explicit { a0, d0, a1, d1 } => {
                PolyhedralAmbiguitySet::new(a0.clone(), d0.clone(), a1.clone(), d1.clone(), p_hat.len())
            }
        }
    }
}
