//! Supporting-hyperplane families for separable utilities.
//!
//! The utility `f(x, c) = alpha * phi1(x) + beta * phi2(c)` is over-estimated by
//! the tangent planes at every pair of partition points `(x_l, c_r)`. Because
//! `f` separates, so does the approximation error: along each axis the gap
//! between the lower envelope of the tangent lines and the curve peaks at the
//! crossing point of two neighbouring tangents. Partitions are grown point by
//! point so that every such peak equals the per-axis budget, which gives the
//! fewest hyperplanes that meet it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::{bisect, bisect_expanding};
use crate::utility::{check_c, check_x, SeparableUtility};

/// Hard cap on the number of points a single partition may hold.
const MAX_POINTS: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Portfolio return `x = K^T x^j`.
    X,
    /// Turnover cost fraction `c = |K - K_prev|^T C`.
    C,
}

/// Per-axis error tolerances; the total budget is `eps_x + eps_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps_x: f64,
    pub eps_c: f64,
}

impl ErrorBudget {
    pub fn new(eps_x: f64, eps_c: f64) -> Result<Self> {
        if !(eps_x > 0.0 && eps_x.is_finite()) || !(eps_c > 0.0 && eps_c.is_finite()) {
            return Err(Error::Domain(format!(
                "error budgets must be positive, got eps_x={eps_x}, eps_c={eps_c}"
            )));
        }
        Ok(Self { eps_x, eps_c })
    }

    pub fn total(&self) -> f64 {
        self.eps_x + self.eps_c
    }

    pub fn for_axis(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.eps_x,
            Axis::C => self.eps_c,
        }
    }
}

/// Ordered tangent points on one axis, endpoints pinned to the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    axis: Axis,
    points: Vec<f64>,
}

impl Partition {
    pub fn new(axis: Axis, points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Precondition("partition needs at least one point".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("partition points must be strictly increasing".into()));
        }
        for &p in &points {
            match axis {
                Axis::X => check_x(p)?,
                Axis::C => check_c(p)?,
            }
        }
        Ok(Self { axis, points })
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of points, which is also the number of tangent planes this
    /// axis contributes.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        *self.points.last().expect("non-empty")
    }

    /// The partition with point `index` removed.
    pub fn without(&self, index: usize) -> Result<Partition> {
        if index == 0 || index + 1 >= self.points.len() {
            return Err(Error::Precondition(format!(
                "point {index} is not interior to a partition of {} points",
                self.points.len()
            )));
        }
        let mut points = self.points.clone();
        points.remove(index);
        Ok(Partition {
            axis: self.axis,
            points,
        })
    }
}

fn weight(u: &SeparableUtility, axis: Axis) -> f64 {
    match axis {
        Axis::X => u.alpha(),
        Axis::C => u.beta(),
    }
}

fn phi(u: &SeparableUtility, axis: Axis, t: f64) -> f64 {
    match axis {
        Axis::X => u.phi1_unchecked(t),
        Axis::C => u.phi2_unchecked(t),
    }
}

fn phi_prime(u: &SeparableUtility, axis: Axis, t: f64) -> f64 {
    match axis {
        Axis::X => u.phi1_prime_unchecked(t),
        Axis::C => u.phi2_prime_unchecked(t),
    }
}

fn check_axis(axis: Axis, t: f64) -> Result<()> {
    match axis {
        Axis::X => check_x(t),
        Axis::C => check_c(t),
    }
}

/// Gap between the tangent at `tangent` and the curve at `t`, in utility
/// units. Non-negative by concavity.
pub(crate) fn axis_error(u: &SeparableUtility, axis: Axis, tangent: f64, t: f64) -> f64 {
    let w = weight(u, axis);
    w * (phi_prime(u, axis, tangent) * (t - tangent) + phi(u, axis, tangent) - phi(u, axis, t))
}

/// `e_l(x) = a_l (x - x_l) + alpha phi1(x_l) - alpha phi1(x)`.
pub fn error_x(u: &SeparableUtility, x_l: f64, x: f64) -> Result<f64> {
    check_x(x_l)?;
    check_x(x)?;
    Ok(axis_error(u, Axis::X, x_l, x))
}

/// `e_r(c) = b_r (c - c_r) + beta phi2(c_r) - beta phi2(c)`.
pub fn error_c(u: &SeparableUtility, c_r: f64, c: f64) -> Result<f64> {
    check_c(c_r)?;
    check_c(c)?;
    Ok(axis_error(u, Axis::C, c_r, c))
}

/// Point where the tangents at `left` and `right` intersect.
pub fn crossing_point(u: &SeparableUtility, axis: Axis, left: f64, right: f64) -> Result<f64> {
    check_axis(axis, left)?;
    check_axis(axis, right)?;
    if !(left < right) {
        return Err(Error::Precondition(format!("crossing point needs {left} < {right}")));
    }
    let (dl, dr) = (phi_prime(u, axis, left), phi_prime(u, axis, right));
    let num = dl * left - dr * right + phi(u, axis, right) - phi(u, axis, left);
    let t = num / (dl - dr);
    if !t.is_finite() {
        return Err(Error::Numerical(format!(
            "degenerate slope difference between tangents at {left} and {right}"
        )));
    }
    // Rounding can push the crossing onto an endpoint for extremely narrow
    // intervals; keep it inside the closed interval.
    Ok(t.clamp(left, right))
}

pub fn crossing_point_x(u: &SeparableUtility, x_p: f64, x_next: f64) -> Result<f64> {
    crossing_point(u, Axis::X, x_p, x_next)
}

pub fn crossing_point_c(u: &SeparableUtility, c_q: f64, c_next: f64) -> Result<f64> {
    crossing_point(u, Axis::C, c_q, c_next)
}

/// Largest gap on `[left, right]` when only the tangents at the two ends are
/// present.
pub fn interval_error(u: &SeparableUtility, axis: Axis, left: f64, right: f64) -> Result<f64> {
    if left == right {
        return Ok(0.0);
    }
    let t = crossing_point(u, axis, left, right)?;
    Ok(axis_error(u, axis, left, t).max(axis_error(u, axis, right, t)))
}

/// Result of one step of the partition recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NextPoint {
    Inside(f64),
    /// The next point lies past the search limit; the caller clamps to the
    /// box end.
    Beyond,
}

/// Next partition point for any separable utility.
///
/// First finds the offset `A` at which the tangent at `from` drifts `eps` above
/// the curve, then the offset `B` such that the tangent at `from + A + B`
/// passes through that same point, so both tangents cross exactly at the
/// budget. `limit` bounds the search.
pub fn next_point_general(u: &SeparableUtility, axis: Axis, from: f64, eps: f64, limit: f64) -> Result<NextPoint> {
    check_axis(axis, from)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("error budget must be positive, got {eps}")));
    }
    if !(limit > from) {
        return Ok(NextPoint::Beyond);
    }
    check_axis(axis, limit)?;
    let w = weight(u, axis);
    let target = eps / w;
    let (phi_from, slope_from) = (phi(u, axis, from), phi_prime(u, axis, from));

    let grow = |a: f64| slope_from * a - phi(u, axis, from + a) + phi_from - target;
    if grow(limit - from) < 0.0 {
        return Ok(NextPoint::Beyond);
    }
    let a_star = bisect(grow, 0.0, limit - from, 0.0)?;
    let cross = from + a_star;
    let lift = phi_from + a_star * slope_from;

    let meet = |b: f64| {
        let s = cross + b;
        phi(u, axis, s) - b * phi_prime(u, axis, s) - lift
    };
    if !(limit > cross) || meet(limit - cross) < 0.0 {
        return Ok(NextPoint::Beyond);
    }
    let b_star = bisect(meet, 0.0, limit - cross, 0.0)?;
    let next = cross + b_star;
    if next >= limit {
        return Ok(NextPoint::Beyond);
    }
    Ok(NextPoint::Inside(next))
}

fn check_log_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("error budget must be positive, got {eps}")))
    }
}

/// Root `b > 1` of `b - ln b - 1 = eps`.
pub fn log_gap_ratio_x(eps: f64) -> Result<f64> {
    check_log_eps(eps)?;
    let upper = 1.0 + 10.0 * (2.0 * eps).sqrt();
    bisect_expanding(|b| b - b.ln() - 1.0 - eps, 1.0, upper, f64::MAX, 0.0)
}

/// Root `theta` in (0, 1) of `theta - ln theta - 1 = eps`.
pub fn log_gap_ratio_c(eps: f64) -> Result<f64> {
    check_log_eps(eps)?;
    // Strictly decreasing on (0, 1), +inf at 0 and 0 at 1.
    bisect(|t| t - t.ln() - 1.0 - eps, f64::MIN_POSITIVE, 1.0, 0.0)
}

/// Relative step `a_x` of the log recursion: solves
/// `(1 + a) / a * ln(1 + a) = b_x`.
pub fn log_step_x(eps: f64) -> Result<f64> {
    let b = log_gap_ratio_x(eps)?;
    let g = |a: f64| (1.0 + a) * a.ln_1p() / a - b;
    bisect_expanding(g, f64::MIN_POSITIVE, 4.0 * (b - 1.0), f64::MAX, 0.0)
}

/// Relative step `d_c` of the log recursion: solves
/// `(1 - d) / d * ln(1 / (1 - d)) = theta_c`.
pub fn log_step_c(eps: f64) -> Result<f64> {
    let theta = log_gap_ratio_c(eps)?;
    let g = |d: f64| -(1.0 - d) * (-d).ln_1p() / d - theta;
    bisect(g, f64::MIN_POSITIVE, 1.0 - f64::EPSILON, 0.0)
}

/// `x_{p+1} = (1 + a_x) x_p + a_x` for unit-weight log utility.
pub fn next_point_log(x_p: f64, eps_x: f64) -> Result<f64> {
    check_x(x_p)?;
    let a = log_step_x(eps_x)?;
    Ok((1.0 + a) * x_p + a)
}

/// `c_{q+1} = (1 - d_c) c_q + d_c` for unit-weight log utility.
pub fn next_point_log_c(c_q: f64, eps_c: f64) -> Result<f64> {
    check_c(c_q)?;
    let d = log_step_c(eps_c)?;
    Ok((1.0 - d) * c_q + d)
}

/// Builds the minimal partition of `[lo, hi]` whose per-axis error does not
/// exceed `eps`. The last generated point is clamped to `hi`.
pub fn build_partition(u: &SeparableUtility, lo: f64, hi: f64, eps: f64, axis: Axis) -> Result<Partition> {
    check_axis(axis, lo)?;
    check_axis(axis, hi)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("error budget must be positive, got {eps}")));
    }
    if lo > hi {
        return Err(Error::Precondition(format!("partition box [{lo}, {hi}] is inverted")));
    }
    let mut points = vec![lo];
    if lo == hi {
        return Partition::new(axis, points);
    }
    let normalized = eps / weight(u, axis);
    if u.is_log() {
        // Unit-weight log recursion applied to the weight-normalized budget.
        let step = match axis {
            Axis::X => log_step_x(normalized)?,
            Axis::C => log_step_c(normalized)?,
        };
        let mut cur = lo;
        loop {
            let next = match axis {
                Axis::X => (1.0 + step) * cur + step,
                Axis::C => (1.0 - step) * cur + step,
            };
            if next >= hi || next <= cur {
                points.push(hi);
                break;
            }
            points.push(next);
            cur = next;
            if points.len() > MAX_POINTS {
                return Err(Error::Numerical("partition exceeds the point cap".into()));
            }
        }
    } else {
        let mut cur = lo;
        loop {
            match next_point_general(u, axis, cur, eps, hi)? {
                NextPoint::Inside(next) if next < hi && next > cur => {
                    points.push(next);
                    cur = next;
                }
                _ => {
                    points.push(hi);
                    break;
                }
            }
            if points.len() > MAX_POINTS {
                return Err(Error::Numerical("partition exceeds the point cap".into()));
            }
        }
    }
    Partition::new(axis, points)
}

/// Tangent planes `h_{l,r}(x, c) = a_l x + b_r c + gamma_{l,r}` at every pair of
/// partition points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneFamily {
    pub x_partition: Partition,
    pub c_partition: Partition,
    /// `a_l = alpha * phi1'(x_l)`.
    pub a: Vec<f64>,
    /// `b_r = beta * phi2'(c_r)`.
    pub b: Vec<f64>,
    /// `gamma[l][r] = alpha phi1(x_l) + beta phi2(c_r) - a_l x_l - b_r c_r`.
    pub gamma: Vec<Vec<f64>>,
    /// x-only part of the intercept, `alpha phi1(x_l) - a_l x_l`.
    pub x_intercepts: Vec<f64>,
    /// c-only part of the intercept, `beta phi2(c_r) - b_r c_r`.
    pub c_intercepts: Vec<f64>,
    pub budget: ErrorBudget,
}

impl HyperplaneFamily {
    /// `(M_x, M_c)`: tangent points per axis.
    pub fn counts(&self) -> (usize, usize) {
        (self.a.len(), self.b.len())
    }

    pub fn n_planes(&self) -> usize {
        self.a.len() * self.b.len()
    }

    pub fn eval(&self, l: usize, r: usize, x: f64, c: f64) -> f64 {
        self.a[l] * x + self.b[r] * c + self.gamma[l][r]
    }

    /// Lower envelope `min_{l,r} h_{l,r}(x, c)` over all planes.
    pub fn envelope(&self, x: f64, c: f64) -> f64 {
        let mut best = f64::INFINITY;
        for (l, row) in self.gamma.iter().enumerate() {
            let ax = self.a[l] * x;
            for (r, g) in row.iter().enumerate() {
                best = best.min(ax + self.b[r] * c + g);
            }
        }
        best
    }
}

/// Computes the tangent-plane coefficients for the two partitions.
pub fn build_hyperplanes(
    u: &SeparableUtility,
    px: &Partition,
    pc: &Partition,
    budget: ErrorBudget,
) -> Result<HyperplaneFamily> {
    if px.axis() != Axis::X || pc.axis() != Axis::C {
        return Err(Error::Precondition("expected an x-axis and a c-axis partition".into()));
    }
    let (alpha, beta) = (u.alpha(), u.beta());
    let a: Vec<f64> = px.points().iter().map(|&x| alpha * u.phi1_prime_unchecked(x)).collect();
    let b: Vec<f64> = pc.points().iter().map(|&c| beta * u.phi2_prime_unchecked(c)).collect();
    let fx: Vec<f64> = px.points().iter().map(|&x| alpha * u.phi1_unchecked(x)).collect();
    let fc: Vec<f64> = pc.points().iter().map(|&c| beta * u.phi2_unchecked(c)).collect();
    let gamma = px
        .points()
        .iter()
        .enumerate()
        .map(|(l, &x)| {
            pc.points()
                .iter()
                .enumerate()
                .map(|(r, &c)| fx[l] + fc[r] - a[l] * x - b[r] * c)
                .collect()
        })
        .collect();
    let x_intercepts = px.points().iter().enumerate().map(|(l, &x)| fx[l] - a[l] * x).collect();
    let c_intercepts = pc.points().iter().enumerate().map(|(r, &c)| fc[r] - b[r] * c).collect();
    Ok(HyperplaneFamily {
        x_partition: px.clone(),
        c_partition: pc.clone(),
        a,
        b,
        gamma,
        x_intercepts,
        c_intercepts,
        budget,
    })
}

/// Builds both partitions for the box and the tangent planes on them.
pub fn build_family(
    u: &SeparableUtility,
    x_box: (f64, f64),
    c_box: (f64, f64),
    budget: ErrorBudget,
) -> Result<HyperplaneFamily> {
    let px = build_partition(u, x_box.0, x_box.1, budget.eps_x, Axis::X)?;
    let pc = build_partition(u, c_box.0, c_box.1, budget.eps_c, Axis::C)?;
    build_hyperplanes(u, &px, &pc, budget)
}

/// Largest per-axis error of a partition, located at the tangent crossings.
pub fn axis_sup_error(u: &SeparableUtility, partition: &Partition) -> Result<f64> {
    let mut sup = 0.0_f64;
    for w in partition.points().windows(2) {
        sup = sup.max(interval_error(u, partition.axis(), w[0], w[1])?);
    }
    Ok(sup)
}

/// Suprema of the approximation error found by dense evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedError {
    /// `sup_x min_l e_l(x)`.
    pub sup_x: f64,
    /// `sup_c min_r e_r(c)`.
    pub sup_c: f64,
    /// `sup_{x,c} |f(x, c) - min_{l,r} h_{l,r}(x, c)|`.
    pub sup_joint: f64,
}

// Uniform grid over the partition's span plus every tangent crossing.
fn evaluation_points(u: &SeparableUtility, partition: &Partition, grid: usize) -> Vec<f64> {
    let (lo, hi) = (partition.lo(), partition.hi());
    let grid = grid.max(2);
    let mut pts: Vec<f64> = (0..grid)
        .map(|k| if k + 1 == grid { hi } else { lo + (hi - lo) * k as f64 / (grid - 1) as f64 })
        .collect();
    for w in partition.points().windows(2) {
        if let Ok(t) = crossing_point(u, partition.axis(), w[0], w[1]) {
            pts.push(t);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn min_axis_error(u: &SeparableUtility, partition: &Partition, t: f64) -> f64 {
    partition
        .points()
        .iter()
        .map(|&p| axis_error(u, partition.axis(), p, t))
        .fold(f64::INFINITY, f64::min)
}

/// Evaluates the approximation error on a `grid`-point lattice per axis
/// (plus the tangent crossings, where the per-axis maxima sit). The joint
/// error is computed directly from the planes, independently of the per-axis
/// values.
pub fn certify_error(u: &SeparableUtility, fam: &HyperplaneFamily, grid: usize) -> CertifiedError {
    let xs = evaluation_points(u, &fam.x_partition, grid);
    let cs = evaluation_points(u, &fam.c_partition, grid);
    let sup_x = xs
        .iter()
        .map(|&x| min_axis_error(u, &fam.x_partition, x))
        .fold(0.0, f64::max);
    let sup_c = cs
        .iter()
        .map(|&c| min_axis_error(u, &fam.c_partition, c))
        .fold(0.0, f64::max);
    let fc: Vec<f64> = cs.iter().map(|&c| u.beta() * u.phi2_unchecked(c)).collect();
    let sup_joint = xs
        .par_iter()
        .map(|&x| {
            let fx = u.alpha() * u.phi1_unchecked(x);
            let ax: Vec<f64> = fam.a.iter().map(|a| a * x).collect();
            let mut worst = 0.0_f64;
            for (k, &c) in cs.iter().enumerate() {
                let mut env = f64::INFINITY;
                for (l, row) in fam.gamma.iter().enumerate() {
                    for (r, g) in row.iter().enumerate() {
                        env = env.min(ax[l] + fam.b[r] * c + g);
                    }
                }
                worst = worst.max((fx + fc[k] - env).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    CertifiedError {
        sup_x,
        sup_c,
        sup_joint,
    }
}

/// Axis supremum after deleting the interior tangent point `which`.
pub fn removal_experiment(u: &SeparableUtility, fam: &HyperplaneFamily, which: usize, axis: Axis) -> Result<f64> {
    let partition = match axis {
        Axis::X => &fam.x_partition,
        Axis::C => &fam.c_partition,
    };
    axis_sup_error(u, &partition.without(which)?)
}

/// Ratio of the merged-interval error to the single-interval error when one
/// interior point of a unit-weight log x-partition with step `a` is removed.
pub fn removal_ratio_log_x(a: f64) -> f64 {
    let g = |t: f64| t - t.ln() - 1.0;
    let u = a.ln_1p() / a;
    let mu = (1.0 + a).powi(2) * a.ln_1p() / a;
    g(2.0 / (a + 2.0) * mu) / g((1.0 + a) * u)
}

/// c-axis analogue of [`removal_ratio_log_x`] for step `d`.
pub fn removal_ratio_log_c(d: f64) -> f64 {
    let g = |t: f64| t - t.ln() - 1.0;
    let theta = |s: f64| -(1.0 - s) * (-s).ln_1p() / s;
    let merged = 1.0 - (1.0 - d).powi(2);
    g(theta(merged)) / g(theta(d))
}

/// One row of the hyperplane-removal table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalRow {
    pub label: String,
    #[serde(rename = "M_x")]
    pub m_x: usize,
    #[serde(rename = "M_c")]
    pub m_c: usize,
    pub sup_x: f64,
    pub sup_c: f64,
    pub error_violation: bool,
}

/// Error certificate and removal table for one budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub eps_x: f64,
    pub eps_c: f64,
    pub x_box: (f64, f64),
    pub c_box: (f64, f64),
    #[serde(rename = "M_x")]
    pub m_x: usize,
    #[serde(rename = "M_c")]
    pub m_c: usize,
    pub sup_x: f64,
    pub sup_c: f64,
    pub sup_joint: f64,
    /// Axis supremum after removing each interior x point, in index order.
    pub x_removals: Vec<f64>,
    pub c_removals: Vec<f64>,
    pub removal_table: Vec<RemovalRow>,
}

/// Relative slack allowed before a certified error counts as a violation.
pub const VIOLATION_TOLERANCE: f64 = 1e-9;

/// Builds the family for the box, certifies it, and tabulates the effect of
/// dropping one interior plane per axis (the worst such removal is reported).
pub fn partition_report(
    u: &SeparableUtility,
    x_box: (f64, f64),
    c_box: (f64, f64),
    budget: ErrorBudget,
    grid: usize,
) -> Result<PartitionReport> {
    let fam = build_family(u, x_box, c_box, budget)?;
    let cert = certify_error(u, &fam, grid);
    let (m_x, m_c) = fam.counts();
    let x_removals = (1..m_x.saturating_sub(1))
        .map(|k| removal_experiment(u, &fam, k, Axis::X))
        .collect::<Result<Vec<_>>>()?;
    let c_removals = (1..m_c.saturating_sub(1))
        .map(|k| removal_experiment(u, &fam, k, Axis::C))
        .collect::<Result<Vec<_>>>()?;
    let worst = |v: &[f64]| v.iter().copied().fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
    let violates = |sx: f64, sc: f64| {
        sx > budget.eps_x * (1.0 + VIOLATION_TOLERANCE) || sc > budget.eps_c * (1.0 + VIOLATION_TOLERANCE)
    };
    let mut removal_table = vec![RemovalRow {
        label: "(M_x, M_c)".into(),
        m_x,
        m_c,
        sup_x: cert.sup_x,
        sup_c: cert.sup_c,
        error_violation: violates(cert.sup_x, cert.sup_c),
    }];
    let wx = worst(&x_removals);
    let wc = worst(&c_removals);
    if let Some(sx) = wx {
        removal_table.push(RemovalRow {
            label: "(M_x-1, M_c)".into(),
            m_x: m_x - 1,
            m_c,
            sup_x: sx,
            sup_c: cert.sup_c,
            error_violation: violates(sx, cert.sup_c),
        });
    }
    if let Some(sc) = wc {
        removal_table.push(RemovalRow {
            label: "(M_x, M_c-1)".into(),
            m_x,
            m_c: m_c - 1,
            sup_x: cert.sup_x,
            sup_c: sc,
            error_violation: violates(cert.sup_x, sc),
        });
    }
    if let (Some(sx), Some(sc)) = (wx, wc) {
        removal_table.push(RemovalRow {
            label: "(M_x-1, M_c-1)".into(),
            m_x: m_x - 1,
            m_c: m_c - 1,
            sup_x: sx,
            sup_c: sc,
            error_violation: violates(sx, sc),
        });
    }
    Ok(PartitionReport {
        eps_x: budget.eps_x,
        eps_c: budget.eps_c,
        x_box,
        c_box,
        m_x,
        m_c,
        sup_x: cert.sup_x,
        sup_c: cert.sup_c,
        sup_joint: cert.sup_joint,
        x_removals,
        c_removals,
        removal_table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn log() -> SeparableUtility {
        SeparableUtility::log()
    }

    // Independent bisection on e_p(x) - e_q(x) for the crossing point.
    fn crossing_by_bisection(u: &SeparableUtility, axis: Axis, p: f64, q: f64) -> f64 {
        let mut lo = p;
        let mut hi = q;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if axis_error(u, axis, p, mid) - axis_error(u, axis, q, mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn error_values() {
        let u = log();
        assert_eq!(error_x(&u, 0.3, 0.3).unwrap(), 0.0);
        assert!((error_x(&u, 0.0, 0.1).unwrap() - (0.1 - 1.1_f64.ln())).abs() < 1e-16);
        let left = error_x(&u, 0.0, -0.1).unwrap();
        assert!((left - (-0.1 - 0.9_f64.ln())).abs() < 1e-16);
        assert!(left > 0.0);
        assert_eq!(error_c(&u, 0.01, 0.01).unwrap(), 0.0);
        let ec = error_c(&u, 0.0, 0.01).unwrap();
        assert!((ec - (-0.01 - 0.99_f64.ln())).abs() < 1e-17);
        assert!(ec > 0.0);
        assert!(error_c(&u, 0.01, 0.0).unwrap() > 0.0);
        assert!(error_x(&u, 0.0, -1.0).is_err());
        assert!(error_c(&u, 0.0, 1.0).is_err());
    }

    #[test]
    fn crossing_point_matches_bisection() {
        let u = log();
        let t = crossing_point_x(&u, 0.0, 0.2).unwrap();
        let oracle = crossing_by_bisection(&u, Axis::X, 0.0, 0.2);
        assert!((t - oracle).abs() < 1e-12);
        assert!(t > 0.0 && t < 0.2);
        assert!((error_x(&u, 0.0, t).unwrap() - error_x(&u, 0.2, t).unwrap()).abs() < 1e-10);
        let p = SeparableUtility::power(0.5).unwrap();
        let t = crossing_point_c(&p, 0.1, 0.3).unwrap();
        assert!((t - crossing_by_bisection(&p, Axis::C, 0.1, 0.3)).abs() < 1e-12);
    }

    #[test]
    fn crossing_point_collapses_with_gap() {
        let u = log();
        let mut prev = f64::INFINITY;
        for gap in [1e-3, 1e-5] {
            let t = crossing_point_x(&u, 0.05, 0.05 + gap).unwrap();
            assert!(t >= 0.05 && t <= 0.05 + gap);
            let e = error_x(&u, 0.05, t).unwrap();
            assert!(e < prev);
            prev = e;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn log_step_small_eps_asymptotics() {
        let eps = 1e-5;
        let a = log_step_x(eps).unwrap();
        let approx = 2.0 * (2.0 * eps).sqrt();
        assert!((a - approx).abs() / approx < 0.05, "{a} vs {approx}");
        // Fine grid search of the defining equation.
        let b = log_gap_ratio_x(eps).unwrap();
        let (mut best, mut best_res) = (0.0, f64::INFINITY);
        for k in 1..=200_000 {
            let cand = 0.02 * k as f64 / 200_000.0;
            let res = ((1.0 + cand) * cand.ln_1p() / cand - b).abs();
            if res < best_res {
                best = cand;
                best_res = res;
            }
        }
        assert!((a - best).abs() <= 0.02 / 200_000.0);
        assert_eq!(next_point_log(0.0, eps).unwrap(), a);
    }

    #[test]
    fn log_recursion_is_geometric_in_one_plus_x() {
        let eps = 1e-4;
        let a = log_step_x(eps).unwrap();
        let mut pts = vec![-0.3];
        for _ in 0..10 {
            pts.push(next_point_log(*pts.last().unwrap(), eps).unwrap());
        }
        for w in pts.windows(3) {
            let ratio = (w[2] - w[1]) / (w[1] - w[0]);
            assert!((ratio - (1.0 + a)).abs() < 1e-9);
        }
    }

    #[test]
    fn log_c_recursion_certificate() {
        let u = log();
        let eps = 1e-5;
        assert_eq!(next_point_log_c(0.0, eps).unwrap(), log_step_c(eps).unwrap());
        let c0 = 0.003;
        let c1 = next_point_log_c(c0, eps).unwrap();
        assert!((interval_error(&u, Axis::C, c0, c1).unwrap() - eps).abs() < 1e-9);
        let mut c = 0.0;
        for _ in 0..10_000 {
            c = next_point_log_c(c, 1e-3).unwrap();
            assert!(c < 1.0);
        }
    }

    #[test]
    fn general_matches_log_on_c_axis() {
        let u = log();
        for (c, eps) in [(0.0, 1e-5), (0.01, 3e-6), (0.2, 1e-3)] {
            let log_route = next_point_log_c(c, eps).unwrap();
            let NextPoint::Inside(general) = next_point_general(&u, Axis::C, c, eps, 0.999).unwrap() else {
                panic!("unexpected clamp");
            };
            assert!((log_route - general).abs() < 1e-10, "{log_route} vs {general}");
        }
    }

    #[test]
    fn general_power_certificate() {
        let u = SeparableUtility::power(0.5).unwrap();
        let eps = 1e-5;
        let NextPoint::Inside(next) = next_point_general(&u, Axis::X, -0.1, eps, 5.0).unwrap() else {
            panic!("unexpected clamp");
        };
        let t = crossing_point_x(&u, -0.1, next).unwrap();
        assert!((error_x(&u, -0.1, t).unwrap() - eps).abs() < 1e-9);
    }

    #[test]
    fn general_step_shrinks_with_eps() {
        let u = SeparableUtility::crra(3.0).unwrap();
        let steps: Vec<f64> = [1e-3, 1e-5, 1e-7]
            .iter()
            .map(|&eps| match next_point_general(&u, Axis::X, 0.0, eps, 10.0).unwrap() {
                NextPoint::Inside(x) => x,
                NextPoint::Beyond => panic!("unexpected clamp"),
            })
            .collect();
        assert!(steps.windows(2).all(|w| w[1] < w[0]));
        assert!(steps[2] > 0.0);
    }

    #[test]
    fn clamp_signal_when_box_is_short() {
        let u = log();
        assert_eq!(next_point_general(&u, Axis::X, 0.0, 1e-3, 0.01).unwrap(), NextPoint::Beyond);
        assert!(next_point_general(&u, Axis::X, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn partition_count_in_reported_range() {
        let p = build_partition(&log(), -0.2, 0.2, 1e-3, Axis::X).unwrap();
        assert!((6..=11).contains(&p.len()), "M_x = {}", p.len());
        assert_eq!(p.lo(), -0.2);
        assert_eq!(p.hi(), 0.2);
    }

    #[test]
    fn degenerate_box() {
        let u = log();
        let p = build_partition(&u, 0.05, 0.05, 1e-3, Axis::X).unwrap();
        assert_eq!(p.len(), 1);
        let pc = build_partition(&u, 0.0, 0.0, 1e-3, Axis::C).unwrap();
        let fam = build_hyperplanes(&u, &p, &pc, ErrorBudget::new(1e-3, 1e-3).unwrap()).unwrap();
        let cert = certify_error(&u, &fam, 1000);
        assert_eq!((cert.sup_x, cert.sup_c, cert.sup_joint), (0.0, 0.0, 0.0));
    }

    #[test]
    fn dense_grid_certificate() {
        for u in [log(), SeparableUtility::power(0.5).unwrap(), SeparableUtility::crra(2.5).unwrap()] {
            let eps = 1e-4;
            let p = build_partition(&u, -0.3, 0.4, eps, Axis::X).unwrap();
            let mut worst = 0.0_f64;
            for k in 0..100_000 {
                let x = -0.3 + 0.7 * k as f64 / 99_999.0;
                worst = worst.max(min_axis_error(&u, &p, x));
            }
            assert!(worst <= eps + 1e-9, "{u:?}: {worst}");
        }
    }

    #[test]
    fn coefficients_at_reference_points() {
        let u = log();
        let px = Partition::new(Axis::X, vec![0.0, 0.1]).unwrap();
        let pc = Partition::new(Axis::C, vec![0.0, 0.01]).unwrap();
        let fam = build_hyperplanes(&u, &px, &pc, ErrorBudget::new(1e-3, 1e-3).unwrap()).unwrap();
        assert_eq!((fam.a[0], fam.b[0], fam.gamma[0][0]), (1.0, -1.0, 0.0));
        assert!((fam.a[1] - 1.0 / 1.1).abs() < 1e-16);
        assert!((fam.b[1] + 1.0 / 0.99).abs() < 1e-16);
        for (l, &x) in px.points().iter().enumerate() {
            for (r, &c) in pc.points().iter().enumerate() {
                assert!((fam.eval(l, r, x, c) - u.eval_f(x, c).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn removal_ratio_near_four() {
        for eps in [1e-5, 1.5e-5, 8e-6] {
            let a = log_step_x(eps).unwrap();
            let d = log_step_c(eps).unwrap();
            let rx = removal_ratio_log_x(a);
            let rc = removal_ratio_log_c(d);
            assert!((rx - 4.0).abs() < 0.05, "{rx}");
            assert!((rc - 4.0).abs() < 0.05, "{rc}");
            // Removal computed from crossings agrees with the closed form.
            let u = log();
            let p = build_partition(&u, -0.2, 0.2, eps, Axis::X).unwrap();
            let fam = build_hyperplanes(&u, &p, &Partition::new(Axis::C, vec![0.0]).unwrap(), ErrorBudget::new(eps, eps).unwrap()).unwrap();
            let removed = removal_experiment(&u, &fam, 1, Axis::X).unwrap();
            assert!((removed / eps - rx).abs() < 1e-4, "{} vs {rx}", removed / eps);
        }
    }

    #[test]
    fn removal_of_endpoint_rejected() {
        let u = log();
        let fam = build_family(&u, (-0.2, 0.2), (0.0, 0.02), ErrorBudget::new(1e-5, 1e-5).unwrap()).unwrap();
        assert!(removal_experiment(&u, &fam, 0, Axis::X).is_err());
        let last = fam.counts().0 - 1;
        assert!(removal_experiment(&u, &fam, last, Axis::X).is_err());
    }

    #[test]
    fn errors_are_monotone_around_each_point() {
        let u = log();
        let p = build_partition(&u, -0.2, 0.2, 1e-4, Axis::X).unwrap();
        for &xl in p.points() {
            let left: Vec<f64> = (0..50).map(|k| -0.2 + (xl + 0.2) * k as f64 / 50.0).collect();
            let right: Vec<f64> = (1..=50).map(|k| xl + (0.2 - xl) * k as f64 / 50.0).collect();
            let el: Vec<f64> = left.iter().map(|&x| error_x(&u, xl, x).unwrap()).collect();
            let er: Vec<f64> = right.iter().map(|&x| error_x(&u, xl, x).unwrap()).collect();
            assert!(el.windows(2).all(|w| w[1] < w[0] || w[0] == w[1] && w[0] == 0.0));
            assert!(er.windows(2).all(|w| w[1] > w[0] || w[0] == w[1]));
        }
    }

    #[test]
    fn equal_error_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for u in [log(), SeparableUtility::power(0.3).unwrap(), SeparableUtility::crra(2.0).unwrap()] {
            let eps = 10f64.powf(rng.random_range(-6.0..-3.0));
            let p = build_partition(&u, -0.25, 0.3, eps, Axis::X).unwrap();
            let n = p.len();
            for (k, w) in p.points().windows(2).enumerate() {
                let e = interval_error(&u, Axis::X, w[0], w[1]).unwrap();
                if k + 2 < n {
                    assert!((e - eps).abs() < 1e-9, "{u:?} interval {k}: {e} vs {eps}");
                } else {
                    assert!(e <= eps + 1e-9);
                }
            }
        }
    }
}
