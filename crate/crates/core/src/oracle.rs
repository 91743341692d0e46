//! Brute-force references for the robust model.
//!
//! Everything here avoids the sparse LP solver used by [`crate::robust_lp`]:
//! worst-case expectations are computed with the dense simplex of
//! [`crate::dense_lp`] and the exact portfolio problem by grid search.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ambiguity::PolyhedralAmbiguitySet;
use crate::data::ScenarioSet;
use crate::error::{Error, Result};
use crate::partition::{
    build_family, build_partition, certify_error, interval_error, next_point_general, next_point_log, Axis,
    ErrorBudget, HyperplaneFamily, NextPoint,
};
use crate::robust_lp::{
    assemble_with, family_for, hyperplane_boxes, solve, survival_load, weights_feasible, AssemblyOptions,
    HyperplaneEncoding, LpSolution, TradingConstraintSet,
};
use crate::synthetic::random_scenarios;
use crate::utility::SeparableUtility;

const WEIGHT_TOL: f64 = 1e-12;

/// `q_j = U((1 + K^T x^j)(1 - |K - K_prev|^T C))` for every scenario; entries
/// outside the utility's domain are `-inf`.
pub fn inner_objective(k: &[f64], k_prev: &[f64], scen: &ScenarioSet, cost: &[f64], u: &SeparableUtility) -> Vec<f64> {
    let c: f64 = k.iter().zip(k_prev).zip(cost).map(|((a, b), c)| (a - b).abs() * c).sum();
    scen.scenarios
        .iter()
        .map(|x| {
            let y: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
            u.eval_f(y, c).unwrap_or(f64::NEG_INFINITY)
        })
        .collect()
}

/// `min_{p in amb} p^T q` for the exact objective, with a minimizing `p`.
pub fn inner_worst_case(
    k: &[f64],
    k_prev: &[f64],
    scen: &ScenarioSet,
    amb: &PolyhedralAmbiguitySet,
    cost: &[f64],
    u: &SeparableUtility,
) -> Result<(f64, Vec<f64>)> {
    let q = inner_objective(k, k_prev, scen, cost, u);
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("weights leave the utility's domain in some scenario".into()));
    }
    amb.min_expectation(&q)
}

/// `min_j (q + A0^T nu + A1^T lambda)_j - nu^T d0 - lambda^T d1`.
pub fn dual_value(q: &[f64], nu: &[f64], lambda: &[f64], amb: &PolyhedralAmbiguitySet) -> f64 {
    let shift = amb.dual_shift(nu, lambda);
    let worst = q.iter().zip(&shift).map(|(a, b)| a + b).fold(f64::INFINITY, f64::min);
    worst - amb.dual_offset(nu, lambda)
}

/// Gap between the exact inner worst case at the solution's weights and the
/// dual objective built from the solution's `nu`, `lambda`.
pub fn duality_gap(
    sol: &LpSolution,
    k_prev: &[f64],
    scen: &ScenarioSet,
    amb: &PolyhedralAmbiguitySet,
    cost: &[f64],
    u: &SeparableUtility,
) -> Result<f64> {
    if !sol.is_optimal() {
        return Err(Error::NotOptimal(format!("solution status is {:?}", sol.status)));
    }
    let (inner, _) = inner_worst_case(&sol.weights, k_prev, scen, amb, cost, u)?;
    let q = inner_objective(&sol.weights, k_prev, scen, cost, u);
    Ok((inner - dual_value(&q, &sol.nu, &sol.lambda, amb)).abs())
}

/// Exact worst-case objective at `k`, or `None` when `k` is infeasible.
pub fn exact_value(
    k: &[f64],
    k_prev: &[f64],
    scen: &ScenarioSet,
    amb: &PolyhedralAmbiguitySet,
    con: &TradingConstraintSet,
    u: &SeparableUtility,
) -> Option<f64> {
    if !weights_feasible(scen, con, k, k_prev, WEIGHT_TOL) {
        return None;
    }
    inner_worst_case(k, k_prev, scen, amb, &con.cost_vector, u).ok().map(|(v, _)| v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactSolution {
    pub weights: Vec<f64>,
    pub value: f64,
    /// Grid step of the final refinement.
    pub step: f64,
    pub evaluations: usize,
}

pub const EXACT_MAX_ASSETS: usize = 3;
pub const EXACT_MAX_SCENARIOS: usize = 20;
/// Largest admissible grid step of the final refinement.
pub const EXACT_GRID_STEP: f64 = 1e-3;

/// Maximizes the exact worst-case objective by grid search.
///
/// The first grid spans the whole feasible box around `K_prev` with 41 points
/// per coordinate; each later grid is centered on the incumbent, covers two
/// previous steps either way and uses a step four times finer. The search
/// stops after the first grid whose step is at most [`EXACT_GRID_STEP`]. The
/// objective is concave, so the incumbent's neighborhood holds the maximizer.
pub fn exact_small_solve(
    scen: &ScenarioSet,
    amb: &PolyhedralAmbiguitySet,
    con: &TradingConstraintSet,
    k_prev: &[f64],
    u: &SeparableUtility,
) -> Result<ExactSolution> {
    let n = scen.tickers.len();
    let m = scen.scenarios.len();
    if n > EXACT_MAX_ASSETS || m > EXACT_MAX_SCENARIOS {
        return Err(Error::Precondition(format!(
            "exact search supports n <= {EXACT_MAX_ASSETS} and m <= {EXACT_MAX_SCENARIOS}, got n = {n}, m = {m}"
        )));
    }
    if con.n_assets() != n || k_prev.len() != n || amb.m() != m {
        return Err(Error::Dimension("scenario, constraint and ambiguity dimensions disagree".into()));
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| {
            let cap = con.holding_caps.as_ref().map_or(con.leverage, |c| c[i].min(con.leverage));
            (if con.allow_short { -cap } else { 0.0 }, cap)
        })
        .unzip();
    let widest = (0..n).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
    let eval = |k: &[f64]| exact_value(k, k_prev, scen, amb, con, u);

    let mut center = k_prev.to_vec();
    let mut half: Vec<f64> = (0..n).map(|i| (hi[i] - center[i]).max(center[i] - lo[i])).collect();
    let mut step = widest / 40.0;
    let mut best: Option<(Vec<f64>, f64)> = eval(k_prev).map(|v| (k_prev.to_vec(), v));
    let mut evaluations = 1;
    if step == 0.0 {
        return match best {
            Some((k, v)) => Ok(ExactSolution {
                weights: k,
                value: v,
                step: 0.0,
                evaluations,
            }),
            None => Err(Error::Precondition("no feasible portfolio found".into())),
        };
    }
    loop {
        let counts: Vec<i64> = half.iter().map(|h| (h / step - 1e-9).ceil().max(0.0) as i64).collect();
        let mut idx: Vec<i64> = counts.iter().map(|c| -c).collect();
        'grid: loop {
            let k: Vec<f64> = (0..n).map(|i| center[i] + idx[i] as f64 * step).collect();
            if (0..n).all(|i| k[i] >= lo[i] - WEIGHT_TOL && k[i] <= hi[i] + WEIGHT_TOL) {
                evaluations += 1;
                if let Some(v) = eval(&k) {
                    if best.as_ref().is_none_or(|(_, b)| v > *b) {
                        best = Some((k, v));
                    }
                }
            }
            for i in 0..n {
                if idx[i] < counts[i] {
                    idx[i] += 1;
                    continue 'grid;
                }
                idx[i] = -counts[i];
            }
            break;
        }
        let Some((k, _)) = &best else {
            return Err(Error::Precondition("no feasible portfolio on the search grid".into()));
        };
        if step <= EXACT_GRID_STEP {
            break;
        }
        center = k.clone();
        half = vec![2.0 * step; n];
        step /= 4.0;
    }
    let (weights, value) = best.expect("checked above");
    Ok(ExactSolution {
        weights,
        value,
        step,
        evaluations,
    })
}

/// Bound on `sum_i |dJ/dK_i|` over the hyperplane boxes, used to turn a grid
/// step into a value tolerance.
pub fn lipschitz_bound(u: &SeparableUtility, scen: &ScenarioSet, con: &TradingConstraintSet) -> f64 {
    let ((x_lo, _), (_, c_hi)) = hyperplane_boxes(scen, con);
    let slope_x = u.alpha() * u.phi1_prime(x_lo).unwrap_or(f64::INFINITY);
    let slope_c = u.beta() * u.phi2_prime(c_hi).map(f64::abs).unwrap_or(f64::INFINITY);
    let n = scen.tickers.len();
    (0..n)
        .map(|i| {
            let xmax = scen.scenarios.iter().map(|x| x[i].abs()).fold(0.0, f64::max);
            slope_x * xmax + slope_c * con.cost_vector[i]
        })
        .sum()
}

/// `J(K, K_prev)` under the empirical weights of `scen`.
pub fn empirical_objective(k: &[f64], k_prev: &[f64], scen: &ScenarioSet, cost: &[f64], u: &SeparableUtility) -> f64 {
    inner_objective(k, k_prev, scen, cost, u)
        .iter()
        .zip(&scen.probabilities)
        .map(|(q, p)| p * q)
        .sum()
}

/// `J` at the convex combination minus the combination of the end values.
pub fn concavity_gap(
    u: &SeparableUtility,
    scen: &ScenarioSet,
    cost: &[f64],
    first: (&[f64], &[f64]),
    second: (&[f64], &[f64]),
    lambda: f64,
) -> f64 {
    let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect() };
    let k = mix(first.0, second.0);
    let kp = mix(first.1, second.1);
    let j_mid = empirical_objective(&k, &kp, scen, cost, u);
    let j1 = empirical_objective(first.0, first.1, scen, cost, u);
    let j2 = empirical_objective(second.0, second.1, scen, cost, u);
    j_mid - (lambda * j1 + (1.0 - lambda) * j2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcavityWitness {
    pub trial: usize,
    pub k1: Vec<f64>,
    pub k1_prev: Vec<f64>,
    pub k2: Vec<f64>,
    pub k2_prev: Vec<f64>,
    pub lambda: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcavityReport {
    pub trials: usize,
    pub violations: usize,
    pub min_gap: f64,
    pub witness: Option<ConcavityWitness>,
}

impl ConcavityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

pub const CONCAVITY_SLACK: f64 = 1e-9;

/// Random weights with `sum |K| <= leverage` and survival load below one.
fn random_feasible_weights(rng: &mut ChaCha8Rng, scen: &ScenarioSet, leverage: f64) -> Vec<f64> {
    let n = scen.tickers.len();
    let mut k: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let gross: f64 = k.iter().map(|v| v.abs()).sum();
    let target = rng.random_range(0.0..leverage);
    let mut scale = if gross > 0.0 { target / gross } else { 0.0 };
    let load = survival_load(scen, &k) * scale;
    if load > 0.999 {
        scale *= 0.999 / load;
    }
    k.iter_mut().for_each(|v| *v *= scale);
    k
}

/// Samples pairs of feasible `(K, K_prev)` and checks the concavity inequality
/// at a random convex combination.
pub fn concavity_probe(
    u: &SeparableUtility,
    scen: &ScenarioSet,
    cost: &[f64],
    leverage: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcavityReport> {
    if trials < 100 {
        return Err(Error::Precondition(format!("concavity probe needs at least 100 trials, got {trials}")));
    }
    if cost.len() != scen.tickers.len() || cost.iter().any(|c| !(0.0..1.0).contains(c)) {
        return Err(Error::Domain("cost vector must match the assets and lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ConcavityReport {
        trials,
        violations: 0,
        min_gap: f64::INFINITY,
        witness: None,
    };
    let mut trial = 0;
    while trial < trials {
        let k1 = random_feasible_weights(&mut rng, scen, leverage);
        let p1 = random_feasible_weights(&mut rng, scen, leverage);
        let k2 = random_feasible_weights(&mut rng, scen, leverage);
        let p2 = random_feasible_weights(&mut rng, scen, leverage);
        let lambda = rng.random_range(0.0..1.0);
        let cost_of = |k: &[f64], p: &[f64]| -> f64 { k.iter().zip(p).zip(cost).map(|((a, b), c)| (a - b).abs() * c).sum() };
        if cost_of(&k1, &p1) >= 1.0 || cost_of(&k2, &p2) >= 1.0 {
            continue;
        }
        let gap = concavity_gap(u, scen, cost, (&k1, &p1), (&k2, &p2), lambda);
        if gap < report.min_gap {
            report.min_gap = gap;
        }
        if !(gap >= -CONCAVITY_SLACK) {
            report.violations += 1;
            if report.witness.is_none() {
                report.witness = Some(ConcavityWitness {
                    trial,
                    k1,
                    k1_prev: p1,
                    k2,
                    k2_prev: p2,
                    lambda,
                    gap,
                });
            }
        }
        trial += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivabilityReport {
    pub trials: usize,
    pub violations: usize,
    pub min_factor: f64,
}

/// Draws random instances, constraint-satisfying `(K, K_prev)` and return
/// vectors inside the scenario bounds, and counts negative account factors
/// `(1 + K^T X)(1 - |K - K_prev|^T C)`.
pub fn survivability_trials(trials: usize, seed: u64) -> SurvivabilityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SurvivabilityReport {
        trials,
        violations: 0,
        min_factor: f64::INFINITY,
    };
    for _ in 0..trials {
        let n = rng.random_range(1..7);
        let m = rng.random_range(2..21);
        let scen = random_scenarios(&mut rng, n, m, -0.6, 0.6);
        let leverage = rng.random_range(1.0..3.0);
        let cost: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.05)).collect();
        let c_max = rng.random_range(0.0..0.99);
        let con = TradingConstraintSet::new(leverage, None, c_max, cost, true).expect("valid by construction");
        let k_prev = random_feasible_weights(&mut rng, &scen, leverage);
        let mut k = random_feasible_weights(&mut rng, &scen, leverage);
        let paid = con.turnover_cost(&k, &k_prev);
        if paid > c_max {
            // Turnover cost is homogeneous in K - K_prev; shrink toward K_prev.
            let t = c_max / paid * (1.0 - 1e-12);
            k = k.iter().zip(&k_prev).map(|(a, b)| b + t * (a - b)).collect();
        }
        debug_assert!(weights_feasible(&scen, &con, &k, &k_prev, 1e-12));
        let x: Vec<f64> = if rng.random_range(0.0..1.0) < 0.5 {
            scen.scenarios[rng.random_range(0..m)].clone()
        } else {
            (0..n).map(|i| rng.random_range(scen.lower[i]..=scen.upper[i])).collect()
        };
        let gross: f64 = 1.0 + k.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        let factor = gross * (1.0 - con.turnover_cost(&k, &k_prev));
        report.min_factor = report.min_factor.min(factor);
        if factor < 0.0 {
            report.violations += 1;
        }
    }
    report
}

/// Selectable groups of checks for [`run_verify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Partition,
    Separability,
    Inner,
    Duality,
    Exact,
    Concavity,
    Survivability,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Partition,
        Suite::Separability,
        Suite::Inner,
        Suite::Duality,
        Suite::Exact,
        Suite::Concavity,
        Suite::Survivability,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Partition => "partition",
            Suite::Separability => "separability",
            Suite::Inner => "inner",
            Suite::Duality => "duality",
            Suite::Exact => "exact",
            Suite::Concavity => "concavity",
            Suite::Survivability => "survivability",
        }
    }

    pub fn parse(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Deliberate defects used to check that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Negates the slope of one interior x-plane.
    FlipHyperplaneSign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckFailure {
    pub invariant: String,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub passed: bool,
    pub checks: usize,
    pub failures: Vec<CheckFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

struct Recorder {
    checks: usize,
    failures: Vec<CheckFailure>,
}

impl Recorder {
    fn new() -> Self {
        Self {
            checks: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, invariant: &str, witness: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(CheckFailure {
                invariant: invariant.to_string(),
                witness: witness(),
            });
        }
    }

    fn error(&mut self, invariant: &str, err: Error) {
        self.check(false, invariant, || err.to_string());
    }

    fn finish(self, suite: Suite) -> SuiteResult {
        SuiteResult {
            suite,
            passed: self.failures.is_empty(),
            checks: self.checks,
            failures: self.failures,
        }
    }
}

/// Runs the selected suites with one seed. Suites run in a fixed order and
/// each derives its own generator from the seed.
pub fn run_verify(suites: &[Suite], seed: u64, fault: Option<Fault>) -> Result<VerifyReport> {
    if suites.is_empty() {
        return Err(Error::Config("no verification suite selected".into()));
    }
    let mut selected = suites.to_vec();
    selected.sort();
    selected.dedup();
    let results: Vec<SuiteResult> = selected
        .iter()
        .map(|s| {
            let rng = ChaCha8Rng::seed_from_u64(seed ^ (*s as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut rec = Recorder::new();
            match s {
                Suite::Partition => partition_suite(&mut rec, rng, fault),
                Suite::Separability => separability_suite(&mut rec, rng),
                Suite::Inner => inner_suite(&mut rec, rng),
                Suite::Duality => duality_suite(&mut rec, rng),
                Suite::Exact => exact_suite(&mut rec, rng),
                Suite::Concavity => concavity_suite(&mut rec, rng),
                Suite::Survivability => survivability_suite(&mut rec, rng),
            }
            rec.finish(*s)
        })
        .collect();
    Ok(VerifyReport {
        seed,
        passed: results.iter().all(|r| r.passed),
        suites: results,
    })
}

fn partition_suite(rec: &mut Recorder, mut rng: ChaCha8Rng, fault: Option<Fault>) {
    let u = SeparableUtility::log();
    for _ in 0..20 {
        let eps = 10f64.powf(rng.random_range(-6.0..-4.0));
        let x_p = rng.random_range(-0.3..0.3);
        match (next_point_log(x_p, eps), next_point_general(&u, Axis::X, x_p, eps, 10.0)) {
            (Ok(a), Ok(NextPoint::Inside(b))) => {
                rec.check((a - b).abs() <= 1e-10, "next_point_agreement", || format!("x_p={x_p} eps={eps}: {a} vs {b}"))
            }
            (a, b) => rec.check(false, "next_point_agreement", || format!("x_p={x_p} eps={eps}: {a:?} / {b:?}")),
        }
        match build_partition(&u, -0.2, 0.2, eps, Axis::X) {
            Ok(p) => {
                let pts = p.points();
                for w in 0..pts.len() - 1 {
                    let e = interval_error(&u, Axis::X, pts[w], pts[w + 1]).unwrap_or(f64::NAN);
                    let last = w + 2 == pts.len();
                    let ok = if last { e <= eps + 1e-9 } else { (e - eps).abs() <= 1e-9 };
                    rec.check(ok, "interval_error_equals_budget", || format!("eps={eps} interval {w}: {e}"));
                }
            }
            Err(e) => rec.error("interval_error_equals_budget", e),
        }
    }
    let budget = ErrorBudget::new(1e-5, 1e-5).expect("positive");
    let mut fam = match build_family(&u, (-0.2, 0.2), (0.0, 0.02), budget) {
        Ok(f) => f,
        Err(e) => return rec.error("hyperplane_overestimate", e),
    };
    if fault == Some(Fault::FlipHyperplaneSign) {
        let mid = fam.a.len() / 2;
        flip_slope(&mut fam, mid);
    }
    let mut worst = f64::INFINITY;
    for a in 0..=200 {
        for b in 0..=20 {
            let x = -0.2 + 0.4 * a as f64 / 200.0;
            let c = 0.02 * b as f64 / 20.0;
            worst = worst.min(fam.envelope(x, c) - u.eval_f_unchecked(x, c));
        }
    }
    rec.check(worst >= -1e-12, "hyperplane_overestimate", || format!("envelope below utility by {}", -worst));
    rec.check(worst <= budget.total() + 1e-9 || worst < 0.0, "hyperplane_error_within_budget", || {
        format!("smallest gap {worst}")
    });
}

fn flip_slope(fam: &mut HyperplaneFamily, l: usize) {
    // Keep the plane through its tangent point while negating the slope.
    let x = fam.x_partition.points()[l];
    let shift = 2.0 * fam.a[l] * x;
    fam.a[l] = -fam.a[l];
    fam.x_intercepts[l] += shift;
    for g in fam.gamma[l].iter_mut() {
        *g += shift;
    }
}

fn separability_suite(rec: &mut Recorder, mut rng: ChaCha8Rng) {
    let u = SeparableUtility::log();
    for _ in 0..3 {
        let ex = 10f64.powf(rng.random_range(-5.5..-4.0));
        let ec = 10f64.powf(rng.random_range(-5.5..-4.0));
        let budget = ErrorBudget::new(ex, ec).expect("positive");
        match build_family(&u, (-0.2, 0.2), (0.0, 0.02), budget) {
            Ok(fam) => {
                let cert = certify_error(&u, &fam, 300);
                let diff = (cert.sup_joint - (cert.sup_x + cert.sup_c)).abs();
                rec.check(diff <= 1e-9, "separable_sup_error", || format!("budget ({ex}, {ec}): {cert:?}"));
                rec.check(cert.sup_x <= ex * (1.0 + 1e-6) && cert.sup_c <= ec * (1.0 + 1e-6), "sup_within_budget", || {
                    format!("budget ({ex}, {ec}): {cert:?}")
                });
            }
            Err(e) => rec.error("separable_sup_error", e),
        }
    }
}

fn inner_suite(rec: &mut Recorder, mut rng: ChaCha8Rng) {
    for _ in 0..100 {
        let m = rng.random_range(1..12);
        let q: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let p_hat: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let min_q = q.iter().copied().fold(f64::INFINITY, f64::min);
        let emp: f64 = p_hat.iter().zip(&q).map(|(a, b)| a * b).sum();
        for (gamma, expected) in [(1.0, min_q), (0.0, emp), (0.5, 0.5 * emp + 0.5 * min_q)] {
            match PolyhedralAmbiguitySet::from_gamma(&p_hat, gamma).and_then(|s| s.min_expectation(&q)) {
                Ok((v, _)) => rec.check((v - expected).abs() <= 1e-12, "inner_worst_case_closed_form", || {
                    format!("gamma={gamma} q={q:?}: {v} vs {expected}")
                }),
                Err(e) => rec.error("inner_worst_case_closed_form", e),
            }
        }
    }
}

/// Budget of the dense hyperplane families used by the duality checks.
pub const DUALITY_BUDGET: f64 = 1e-8;

/// Solves one random instance densely and returns `(gap, budget)`.
pub fn duality_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    gamma: f64,
    cost_rate: f64,
) -> Result<(f64, LpSolution, f64)> {
    let u = SeparableUtility::log();
    let scen = random_scenarios(rng, n, m, -0.1, 0.1);
    let c_max = if cost_rate > 0.0 { 3.0 * cost_rate } else { 0.0 };
    let con = TradingConstraintSet::uniform(n, 1.5, cost_rate, c_max)?;
    let budget = ErrorBudget::new(DUALITY_BUDGET / 2.0, DUALITY_BUDGET / 2.0)?;
    let fam = family_for(&u, &scen, &con, budget)?;
    let amb = PolyhedralAmbiguitySet::from_gamma(&scen.probabilities, gamma)?;
    let k_prev = vec![0.0; n];
    let options = AssemblyOptions {
        encoding: HyperplaneEncoding::Separated,
        strip_turnover: false,
    };
    let model = assemble_with(&scen, &fam, &amb, &con, &k_prev, options)?;
    let sol = solve(&model);
    let gap = duality_gap(&sol, &k_prev, &scen, &amb, &con.cost_vector, &u)?;
    // The dual value with lambda bumped on one row must not improve.
    let mut bumped = sol.clone();
    if let Some(l) = bumped.lambda.first_mut() {
        *l += 0.1;
    }
    let bumped_gap = duality_gap(&bumped, &k_prev, &scen, &amb, &con.cost_vector, &u)?;
    Ok((gap, sol, bumped_gap))
}

fn duality_suite(rec: &mut Recorder, mut rng: ChaCha8Rng) {
    for case in 0..6 {
        let n = rng.random_range(1..4);
        let m = rng.random_range(2..10);
        let gamma = [0.0, 0.3, 1.0][case % 3];
        let cost = [0.0, 0.002][case % 2];
        match duality_instance(&mut rng, n, m, gamma, cost) {
            Ok((gap, _, bumped)) => {
                rec.check(gap <= 1e-6 + DUALITY_BUDGET, "duality_gap", || format!("case {case} gamma={gamma}: gap {gap}"));
                rec.check(bumped > gap, "duality_gap_sensitivity", || format!("case {case}: {bumped} vs {gap}"));
            }
            Err(e) => rec.error("duality_gap", e),
        }
    }
}

/// Robust LP value and exact grid value on one random cost-free instance.
pub fn approximation_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    gamma: f64,
    eps: &[f64],
) -> Result<(ExactSolution, Vec<f64>, f64)> {
    let u = SeparableUtility::log();
    let scen = random_scenarios(rng, n, m, -0.1, 0.12);
    let con = TradingConstraintSet::uniform(n, 1.5, 0.0, 0.0)?;
    let amb = PolyhedralAmbiguitySet::from_gamma(&scen.probabilities, gamma)?;
    let k_prev = vec![0.0; n];
    let exact = exact_small_solve(&scen, &amb, &con, &k_prev, &u)?;
    let mut values = Vec::new();
    for e in eps {
        let fam = family_for(&u, &scen, &con, ErrorBudget::new(e / 2.0, e / 2.0)?)?;
        let model = assemble_with(&scen, &fam, &amb, &con, &k_prev, AssemblyOptions::default())?;
        let sol = solve(&model);
        if !sol.is_optimal() {
            return Err(Error::NotOptimal(format!("{:?}", sol.status)));
        }
        values.push(sol.objective);
    }
    Ok((exact, values, lipschitz_bound(&u, &scen, &con)))
}

fn exact_suite(rec: &mut Recorder, mut rng: ChaCha8Rng) {
    let eps = [1e-3, 1e-5];
    for case in 0..4 {
        let n = rng.random_range(1..3);
        let m = rng.random_range(2..8);
        let gamma = [0.0, 0.5, 1.0, 0.25][case];
        match approximation_instance(&mut rng, n, m, gamma, &eps) {
            Ok((exact, lp, lip)) => {
                for (e, v) in eps.iter().zip(&lp) {
                    let slack = 2.0 * exact.step * lip;
                    rec.check(
                        exact.value <= v + 1e-9 && *v <= exact.value + e + slack,
                        "approximation_bracket",
                        || format!("case {case} eps={e}: exact {} lp {v} slack {slack}", exact.value),
                    );
                }
            }
            Err(e) => rec.error("approximation_bracket", e),
        }
    }
}

fn concavity_suite(rec: &mut Recorder, mut rng: ChaCha8Rng) {
    let scen = random_scenarios(&mut rng, 3, 10, -0.2, 0.2);
    let cost = vec![0.01, 0.005, 0.02];
    for (name, u) in [("log", SeparableUtility::log()), ("power", SeparableUtility::power(0.5).expect("valid"))] {
        match concavity_probe(&u, &scen, &cost, 1.5, 1000, rng.random_range(0..u64::MAX)) {
            Ok(r) => rec.check(r.passed(), "joint_concavity", || format!("{name}: {:?}", r.witness)),
            Err(e) => rec.error("joint_concavity", e),
        }
    }
}

fn survivability_suite(rec: &mut Recorder, mut rng: ChaCha8Rng) {
    let r = survivability_trials(1000, rng.random_range(0..u64::MAX));
    rec.check(r.violations == 0, "survivability", || format!("{} of {} negative, min {}", r.violations, r.trials, r.min_factor));
    for case in 0..5 {
        let n = rng.random_range(1..5);
        let scen = random_scenarios(&mut rng, n, 8, -0.6, 0.6);
        let con = match TradingConstraintSet::uniform(n, 3.0, 0.01, 0.05) {
            Ok(c) => c,
            Err(e) => return rec.error("survivability_of_solutions", e),
        };
        let u = SeparableUtility::log();
        let result = (|| -> Result<Vec<f64>> {
            let fam = family_for(&u, &scen, &con, ErrorBudget::new(1e-4, 1e-4)?)?;
            let amb = PolyhedralAmbiguitySet::from_gamma(&scen.probabilities, 0.0)?;
            let model = assemble_with(&scen, &fam, &amb, &con, &vec![0.0; n], AssemblyOptions::default())?;
            let sol = solve(&model);
            if !sol.is_optimal() {
                return Err(Error::NotOptimal(format!("{:?}", sol.status)));
            }
            Ok(sol.weights)
        })();
        match result {
            Ok(k) => {
                let zero = vec![0.0; n];
                let factor = scen
                    .scenarios
                    .iter()
                    .map(|x| {
                        (1.0 + k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()) * (1.0 - con.turnover_cost(&k, &zero))
                    })
                    .fold(f64::INFINITY, f64::min);
                rec.check(factor >= -1e-9, "survivability_of_solutions", || format!("case {case}: factor {factor}"));
            }
            Err(e) => rec.error("survivability_of_solutions", e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scen(x: Vec<Vec<f64>>) -> ScenarioSet {
        let n = x[0].len();
        let m = x.len();
        ScenarioSet::new((0..n).map(|i| format!("A{i}")).collect(), x, vec![1.0 / m as f64; m]).unwrap()
    }

    // Golden-section maximizer for a unimodal function on [lo, hi].
    fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - r * (hi - lo);
            let b = lo + r * (hi - lo);
            if f(a) < f(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn inner_worst_case_special_sets() {
        let s = scen(vec![vec![0.05, 0.0], vec![-0.02, 0.01], vec![0.03, -0.01]]);
        let u = SeparableUtility::log();
        let k = [0.7, 0.4];
        let cost = [0.0, 0.0];
        let q = inner_objective(&k, &[0.0, 0.0], &s, &cost, &u);
        let emp = q.iter().sum::<f64>() / 3.0;
        let min_q = q.iter().copied().fold(f64::INFINITY, f64::min);
        let at = |g: f64| {
            let amb = PolyhedralAmbiguitySet::from_gamma(&s.probabilities, g).unwrap();
            inner_worst_case(&k, &[0.0, 0.0], &s, &amb, &cost, &u).unwrap().0
        };
        assert!((at(0.0) - emp).abs() < 1e-14);
        assert!((at(1.0) - min_q).abs() < 1e-14);
        // Vertex enumeration of {p >= (1 - g) p_hat, sum p = 1}: the vertices
        // are (1 - g) p_hat + g e_k.
        let g = 0.5;
        let by_vertices = (0..3)
            .map(|k| (0..3).map(|j| ((1.0 - g) / 3.0 + if j == k { g } else { 0.0 }) * q[j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let mid = at(g);
        assert!((mid - by_vertices).abs() < 1e-14);
        assert!(mid <= at(0.0) && mid >= at(1.0));
    }

    #[test]
    fn kelly_fraction_for_two_point_distribution() {
        let s = scen(vec![vec![0.1], vec![-0.05]]);
        let con = TradingConstraintSet::uniform(1, 10.0, 0.0, 0.0).unwrap();
        let amb = PolyhedralAmbiguitySet::from_gamma(&s.probabilities, 0.0).unwrap();
        let u = SeparableUtility::log();
        let exact = exact_small_solve(&s, &amb, &con, &[0.0], &u).unwrap();
        let kelly = golden_max(|k| 0.5 * (0.1 * k).ln_1p() + 0.5 * (-0.05 * k).ln_1p(), 0.0, 10.0);
        assert!((kelly - 5.0).abs() < 1e-6);
        assert!(exact.step <= EXACT_GRID_STEP);
        assert!((exact.weights[0] - kelly).abs() <= exact.step, "{exact:?}");
    }

    #[test]
    fn symmetric_bet_under_full_ambiguity() {
        let s = scen(vec![vec![0.05], vec![-0.05]]);
        let con = TradingConstraintSet::uniform(1, 1.5, 0.0, 0.0).unwrap();
        let amb = PolyhedralAmbiguitySet::from_gamma(&s.probabilities, 1.0).unwrap();
        let exact = exact_small_solve(&s, &amb, &con, &[0.0], &SeparableUtility::log()).unwrap();
        assert_eq!(exact.weights, vec![0.0]);
        assert_eq!(exact.value, 0.0);
    }

    #[test]
    fn zero_caps_pin_weights() {
        let s = scen(vec![vec![0.05, 0.01], vec![-0.02, 0.03]]);
        let con = TradingConstraintSet::new(1.5, Some(vec![0.0, 0.0]), 0.0, vec![0.0, 0.0], true).unwrap();
        let amb = PolyhedralAmbiguitySet::from_gamma(&s.probabilities, 0.3).unwrap();
        let exact = exact_small_solve(&s, &amb, &con, &[0.0, 0.0], &SeparableUtility::log()).unwrap();
        assert_eq!(exact.weights, vec![0.0, 0.0]);
        assert_eq!(exact.value, 0.0);
    }

    #[test]
    fn exact_solver_refuses_large_instances() {
        let s = scen(vec![vec![0.01; 4]]);
        let con = TradingConstraintSet::uniform(4, 1.5, 0.0, 0.0).unwrap();
        let amb = PolyhedralAmbiguitySet::from_gamma(&[1.0], 0.0).unwrap();
        assert!(matches!(
            exact_small_solve(&s, &amb, &con, &[0.0; 4], &SeparableUtility::log()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn coarse_to_fine_matches_dense_grid_in_one_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let u = SeparableUtility::log();
        for _ in 0..5 {
            let s = random_scenarios(&mut rng, 1, 6, -0.1, 0.12);
            let con = TradingConstraintSet::uniform(1, 1.5, 0.0, 0.0).unwrap();
            let amb = PolyhedralAmbiguitySet::from_gamma(&s.probabilities, 0.3).unwrap();
            let fast = exact_small_solve(&s, &amb, &con, &[0.0], &u).unwrap();
            let dense = (0..=3000)
                .map(|i| -1.5 + i as f64 * 1e-3)
                .filter_map(|k| exact_value(&[k], &[0.0], &s, &amb, &con, &u))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(fast.value >= dense - 1e-9, "{} vs {dense}", fast.value);
        }
    }

    #[test]
    fn duality_gap_small_and_sensitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for gamma in [0.0, 1.0] {
            let (gap, _, bumped) = duality_instance(&mut rng, 2, 6, gamma, 0.0).unwrap();
            assert!(gap <= 1e-6 + DUALITY_BUDGET, "gamma {gamma}: {gap}");
            assert!(bumped > gap);
        }
    }

    #[test]
    fn concavity_probe_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_scenarios(&mut rng, 2, 8, -0.2, 0.2);
        let cost = [0.01, 0.02];
        let k = [0.3, -0.2];
        let kp = [0.1, 0.1];
        let g = concavity_gap(&SeparableUtility::log(), &s, &cost, (&k, &kp), (&k, &kp), 0.5);
        assert!(g.abs() <= 1e-12);
        for u in [SeparableUtility::log(), SeparableUtility::power(0.5).unwrap()] {
            let r = concavity_probe(&u, &s, &cost, 1.5, 1000, 3).unwrap();
            assert!(r.passed(), "{r:?}");
        }
        assert!(concavity_probe(&SeparableUtility::log(), &s, &cost, 1.5, 10, 3).is_err());
    }

    #[test]
    fn survivability_holds() {
        let r = survivability_trials(2000, 99);
        assert_eq!(r.violations, 0, "{r:?}");
        assert!(r.min_factor >= 0.0);
    }

    #[test]
    fn verify_suite_passes_and_detects_fault() {
        let report = run_verify(&Suite::ALL, 42, None).unwrap();
        for s in &report.suites {
            assert!(s.passed, "{:?}", s);
        }
        let faulty = run_verify(&[Suite::Partition], 42, Some(Fault::FlipHyperplaneSign)).unwrap();
        assert!(!faulty.passed);
        assert!(faulty.suites[0].failures.iter().any(|f| f.invariant == "hyperplane_overestimate"));
        assert!(matches!(run_verify(&[], 42, None), Err(Error::Config(_))));
    }
}
