//! Assembly and solution of the robust linear program.
//!
//! The model maximizes `W - nu^T d0 - lambda^T d1` over portfolio weights
//! `K = K+ - K-`, turnover magnitudes `u`, per-scenario utility epigraphs `Z`
//! and the dual variables of the ambiguity set. Two helper columns keep the
//! hyperplane rows short: `y_j = K^T x^j` for every scenario and `s = u^T C`.

use std::fmt::Write as _;
use std::ops::Range;
use std::time::{Duration, Instant};

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOptions, SolveOutcome, Variable};
use serde::{Deserialize, Serialize};

use crate::ambiguity::PolyhedralAmbiguitySet;
use crate::data::ScenarioSet;
use crate::error::{Error, Result};
use crate::partition::{build_family, ErrorBudget, HyperplaneFamily};
use crate::utility::SeparableUtility;

/// Lower end of the x-box, just inside the domain of `ln(1 + x)`.
pub const X_FLOOR: f64 = -1.0 + 1e-6;
/// Upper end of the c-box when no turnover cost limit is configured.
pub const DEFAULT_C_MAX: f64 = 0.01;

const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingConstraintSet {
    pub leverage: f64,
    #[serde(default)]
    pub holding_caps: Option<Vec<f64>>,
    pub turnover_cost_limit: f64,
    pub cost_vector: Vec<f64>,
    #[serde(default = "default_true")]
    pub allow_short: bool,
}

fn default_true() -> bool {
    true
}

impl TradingConstraintSet {
    pub fn new(
        leverage: f64,
        holding_caps: Option<Vec<f64>>,
        turnover_cost_limit: f64,
        cost_vector: Vec<f64>,
        allow_short: bool,
    ) -> Result<Self> {
        let set = Self {
            leverage,
            holding_caps,
            turnover_cost_limit,
            cost_vector,
            allow_short,
        };
        set.validate()?;
        Ok(set)
    }

    /// Same cost rate on every one of `n` assets.
    pub fn uniform(n: usize, leverage: f64, cost_rate: f64, turnover_cost_limit: f64) -> Result<Self> {
        Self::new(leverage, None, turnover_cost_limit, vec![cost_rate; n], true)
    }

    pub fn n_assets(&self) -> usize {
        self.cost_vector.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.leverage >= 1.0) || !self.leverage.is_finite() {
            return Err(Error::Domain(format!("leverage must be at least 1, got {}", self.leverage)));
        }
        if !(0.0..1.0).contains(&self.turnover_cost_limit) {
            return Err(Error::Domain(format!(
                "turnover cost limit must lie in [0, 1), got {}",
                self.turnover_cost_limit
            )));
        }
        if let Some(c) = self.cost_vector.iter().find(|c| !(0.0..1.0).contains(*c)) {
            return Err(Error::Domain(format!("cost rates must lie in [0, 1), got {c}")));
        }
        if let Some(caps) = &self.holding_caps {
            if caps.len() != self.cost_vector.len() {
                return Err(Error::Dimension(format!(
                    "{} holding caps for {} assets",
                    caps.len(),
                    self.cost_vector.len()
                )));
            }
            // A zero cap pins the asset at zero weight.
            if let Some(d) = caps.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
                return Err(Error::Domain(format!("holding caps must be non-negative, got {d}")));
            }
        }
        Ok(())
    }

    /// Checks the scenario-independent constraints for a weight vector.
    pub fn check_weights(&self, k: &[f64], tol: f64) -> Result<()> {
        if k.len() != self.n_assets() {
            return Err(Error::Dimension(format!("{} weights for {} assets", k.len(), self.n_assets())));
        }
        let gross: f64 = k.iter().map(|v| v.abs()).sum();
        if gross > self.leverage + tol {
            return Err(Error::Precondition(format!(
                "gross exposure {gross} exceeds leverage {}",
                self.leverage
            )));
        }
        if let Some(caps) = &self.holding_caps {
            if let Some(i) = (0..k.len()).find(|&i| k[i].abs() > caps[i] + tol) {
                return Err(Error::Precondition(format!("weight {} of asset {i} exceeds its cap {}", k[i], caps[i])));
            }
        }
        if !self.allow_short {
            if let Some(i) = k.iter().position(|v| *v < -tol) {
                return Err(Error::Precondition(format!("short position in asset {i} is not allowed")));
            }
        }
        Ok(())
    }

    /// `|K - K_prev|^T C`.
    pub fn turnover_cost(&self, k: &[f64], k_prev: &[f64]) -> f64 {
        k.iter()
            .zip(k_prev)
            .zip(&self.cost_vector)
            .map(|((a, b), c)| (a - b).abs() * c)
            .sum()
    }

    fn has_costs(&self) -> bool {
        self.cost_vector.iter().any(|c| *c > 0.0)
    }
}

/// Left-hand side of the survival row for weights `k`, using the canonical
/// split `K+ = max(K, 0)`, `K- = max(-K, 0)`.
pub fn survival_load(scen: &ScenarioSet, k: &[f64]) -> f64 {
    k.iter()
        .enumerate()
        .map(|(i, &w)| w.max(0.0) * (-scen.lower[i]).max(0.0) + (-w).max(0.0) * scen.upper[i].max(0.0))
        .sum()
}

/// True when `k` satisfies every constraint of the assembled model for the
/// given scenarios and previous weights.
pub fn weights_feasible(scen: &ScenarioSet, con: &TradingConstraintSet, k: &[f64], k_prev: &[f64], tol: f64) -> bool {
    con.check_weights(k, tol).is_ok()
        && survival_load(scen, k) <= 1.0 + tol
        && con.turnover_cost(k, k_prev) <= con.turnover_cost_limit + tol
}

/// Boxes on which the hyperplanes must be accurate: every feasible `K^T x^j`
/// lies in the x-box and every feasible `u^T C` in the c-box.
pub fn hyperplane_boxes(scen: &ScenarioSet, con: &TradingConstraintSet) -> ((f64, f64), (f64, f64)) {
    let x_hi = con.leverage * scen.max_abs_return();
    let x_lo = (-x_hi).max(X_FLOOR);
    let c_hi = if con.turnover_cost_limit > 0.0 {
        con.turnover_cost_limit
    } else {
        DEFAULT_C_MAX
    };
    ((x_lo, x_hi), (0.0, c_hi))
}

/// Builds the hyperplane family on the boxes of [`hyperplane_boxes`].
pub fn family_for(
    u: &SeparableUtility,
    scen: &ScenarioSet,
    con: &TradingConstraintSet,
    budget: ErrorBudget,
) -> Result<HyperplaneFamily> {
    let (x_box, c_box) = hyperplane_boxes(scen, con);
    build_family(u, x_box, c_box, budget)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperplaneEncoding {
    /// One row per scenario and per `(l, r)` plane.
    #[default]
    FullProduct,
    /// Separate epigraphs for the x-part and the c-part of each plane.
    Separated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AssemblyOptions {
    pub encoding: HyperplaneEncoding,
    /// Drop the turnover columns and rows entirely, evaluating every plane at
    /// `c = 0`. Only meaningful for cost-free models.
    pub strip_turnover: bool,
}

/// Column ranges of the decision vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionLayout {
    pub k_plus: Range<usize>,
    pub k_minus: Range<usize>,
    pub u: Range<usize>,
    pub y: Range<usize>,
    pub s: Range<usize>,
    pub z: Range<usize>,
    pub w: usize,
    pub nu: Range<usize>,
    pub lambda: Range<usize>,
    /// Per-scenario x-epigraphs of the separated encoding.
    pub x_epi: Range<usize>,
    /// c-epigraph of the separated encoding.
    pub c_epi: Range<usize>,
    pub n_vars: usize,
}

impl DecisionLayout {
    fn new(n: usize, m: usize, m0: usize, m1: usize, with_turnover: bool, separated: bool) -> Self {
        let mut next = 0;
        let mut take = |len: usize| {
            let r = next..next + len;
            next += len;
            r
        };
        let k_plus = take(n);
        let k_minus = take(n);
        let u = take(if with_turnover { n } else { 0 });
        let y = take(m);
        let s = take(usize::from(with_turnover));
        let z = take(m);
        let w = take(1).start;
        let nu = take(m0);
        let lambda = take(m1);
        let x_epi = take(if separated { m } else { 0 });
        let c_epi = take(usize::from(separated));
        Self {
            k_plus,
            k_minus,
            u,
            y,
            s,
            z,
            w,
            nu,
            lambda,
            x_epi,
            c_epi,
            n_vars: next,
        }
    }

    fn ranges(&self) -> Vec<Range<usize>> {
        vec![
            self.k_plus.clone(),
            self.k_minus.clone(),
            self.u.clone(),
            self.y.clone(),
            self.s.clone(),
            self.z.clone(),
            self.w..self.w + 1,
            self.nu.clone(),
            self.lambda.clone(),
            self.x_epi.clone(),
            self.c_epi.clone(),
        ]
    }

    /// True when the ranges are disjoint and cover `0..n_vars` exactly.
    pub fn is_partition(&self) -> bool {
        let mut covered = vec![0u8; self.n_vars];
        for r in self.ranges() {
            for i in r {
                if i >= self.n_vars {
                    return false;
                }
                covered[i] += 1;
            }
        }
        covered.iter().all(|c| *c == 1)
    }

    pub fn var_name(&self, v: usize) -> String {
        let names = [
            ("kp", &self.k_plus),
            ("km", &self.k_minus),
            ("u", &self.u),
            ("y", &self.y),
            ("s", &self.s),
            ("z", &self.z),
            ("nu", &self.nu),
            ("lam", &self.lambda),
            ("xe", &self.x_epi),
            ("ce", &self.c_epi),
        ];
        if v == self.w {
            return "w".into();
        }
        for (prefix, r) in names {
            if r.contains(&v) {
                return format!("{prefix}_{}", v - r.start);
            }
        }
        format!("v_{v}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSense {
    Le,
    Eq,
}

/// What a row encodes; scenario and plane indices are kept for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Leverage,
    HoldingCap { asset: usize },
    Survival,
    TurnoverUp { asset: usize },
    TurnoverDown { asset: usize },
    CostLimit,
    ReturnDef { scenario: usize },
    CostDef,
    Hyperplane { scenario: usize, l: usize, r: usize },
    XEpigraph { scenario: usize, l: usize },
    CEpigraph { r: usize },
    EpigraphSum { scenario: usize },
    DualLink { scenario: usize },
}

impl RowKind {
    fn label(&self) -> String {
        match self {
            RowKind::Leverage => "leverage".into(),
            RowKind::HoldingCap { asset } => format!("cap_{asset}"),
            RowKind::Survival => "survival".into(),
            RowKind::TurnoverUp { asset } => format!("tu_up_{asset}"),
            RowKind::TurnoverDown { asset } => format!("tu_dn_{asset}"),
            RowKind::CostLimit => "cost_limit".into(),
            RowKind::ReturnDef { scenario } => format!("ret_{scenario}"),
            RowKind::CostDef => "cost_def".into(),
            RowKind::Hyperplane { scenario, l, r } => format!("h_{scenario}_{l}_{r}"),
            RowKind::XEpigraph { scenario, l } => format!("hx_{scenario}_{l}"),
            RowKind::CEpigraph { r } => format!("hc_{r}"),
            RowKind::EpigraphSum { scenario } => format!("hs_{scenario}"),
            RowKind::DualLink { scenario } => format!("link_{scenario}"),
        }
    }

    fn is_hyperplane(&self) -> bool {
        matches!(
            self,
            RowKind::Hyperplane { .. } | RowKind::XEpigraph { .. } | RowKind::CEpigraph { .. } | RowKind::EpigraphSum { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub kind: RowKind,
    pub terms: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl LpRow {
    fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(v, a)| a * x[*v]).sum()
    }

    fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            RowSense::Le => (lhs - self.rhs).max(0.0),
            RowSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// Row totals by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowCounts {
    pub hyperplane: usize,
    pub dual_link: usize,
    pub constraint: usize,
}

impl RowCounts {
    pub fn total(&self) -> usize {
        self.hyperplane + self.dual_link + self.constraint
    }
}

#[derive(Debug, Clone)]
pub struct RobustLpModel {
    pub layout: DecisionLayout,
    pub objective: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub rows: Vec<LpRow>,
    pub options: AssemblyOptions,
    pub tickers: Vec<String>,
    pub risk_free: Option<usize>,
    pub k_prev: Vec<f64>,
    pub cost_vector: Vec<f64>,
    /// `(M_x, M_c)`: tangent points of the family used.
    pub plane_counts: (usize, usize),
}

impl RobustLpModel {
    pub fn n_assets(&self) -> usize {
        self.layout.k_plus.len()
    }

    pub fn n_scenarios(&self) -> usize {
        self.layout.z.len()
    }

    pub fn row_counts(&self) -> RowCounts {
        let mut c = RowCounts {
            hyperplane: 0,
            dual_link: 0,
            constraint: 0,
        };
        for row in &self.rows {
            if row.kind.is_hyperplane() {
                c.hyperplane += 1;
            } else if matches!(row.kind, RowKind::DualLink { .. }) {
                c.dual_link += 1;
            } else {
                c.constraint += 1;
            }
        }
        c
    }

    /// `W - nu^T d0 - lambda^T d1` evaluated at a primal vector.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation at a primal vector.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|((lo, hi), v)| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Writes the model in the common LP text format.
    pub fn to_lp_text(&self) -> String {
        let name = |v: usize| self.layout.var_name(v);
        let mut out = String::from("\\ robust portfolio LP\nMaximize\n obj:");
        for (v, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                write_term(&mut out, *c, &name(v));
            }
        }
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            let _ = write!(out, " {}:", row.kind.label());
            for (v, a) in &row.terms {
                write_term(&mut out, *a, &name(*v));
            }
            let op = match row.sense {
                RowSense::Le => "<=",
                RowSense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", fmt_num(row.rhs));
        }
        out.push_str("Bounds\n");
        for (v, (lo, hi)) in self.bounds.iter().enumerate() {
            let n = name(v);
            let _ = match (lo.is_finite(), hi.is_finite()) {
                (false, false) => writeln!(out, " {n} free"),
                (true, true) => writeln!(out, " {} <= {n} <= {}", fmt_num(*lo), fmt_num(*hi)),
                (true, false) => writeln!(out, " {n} >= {}", fmt_num(*lo)),
                (false, true) => writeln!(out, " -inf <= {n} <= {}", fmt_num(*hi)),
            };
        }
        out.push_str("End\n");
        out
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

fn write_term(out: &mut String, coeff: f64, name: &str) {
    let sign = if coeff < 0.0 { '-' } else { '+' };
    let _ = write!(out, " {sign} {} {name}", fmt_num(coeff.abs()));
}

/// Assembles the model with the full `(l, r)` product of hyperplane rows.
pub fn assemble(
    scen: &ScenarioSet,
    fam: &HyperplaneFamily,
    amb: &PolyhedralAmbiguitySet,
    con: &TradingConstraintSet,
    k_prev: &[f64],
) -> Result<RobustLpModel> {
    assemble_with(scen, fam, amb, con, k_prev, AssemblyOptions::default())
}

pub fn assemble_with(
    scen: &ScenarioSet,
    fam: &HyperplaneFamily,
    amb: &PolyhedralAmbiguitySet,
    con: &TradingConstraintSet,
    k_prev: &[f64],
    options: AssemblyOptions,
) -> Result<RobustLpModel> {
    let n = scen.tickers.len();
    let m = scen.scenarios.len();
    if con.n_assets() != n {
        return Err(Error::Dimension(format!("constraints cover {} assets, scenarios {n}", con.n_assets())));
    }
    if amb.m() != m {
        return Err(Error::Dimension(format!("ambiguity set has m = {}, scenarios {m}", amb.m())));
    }
    con.validate()?;
    con.check_weights(k_prev, FEASIBILITY_TOL)?;
    if options.strip_turnover && con.has_costs() {
        return Err(Error::Precondition("turnover columns can only be stripped when every cost rate is zero".into()));
    }
    let with_turnover = !options.strip_turnover;
    let separated = options.encoding == HyperplaneEncoding::Separated;
    let (m0, m1) = (amb.d0().len(), amb.d1().len());
    let layout = DecisionLayout::new(n, m, m0, m1, with_turnover, separated);
    let nv = layout.n_vars;

    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let mut bounds = vec![free; nv];
    for i in 0..n {
        bounds[layout.k_plus.start + i] = (0.0, f64::INFINITY);
        let short_cap = if con.allow_short { f64::INFINITY } else { 0.0 };
        bounds[layout.k_minus.start + i] = (0.0, short_cap);
    }
    for v in layout.u.clone().chain(layout.s.clone()).chain(layout.lambda.clone()) {
        bounds[v] = (0.0, f64::INFINITY);
    }

    let mut objective = vec![0.0; nv];
    objective[layout.w] = 1.0;
    for (k, d) in amb.d0().iter().enumerate() {
        objective[layout.nu.start + k] = -d;
    }
    for (k, d) in amb.d1().iter().enumerate() {
        objective[layout.lambda.start + k] = -d;
    }

    let mut rows = Vec::new();
    let kp = |i: usize| layout.k_plus.start + i;
    let km = |i: usize| layout.k_minus.start + i;

    rows.push(LpRow {
        kind: RowKind::Leverage,
        terms: (0..n).flat_map(|i| [(kp(i), 1.0), (km(i), 1.0)]).collect(),
        sense: RowSense::Le,
        rhs: con.leverage,
    });
    if let Some(caps) = &con.holding_caps {
        for (i, d) in caps.iter().enumerate() {
            rows.push(LpRow {
                kind: RowKind::HoldingCap { asset: i },
                terms: vec![(kp(i), 1.0), (km(i), 1.0)],
                sense: RowSense::Le,
                rhs: *d,
            });
        }
    }
    let mut survival = Vec::new();
    for i in 0..n {
        let down = (-scen.lower[i]).max(0.0);
        let up = scen.upper[i].max(0.0);
        if down > 0.0 {
            survival.push((kp(i), down));
        }
        if up > 0.0 {
            survival.push((km(i), up));
        }
    }
    rows.push(LpRow {
        kind: RowKind::Survival,
        terms: survival,
        sense: RowSense::Le,
        rhs: 1.0,
    });
    if with_turnover {
        let u = |i: usize| layout.u.start + i;
        for i in 0..n {
            // u_i >= K_i - K_prev_i and u_i >= K_prev_i - K_i
            rows.push(LpRow {
                kind: RowKind::TurnoverUp { asset: i },
                terms: vec![(kp(i), 1.0), (km(i), -1.0), (u(i), -1.0)],
                sense: RowSense::Le,
                rhs: k_prev[i],
            });
            rows.push(LpRow {
                kind: RowKind::TurnoverDown { asset: i },
                terms: vec![(kp(i), -1.0), (km(i), 1.0), (u(i), -1.0)],
                sense: RowSense::Le,
                rhs: -k_prev[i],
            });
        }
        let s = layout.s.start;
        let mut def: Vec<(usize, f64)> = (0..n)
            .filter(|&i| con.cost_vector[i] != 0.0)
            .map(|i| (u(i), con.cost_vector[i]))
            .collect();
        def.push((s, -1.0));
        rows.push(LpRow {
            kind: RowKind::CostDef,
            terms: def,
            sense: RowSense::Eq,
            rhs: 0.0,
        });
        rows.push(LpRow {
            kind: RowKind::CostLimit,
            terms: vec![(s, 1.0)],
            sense: RowSense::Le,
            rhs: con.turnover_cost_limit,
        });
    }
    for (j, x) in scen.scenarios.iter().enumerate() {
        let mut terms = Vec::with_capacity(2 * n + 1);
        for (i, xi) in x.iter().enumerate() {
            if *xi != 0.0 {
                terms.push((kp(i), *xi));
                terms.push((km(i), -xi));
            }
        }
        terms.push((layout.y.start + j, -1.0));
        rows.push(LpRow {
            kind: RowKind::ReturnDef { scenario: j },
            terms,
            sense: RowSense::Eq,
            rhs: 0.0,
        });
    }

    let (mx, mc) = fam.counts();
    let s_var = layout.s.clone().next();
    match options.encoding {
        HyperplaneEncoding::FullProduct => {
            for j in 0..m {
                let (z, y) = (layout.z.start + j, layout.y.start + j);
                for l in 0..mx {
                    for r in 0..mc {
                        // Z_j - a_l y_j - b_r s <= gamma_{l,r}
                        let mut terms = vec![(z, 1.0), (y, -fam.a[l])];
                        if let Some(s) = s_var {
                            terms.push((s, -fam.b[r]));
                        }
                        rows.push(LpRow {
                            kind: RowKind::Hyperplane { scenario: j, l, r },
                            terms,
                            sense: RowSense::Le,
                            rhs: fam.gamma[l][r],
                        });
                    }
                }
            }
        }
        HyperplaneEncoding::Separated => {
            let ce = layout.c_epi.start;
            for j in 0..m {
                let (xe, y) = (layout.x_epi.start + j, layout.y.start + j);
                for l in 0..mx {
                    rows.push(LpRow {
                        kind: RowKind::XEpigraph { scenario: j, l },
                        terms: vec![(xe, 1.0), (y, -fam.a[l])],
                        sense: RowSense::Le,
                        rhs: fam.x_intercepts[l],
                    });
                }
            }
            for r in 0..mc {
                let mut terms = vec![(ce, 1.0)];
                if let Some(s) = s_var {
                    terms.push((s, -fam.b[r]));
                }
                rows.push(LpRow {
                    kind: RowKind::CEpigraph { r },
                    terms,
                    sense: RowSense::Le,
                    rhs: fam.c_intercepts[r],
                });
            }
            for j in 0..m {
                rows.push(LpRow {
                    kind: RowKind::EpigraphSum { scenario: j },
                    terms: vec![(layout.z.start + j, 1.0), (layout.x_epi.start + j, -1.0), (ce, -1.0)],
                    sense: RowSense::Le,
                    rhs: 0.0,
                });
            }
        }
    }

    // W - Z_j - (A0^T nu)_j - (A1^T lambda)_j <= 0
    for j in 0..m {
        let mut terms = vec![(layout.w, 1.0), (layout.z.start + j, -1.0)];
        for (k, row) in amb.a0().iter().enumerate() {
            if row[j] != 0.0 {
                terms.push((layout.nu.start + k, -row[j]));
            }
        }
        for (k, row) in amb.a1().iter().enumerate() {
            if row[j] != 0.0 {
                terms.push((layout.lambda.start + k, -row[j]));
            }
        }
        rows.push(LpRow {
            kind: RowKind::DualLink { scenario: j },
            terms,
            sense: RowSense::Le,
            rhs: 0.0,
        });
    }

    let finite = rows
        .iter()
        .all(|r| r.rhs.is_finite() && r.terms.iter().all(|(_, a)| a.is_finite()))
        && objective.iter().all(|c| c.is_finite());
    if !finite {
        return Err(Error::Numerical("model contains a non-finite coefficient".into()));
    }

    Ok(RobustLpModel {
        layout,
        objective,
        bounds,
        rows,
        options,
        tickers: scen.tickers.clone(),
        risk_free: scen.risk_free,
        k_prev: k_prev.to_vec(),
        cost_vector: con.cost_vector.clone(),
        plane_counts: (mx, mc),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub nu: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Full primal vector in layout order (empty unless optimal).
    pub values: Vec<f64>,
    pub iterations: u64,
    pub solve_time: Duration,
    /// For infeasible models, the row carrying the largest elastic violation.
    pub certificate_row: Option<usize>,
    pub primal_residual: f64,
}

impl LpSolution {
    fn failed(status: LpStatus, solve_time: Duration) -> Self {
        Self {
            status,
            weights: Vec::new(),
            objective: f64::NAN,
            nu: Vec::new(),
            lambda: Vec::new(),
            values: Vec::new(),
            iterations: 0,
            solve_time,
            certificate_row: None,
            primal_residual: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub time_limit: Option<Duration>,
    /// Start from a subset of the hyperplane rows and add violated ones until
    /// every row of the model holds. The final point is optimal for the full
    /// model; only the work done to reach it changes.
    pub lazy_hyperplanes: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            time_limit: Some(Duration::from_secs(600)),
            lazy_hyperplanes: true,
        }
    }
}

const RESIDUAL_LIMIT: f64 = 1e-7;
const OBJECTIVE_AGREEMENT: f64 = 1e-8;
/// Violation above which a lazy row is added back.
const CUT_TOL: f64 = 1e-11;
/// Tangent indices per axis kept in the first lazy round.
const SEED_PLANES: usize = 9;
const MAX_LAZY_ROUNDS: usize = 10_000;

pub fn solve(model: &RobustLpModel) -> LpSolution {
    solve_with(model, SolverOptions::default())
}

fn seed_indices(count: usize) -> Vec<bool> {
    let mut keep = vec![false; count];
    if count <= SEED_PLANES {
        keep.iter_mut().for_each(|k| *k = true);
        return keep;
    }
    for s in 0..SEED_PLANES {
        keep[s * (count - 1) / (SEED_PLANES - 1)] = true;
    }
    keep
}

// Rows that may be deferred, keyed by the group within which only the most
// violated row is added per round.
fn lazy_group(kind: &RowKind) -> Option<usize> {
    match kind {
        RowKind::Hyperplane { scenario, .. } | RowKind::XEpigraph { scenario, .. } => Some(*scenario + 1),
        RowKind::CEpigraph { .. } => Some(0),
        _ => None,
    }
}

fn initial_active(model: &RobustLpModel) -> Vec<bool> {
    let (mx, mc) = model.plane_counts;
    let (keep_l, keep_r) = (seed_indices(mx), seed_indices(mc));
    model
        .rows
        .iter()
        .map(|row| match row.kind {
            RowKind::Hyperplane { l, r, .. } => keep_l[l] && keep_r[r],
            RowKind::XEpigraph { l, .. } => keep_l[l],
            RowKind::CEpigraph { r } => keep_r[r],
            _ => true,
        })
        .collect()
}

enum RoundOutcome {
    Solved { values: Vec<f64>, objective: f64, iterations: u64 },
    Failed(LpStatus),
}

fn solve_round(model: &RobustLpModel, active: Option<&[bool]>, time_limit: Option<Duration>) -> RoundOutcome {
    let (problem, vars) = to_problem(model, active, false);
    let mut solve_options = SolveOptions::default();
    solve_options.time_limit = time_limit;
    match problem.solve_with(solve_options) {
        Ok(SolveOutcome::Solution(s)) => RoundOutcome::Solved {
            values: vars.iter().map(|v| s.var_value(*v)).collect(),
            objective: s.objective(),
            iterations: s.stats().lp_iterations,
        },
        Ok(SolveOutcome::Interrupted(_)) => RoundOutcome::Failed(LpStatus::Numerical),
        Err(microlp::Error::Infeasible) => RoundOutcome::Failed(LpStatus::Infeasible),
        Err(microlp::Error::Unbounded) => RoundOutcome::Failed(LpStatus::Unbounded),
        Err(_) => RoundOutcome::Failed(LpStatus::Numerical),
    }
}

pub fn solve_with(model: &RobustLpModel, options: SolverOptions) -> LpSolution {
    let started = Instant::now();
    let mut active = options.lazy_hyperplanes.then(|| initial_active(model));
    let mut iterations = 0;
    let mut rounds = 0;
    let (values, solver_objective) = loop {
        rounds += 1;
        let remaining = options.time_limit.map(|t| t.saturating_sub(started.elapsed()));
        match solve_round(model, active.as_deref(), remaining) {
            RoundOutcome::Solved {
                values,
                objective,
                iterations: it,
            } => {
                iterations += it;
                let Some(mask) = active.as_mut() else {
                    break (values, objective);
                };
                let mut worst: Vec<Option<(usize, f64)>> = vec![None; model.n_scenarios() + 1];
                for (i, row) in model.rows.iter().enumerate() {
                    if mask[i] {
                        continue;
                    }
                    let Some(g) = lazy_group(&row.kind) else { continue };
                    let v = row.violation(&values);
                    if v > CUT_TOL * (1.0 + row.rhs.abs()) && worst[g].is_none_or(|(_, w)| v > w) {
                        worst[g] = Some((i, v));
                    }
                }
                let added: Vec<usize> = worst.iter().flatten().map(|(i, _)| *i).collect();
                if added.is_empty() || rounds >= MAX_LAZY_ROUNDS {
                    break (values, objective);
                }
                for i in added {
                    mask[i] = true;
                }
            }
            RoundOutcome::Failed(LpStatus::Infeasible) => {
                let mut out = LpSolution::failed(LpStatus::Infeasible, started.elapsed());
                out.certificate_row = infeasibility_certificate(model);
                out.solve_time = started.elapsed();
                return out;
            }
            RoundOutcome::Failed(status) => return LpSolution::failed(status, started.elapsed()),
        }
    };
    let elapsed = started.elapsed();
    let objective = model.objective_at(&values);
    let residual = model.primal_residual(&values);
    let status = if residual <= RESIDUAL_LIMIT
        && (objective - solver_objective).abs() <= OBJECTIVE_AGREEMENT * (1.0 + objective.abs())
    {
        LpStatus::Optimal
    } else {
        LpStatus::Numerical
    };
    let l = &model.layout;
    LpSolution {
        status,
        weights: l.k_plus.clone().zip(l.k_minus.clone()).map(|(p, m)| values[p] - values[m]).collect(),
        objective,
        nu: values[l.nu.clone()].to_vec(),
        lambda: values[l.lambda.clone()].to_vec(),
        iterations,
        values,
        solve_time: elapsed,
        certificate_row: None,
        primal_residual: residual,
    }
}

fn to_problem(model: &RobustLpModel, active: Option<&[bool]>, elastic: bool) -> (Problem, Vec<Variable>) {
    let direction = if elastic {
        OptimizationDirection::Minimize
    } else {
        OptimizationDirection::Maximize
    };
    let mut p = Problem::new(direction);
    let vars: Vec<Variable> = model
        .bounds
        .iter()
        .zip(&model.objective)
        .map(|(b, c)| p.add_var(if elastic { 0.0 } else { *c }, *b))
        .collect();
    for (i, row) in model.rows.iter().enumerate() {
        if active.is_some_and(|a| !a[i]) {
            continue;
        }
        let mut terms: Vec<(Variable, f64)> = row.terms.iter().map(|(v, a)| (vars[*v], *a)).collect();
        if elastic {
            terms.push((p.add_var(1.0, (0.0, f64::INFINITY)), -1.0));
            if row.sense == RowSense::Eq {
                terms.push((p.add_var(1.0, (0.0, f64::INFINITY)), 1.0));
            }
        }
        let op = match row.sense {
            RowSense::Le => ComparisonOp::Le,
            RowSense::Eq => ComparisonOp::Eq,
        };
        p.add_constraint(terms.as_slice(), op, row.rhs);
    }
    (p, vars)
}

/// Elastic phase one: every row gets a non-negative violation column and the
/// total violation is minimized. The row with the largest violation is
/// returned as the witness.
fn infeasibility_certificate(model: &RobustLpModel) -> Option<usize> {
    let (p, vars) = to_problem(model, None, true);
    let sol = p.solve().ok()?.into_solution().ok()?;
    let values: Vec<f64> = vars.iter().map(|v| sol.var_value(*v)).collect();
    model
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.violation(&values)))
        .filter(|(_, v)| *v > FEASIBILITY_TOL)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightDiagnostics {
    /// `|K - K_prev|^T C` recomputed from the weights.
    pub turnover_cost: f64,
    /// `u^T C` as carried by the LP.
    pub lp_turnover_cost: f64,
    /// `sum_i |K_i - K_prev_i|`.
    pub turnover_rate: f64,
    /// `sum_i (K+_i + K-_i)`.
    pub leverage_usage: f64,
    /// Gross weight `sum |K_i|` over every asset except the risk-free one.
    pub invested_weight: f64,
}

pub fn extract_weights(sol: &LpSolution, model: &RobustLpModel) -> Result<(Vec<f64>, WeightDiagnostics)> {
    if !sol.is_optimal() {
        return Err(Error::NotOptimal(format!("solution status is {:?}", sol.status)));
    }
    let l = &model.layout;
    let v = &sol.values;
    let weights: Vec<f64> = l.k_plus.clone().zip(l.k_minus.clone()).map(|(p, m)| v[p] - v[m]).collect();
    let leverage_usage = l.k_plus.clone().chain(l.k_minus.clone()).map(|i| v[i]).sum();
    let turnover_rate = weights.iter().zip(&model.k_prev).map(|(a, b)| (a - b).abs()).sum();
    let turnover_cost = weights
        .iter()
        .zip(&model.k_prev)
        .zip(&model.cost_vector)
        .map(|((a, b), c)| (a - b).abs() * c)
        .sum();
    let lp_turnover_cost = l.s.clone().next().map_or(0.0, |s| v[s]);
    let invested_weight = weights
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != model.risk_free)
        .map(|(_, w)| w.abs())
        .sum();
    Ok((
        weights,
        WeightDiagnostics {
            turnover_cost,
            lp_turnover_cost,
            turnover_rate,
            leverage_usage,
            invested_weight,
        },
    ))
}

/// Recomputes `min_j [min_{l,r} h_{l,r}(y_j, s) + shift_j] - nu^T d0 - lambda^T d1`
/// from an optimal solution.
pub fn recomputed_objective(
    sol: &LpSolution,
    model: &RobustLpModel,
    fam: &HyperplaneFamily,
    amb: &PolyhedralAmbiguitySet,
) -> f64 {
    let l = &model.layout;
    let v = &sol.values;
    let s = l.s.clone().next().map_or(0.0, |s| v[s]);
    let shift = amb.dual_shift(&sol.nu, &sol.lambda);
    let worst = l
        .y
        .clone()
        .enumerate()
        .map(|(j, y)| fam.envelope(v[y], s) + shift[j])
        .fold(f64::INFINITY, f64::min);
    worst - amb.dual_offset(&sol.nu, &sol.lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionReport {
    pub status: LpStatus,
    pub objective: Option<f64>,
    pub tickers: Vec<String>,
    pub weights: Vec<f64>,
    pub turnover: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve_time_ms: Option<f64>,
    pub iterations: u64,
    #[serde(rename = "M_x")]
    pub m_x: usize,
    #[serde(rename = "M_c")]
    pub m_c: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_row: Option<String>,
}

impl SolutionReport {
    pub fn new(sol: &LpSolution, model: &RobustLpModel, include_timing: bool) -> Self {
        let diag = extract_weights(sol, model).ok();
        Self {
            status: sol.status,
            objective: sol.objective.is_finite().then_some(sol.objective),
            tickers: model.tickers.clone(),
            weights: sol.weights.clone(),
            turnover: diag.map(|(_, d)| d.turnover_cost),
            solve_time_ms: include_timing.then(|| sol.solve_time.as_secs_f64() * 1e3),
            iterations: sol.iterations,
            m_x: model.plane_counts.0,
            m_c: model.plane_counts.1,
            certificate_row: sol.certificate_row.map(|i| model.rows[i].kind.label()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{build_hyperplanes, Axis, Partition};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scen(x: Vec<Vec<f64>>) -> ScenarioSet {
        let n = x[0].len();
        let m = x.len();
        ScenarioSet::new((0..n).map(|i| format!("A{i}")).collect(), x, vec![1.0 / m as f64; m]).unwrap()
    }

    fn budget(e: f64) -> ErrorBudget {
        ErrorBudget::new(e, e).unwrap()
    }

    fn solve_instance(
        s: &ScenarioSet,
        gamma: f64,
        con: &TradingConstraintSet,
        k_prev: &[f64],
        eps: f64,
        options: AssemblyOptions,
    ) -> (RobustLpModel, LpSolution, HyperplaneFamily, PolyhedralAmbiguitySet) {
        let u = SeparableUtility::log();
        let fam = family_for(&u, s, con, budget(eps)).unwrap();
        let amb = PolyhedralAmbiguitySet::from_gamma(&s.probabilities, gamma).unwrap();
        let model = assemble_with(s, &fam, &amb, con, k_prev, options).unwrap();
        let sol = solve(&model);
        (model, sol, fam, amb)
    }

    #[test]
    fn trivial_model() {
        // max W s.t. W <= 5, built by hand on the layout machinery.
        let layout = DecisionLayout::new(0, 0, 0, 0, false, false);
        let model = RobustLpModel {
            objective: vec![1.0],
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY)],
            rows: vec![LpRow {
                kind: RowKind::CostLimit,
                terms: vec![(layout.w, 1.0)],
                sense: RowSense::Le,
                rhs: 5.0,
            }],
            layout,
            options: AssemblyOptions::default(),
            tickers: vec![],
            risk_free: None,
            k_prev: vec![],
            cost_vector: vec![],
            plane_counts: (0, 0),
        };
        let sol = solve(&model);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 5.0).abs() < 1e-12);
    }

    #[test]
    fn layout_partitions_columns() {
        for (t, s) in [(false, false), (true, false), (false, true), (true, true)] {
            assert!(DecisionLayout::new(4, 7, 2, 3, t, s).is_partition());
        }
    }

    #[test]
    fn single_positive_asset_takes_full_leverage() {
        let s = scen(vec![vec![0.02]]);
        let con = TradingConstraintSet::uniform(1, 1.5, 0.0, 0.0).unwrap();
        let (model, sol, _, _) = solve_instance(&s, 0.0, &con, &[0.0], 1e-6, AssemblyOptions::default());
        assert_eq!(sol.status, LpStatus::Optimal);
        let (k, diag) = extract_weights(&sol, &model).unwrap();
        assert!((k[0] - 1.5).abs() < 1e-9, "{k:?}");
        assert!((sol.objective - (1.0 + 1.5 * 0.02f64).ln()).abs() < 1e-6);
        assert!(diag.turnover_cost == 0.0);
    }

    #[test]
    fn symmetric_bet_is_avoided_under_full_ambiguity() {
        // Worst case of any bet on +-5% is a loss, so the risky weight is zero.
        let s = scen(vec![vec![0.05], vec![-0.05]]);
        let con = TradingConstraintSet::uniform(1, 1.5, 0.0, 0.0).unwrap();
        let (_, sol, _, _) = solve_instance(&s, 1.0, &con, &[0.0], 1e-7, AssemblyOptions::default());
        assert!(sol.weights[0].abs() < 1e-6, "{:?}", sol.weights);
    }

    #[test]
    fn survival_row_limits_exposure() {
        // A -50% scenario allows at most 1 / 0.5 = 2 long, below L = 3.
        let s = scen(vec![vec![0.5], vec![-0.5], vec![0.5], vec![0.5]]);
        let con = TradingConstraintSet::uniform(1, 3.0, 0.0, 0.0).unwrap();
        let (model, sol, _, _) = solve_instance(&s, 0.0, &con, &[0.0], 1e-6, AssemblyOptions::default());
        let (k, _) = extract_weights(&sol, &model).unwrap();
        assert!(k[0] <= 2.0 + 1e-9);
        for x in [0.5, -0.5] {
            assert!(1.0 + k[0] * x >= -1e-9);
        }
    }

    #[test]
    fn extract_weights_diagnostics() {
        let s = scen(vec![vec![0.01, 0.0], vec![0.02, 0.0]]);
        let con = TradingConstraintSet::new(1.5, None, 0.5, vec![0.01, 0.02], true).unwrap();
        let u = SeparableUtility::log();
        let fam = family_for(&u, &s, &con, budget(1e-5)).unwrap();
        let amb = PolyhedralAmbiguitySet::from_gamma(&s.probabilities, 0.0).unwrap();
        let model = assemble(&s, &fam, &amb, &con, &[0.0, 0.0]).unwrap();
        let mut sol = LpSolution::failed(LpStatus::Optimal, Duration::ZERO);
        sol.values = vec![0.0; model.layout.n_vars];
        let (k, d) = extract_weights(&sol, &model).unwrap();
        assert_eq!(k, vec![0.0, 0.0]);
        assert_eq!(d.turnover_cost, 0.0);
        sol.values[model.layout.k_plus.start] = 0.6;
        sol.values[model.layout.k_minus.start + 1] = 0.1;
        let (k, d) = extract_weights(&sol, &model).unwrap();
        assert_eq!(k, vec![0.6, -0.1]);
        assert!((d.leverage_usage - 0.7).abs() < 1e-15);
        assert!((d.invested_weight - 0.7).abs() < 1e-15);
        assert!((d.turnover_cost - (0.6 * 0.01 + 0.1 * 0.02)).abs() < 1e-15);
        sol.status = LpStatus::Infeasible;
        assert!(matches!(extract_weights(&sol, &model), Err(Error::NotOptimal(_))));
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ScenarioSet {
        scen((0..m).map(|_| (0..n).map(|_| rng.random_range(-0.08..0.1)).collect()).collect())
    }

    #[test]
    fn turnover_epigraph_is_tight_and_objective_recomputes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = rng.random_range(2..5);
            let m = rng.random_range(3..9);
            let s = random_instance(&mut rng, n, m);
            let cost: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..0.01)).collect();
            let con = TradingConstraintSet::new(1.5, None, 0.02, cost, true).unwrap();
            let k_prev: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
            let gamma = rng.random_range(0.0..1.0);
            let (model, sol, fam, amb) = solve_instance(&s, gamma, &con, &k_prev, 1e-6, AssemblyOptions::default());
            assert_eq!(sol.status, LpStatus::Optimal);
            assert!(sol.primal_residual <= 1e-7);
            let (_, d) = extract_weights(&sol, &model).unwrap();
            assert!((d.turnover_cost - d.lp_turnover_cost).abs() <= 1e-7, "{d:?}");
            let u = &model.layout.u;
            for i in 0..n {
                let gap = sol.values[u.start + i] - (sol.weights[i] - k_prev[i]).abs();
                assert!(gap.abs() <= 1e-7, "u_{i} slack {gap}");
            }
            let again = recomputed_objective(&sol, &model, &fam, &amb);
            assert!((again - sol.objective).abs() <= 1e-8, "{again} vs {}", sol.objective);
        }
    }

    #[test]
    fn encodings_agree_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let separated = AssemblyOptions {
            encoding: HyperplaneEncoding::Separated,
            strip_turnover: false,
        };
        for case in 0..50 {
            let n = rng.random_range(1..5);
            let m = rng.random_range(2..10);
            let s = random_instance(&mut rng, n, m);
            let c = [0.0, 0.001, 0.005][case % 3];
            let con = TradingConstraintSet::uniform(n, 1.5, c, if c > 0.0 { c * 3.0 } else { 0.0 }).unwrap();
            let k_prev = vec![0.0; n];
            let gamma = [0.0, 0.3, 0.7, 1.0][case % 4];
            let eps = [1e-4, 1e-5, 1e-6][case % 3];
            let (_, full, _, _) = solve_instance(&s, gamma, &con, &k_prev, eps, AssemblyOptions::default());
            let (_, sep, _, _) = solve_instance(&s, gamma, &con, &k_prev, eps, separated);
            assert_eq!(full.status, LpStatus::Optimal);
            assert_eq!(sep.status, LpStatus::Optimal);
            assert!(
                (full.objective - sep.objective).abs() <= 1e-9,
                "case {case}: {} vs {}",
                full.objective,
                sep.objective
            );
        }
    }

    #[test]
    fn lazy_rows_match_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let direct = SolverOptions {
            lazy_hyperplanes: false,
            ..SolverOptions::default()
        };
        for case in 0..20 {
            let n = rng.random_range(1..4);
            let m = rng.random_range(2..8);
            let s = random_instance(&mut rng, n, m);
            let c = [0.0, 0.002][case % 2];
            let con = TradingConstraintSet::uniform(n, 1.5, c, c * 3.0).unwrap();
            let k_prev = vec![0.0; n];
            let encoding = [HyperplaneEncoding::FullProduct, HyperplaneEncoding::Separated][case % 2];
            let options = AssemblyOptions {
                encoding,
                strip_turnover: false,
            };
            let (model, lazy, _, _) = solve_instance(&s, [0.0, 0.5, 1.0][case % 3], &con, &k_prev, 1e-5, options);
            let full = solve_with(&model, direct);
            assert_eq!(lazy.status, LpStatus::Optimal);
            assert_eq!(full.status, LpStatus::Optimal);
            assert!(model.primal_residual(&lazy.values) <= 1e-9);
            assert!(
                (lazy.objective - full.objective).abs() <= 1e-9,
                "case {case}: {} vs {}",
                lazy.objective,
                full.objective
            );
        }
    }

    #[test]
    fn zero_cost_model_matches_stripped_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let stripped = AssemblyOptions {
            encoding: HyperplaneEncoding::FullProduct,
            strip_turnover: true,
        };
        for _ in 0..10 {
            let n = rng.random_range(1..4);
            let m = rng.random_range(2..8);
            let s = random_instance(&mut rng, n, m);
            let con = TradingConstraintSet::uniform(n, 1.5, 0.0, 0.0).unwrap();
            let k_prev = vec![0.0; n];
            let (_, a, _, _) = solve_instance(&s, 0.3, &con, &k_prev, 1e-5, AssemblyOptions::default());
            let (_, b, _, _) = solve_instance(&s, 0.3, &con, &k_prev, 1e-5, stripped);
            assert!((a.objective - b.objective).abs() <= 1e-10);
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert!((x - y).abs() <= 1e-12, "{:?} vs {:?}", a.weights, b.weights);
            }
        }
        let con = TradingConstraintSet::uniform(1, 1.5, 0.01, 0.02).unwrap();
        let s = scen(vec![vec![0.01]]);
        let fam = family_for(&SeparableUtility::log(), &s, &con, budget(1e-5)).unwrap();
        let amb = PolyhedralAmbiguitySet::from_gamma(&[1.0], 0.0).unwrap();
        assert!(assemble_with(&s, &fam, &amb, &con, &[0.0], stripped).is_err());
    }

    #[test]
    fn objective_non_increasing_in_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            let s = random_instance(&mut rng, 3, 8);
            let con = TradingConstraintSet::uniform(3, 1.5, 0.001, 0.003).unwrap();
            let mut last = f64::INFINITY;
            for gamma in [0.0, 0.25, 0.5, 1.0] {
                let (_, sol, _, _) = solve_instance(&s, gamma, &con, &[0.0; 3], 1e-6, AssemblyOptions::default());
                assert!(sol.objective <= last + 1e-10);
                last = sol.objective;
            }
        }
    }

    #[test]
    fn row_count_audit_at_scale() {
        let (n, m) = (478, 126);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_instance(&mut rng, n, m);
        let u = SeparableUtility::log();
        let px = Partition::new(Axis::X, (0..12).map(|i| -0.2 + 0.4 * i as f64 / 11.0).collect()).unwrap();
        let pc = Partition::new(Axis::C, vec![0.0, 0.005, 0.01]).unwrap();
        let fam = build_hyperplanes(&u, &px, &pc, budget(1e-3)).unwrap();
        let con = TradingConstraintSet::uniform(n, 1.5, 0.001, 0.003).unwrap();
        let amb = PolyhedralAmbiguitySet::from_gamma(&s.probabilities, 0.5).unwrap();
        let model = assemble(&s, &fam, &amb, &con, &vec![0.0; n]).unwrap();
        let counts = model.row_counts();
        assert_eq!(counts.hyperplane, m * 12 * 3);
        assert_eq!(counts.dual_link, m);
        // leverage + survival + 2n turnover + cost definition + cost limit + m return definitions
        assert_eq!(counts.constraint, 1 + 1 + 2 * n + 2 + m);
        assert_eq!(counts.total(), model.rows.len());
    }

    #[test]
    fn rejects_infeasible_previous_weights_and_dimension_errors() {
        let s = scen(vec![vec![0.01, 0.02]]);
        let con = TradingConstraintSet::uniform(2, 1.0, 0.0, 0.0).unwrap();
        let fam = family_for(&SeparableUtility::log(), &s, &con, budget(1e-5)).unwrap();
        let amb = PolyhedralAmbiguitySet::from_gamma(&[1.0], 0.0).unwrap();
        assert!(matches!(assemble(&s, &fam, &amb, &con, &[0.8, 0.8]), Err(Error::Precondition(_))));
        assert!(matches!(assemble(&s, &fam, &amb, &con, &[0.1]), Err(Error::Dimension(_))));
        let amb2 = PolyhedralAmbiguitySet::from_gamma(&[0.5, 0.5], 0.0).unwrap();
        assert!(matches!(assemble(&s, &fam, &amb2, &con, &[0.0, 0.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn infeasible_model_reports_certificate() {
        let s = scen(vec![vec![0.01]]);
        let con = TradingConstraintSet::uniform(1, 1.0, 0.01, 0.001).unwrap();
        let fam = family_for(&SeparableUtility::log(), &s, &con, budget(1e-5)).unwrap();
        let amb = PolyhedralAmbiguitySet::from_gamma(&[1.0], 0.0).unwrap();
        let mut model = assemble(&s, &fam, &amb, &con, &[0.0]).unwrap();
        // Force K >= 0.5, which needs turnover cost 0.005 > 0.001.
        model.bounds[model.layout.k_plus.start] = (0.5, f64::INFINITY);
        model.bounds[model.layout.k_minus.start] = (0.0, 0.0);
        let sol = solve(&model);
        assert_eq!(sol.status, LpStatus::Infeasible);
        let row = sol.certificate_row.expect("certificate");
        assert!(matches!(
            model.rows[row].kind,
            RowKind::CostLimit | RowKind::CostDef | RowKind::TurnoverUp { .. }
        ));
    }

    #[test]
    fn lp_text_and_report() {
        let s = scen(vec![vec![0.01, 0.0], vec![-0.01, 0.0]]);
        let con = TradingConstraintSet::uniform(2, 1.5, 0.001, 0.003).unwrap();
        let (model, sol, _, _) = solve_instance(&s, 0.5, &con, &[0.0, 0.0], 1e-4, AssemblyOptions::default());
        let text = model.to_lp_text();
        assert!(text.starts_with("\\ robust portfolio LP\nMaximize"));
        assert!(text.contains("Subject To") && text.contains(" w free") && text.ends_with("End\n"));
        assert_eq!(text.matches("link_").count(), 2);
        let report = SolutionReport::new(&sol, &model, false);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["status"], "optimal");
        assert!(json.get("solve_time_ms").is_none());
        assert!(json["weights"].as_array().unwrap().len() == 2);
    }

    #[test]
    fn solve_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_instance(&mut rng, 4, 12);
        let con = TradingConstraintSet::uniform(4, 1.5, 0.001, 0.003).unwrap();
        let (_, a, _, _) = solve_instance(&s, 0.3, &con, &[0.0; 4], 1e-5, AssemblyOptions::default());
        let (_, b, _, _) = solve_instance(&s, 0.3, &con, &[0.0; 4], 1e-5, AssemblyOptions::default());
        assert_eq!(a.values, b.values);
    }
}
