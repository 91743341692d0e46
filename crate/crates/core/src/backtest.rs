//! Sliding-window backtest with turnover costs.
//!
//! At each rebalance the trailing `train_window` returns become equally
//! likely scenarios, a hyperplane family is built for their bounds, and the
//! robust LP is solved with the weights currently held as `K_prev`. The solved
//! weights are then held fixed for `rebalance_every` periods while the account
//! evolves as `V(t) = (1 + K^T X(t)) (1 - |K - K_prev|^T C) V(t - 1)`.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::PolyhedralAmbiguitySet;
use crate::data::{per_period_rate, ReturnMatrix};
use crate::error::{Error, Result};
use crate::partition::ErrorBudget;
use crate::robust_lp::{
    assemble_with, extract_weights, family_for, solve_with, AssemblyOptions, HyperplaneEncoding, SolverOptions,
    TradingConstraintSet,
};
use crate::utility::SeparableUtility;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    pub train_window: usize,
    pub rebalance_every: usize,
    pub leverage: f64,
    /// Uniform cost rate on every risky asset. Ignored when `cost_vector` is set.
    #[serde(default)]
    pub cost_rate: f64,
    /// Per-asset cost rates, one per column of the return matrix after the
    /// risk-free asset has been appended.
    #[serde(default)]
    pub cost_vector: Option<Vec<f64>>,
    /// Limit on `|K - K_prev|^T C` per rebalance. Defaults to `2 L` times the
    /// largest cost rate.
    #[serde(default)]
    pub turnover_cost_limit: Option<f64>,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_budget")]
    pub error_budget: ErrorBudget,
    #[serde(default = "SeparableUtility::log")]
    pub utility: SeparableUtility,
    #[serde(default)]
    pub risk_free_rate: f64,
    /// Appends a risk-free column to data that does not already have one.
    #[serde(default = "default_true")]
    pub risk_free_asset: bool,
    #[serde(default = "default_periods_per_year")]
    pub periods_per_year: u32,
    /// Uniform cap on `|K_i|`, applied to every asset when set.
    #[serde(default)]
    pub holding_cap: Option<f64>,
    #[serde(default = "default_true")]
    pub allow_short: bool,
    #[serde(default)]
    pub encoding: HyperplaneEncoding,
    /// Solve the reduced model without turnover columns. Requires zero costs.
    #[serde(default)]
    pub strip_turnover: bool,
    #[serde(default = "default_initial_value")]
    pub initial_value: f64,
}

fn default_budget() -> ErrorBudget {
    ErrorBudget { eps_x: 1e-5, eps_c: 1e-5 }
}

fn default_true() -> bool {
    true
}

fn default_periods_per_year() -> u32 {
    252
}

fn default_initial_value() -> f64 {
    100.0
}

impl Default for BacktestConfig {
    /// Six months of daily training data, quarterly rebalancing, `L = 1.5`.
    fn default() -> Self {
        Self {
            train_window: 126,
            rebalance_every: 63,
            leverage: 1.5,
            cost_rate: 0.0,
            cost_vector: None,
            turnover_cost_limit: None,
            gamma: 0.0,
            error_budget: default_budget(),
            utility: SeparableUtility::log(),
            risk_free_rate: 0.0,
            risk_free_asset: true,
            periods_per_year: 252,
            holding_cap: None,
            allow_short: true,
            encoding: HyperplaneEncoding::FullProduct,
            strip_turnover: false,
            initial_value: 100.0,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_window == 0 || self.rebalance_every == 0 {
            return Err(Error::Config("train_window and rebalance_every must be at least 1".into()));
        }
        if !(self.initial_value > 0.0) || !self.initial_value.is_finite() {
            return Err(Error::Config(format!("initial_value must be positive, got {}", self.initial_value)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if self.periods_per_year == 0 {
            return Err(Error::Config("periods_per_year must be at least 1".into()));
        }
        ErrorBudget::new(self.error_budget.eps_x, self.error_budget.eps_c)?;
        Ok(())
    }

    /// The data the backtest trades: `data` plus the risk-free column if
    /// requested and not already present.
    pub fn prepare(&self, data: &ReturnMatrix) -> Result<ReturnMatrix> {
        if self.risk_free_asset && data.risk_free.is_none() {
            data.append_risk_free(self.risk_free_rate, self.periods_per_year)
        } else {
            Ok(data.clone())
        }
    }

    /// Cost vector over the columns of prepared data. A uniform rate is not
    /// charged on the risk-free column.
    pub fn costs_for(&self, data: &ReturnMatrix) -> Result<Vec<f64>> {
        match &self.cost_vector {
            Some(c) if c.len() != data.n_assets() => Err(Error::Dimension(format!(
                "{} cost rates for {} assets",
                c.len(),
                data.n_assets()
            ))),
            Some(c) => Ok(c.clone()),
            None => Ok((0..data.n_assets())
                .map(|i| if Some(i) == data.risk_free { 0.0 } else { self.cost_rate })
                .collect()),
        }
    }

    pub fn constraints_for(&self, data: &ReturnMatrix) -> Result<TradingConstraintSet> {
        let costs = self.costs_for(data)?;
        let max_cost = costs.iter().copied().fold(0.0, f64::max);
        let limit = self.turnover_cost_limit.unwrap_or(2.0 * self.leverage * max_cost);
        let caps = self.holding_cap.map(|d| vec![d; data.n_assets()]);
        TradingConstraintSet::new(self.leverage, caps, limit, costs, self.allow_short)
    }
}

/// State of the book after one rebalance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rebalance {
    /// Index of the first return period traded with these weights.
    pub period: usize,
    pub date: String,
    pub weights: Vec<f64>,
    /// `sum |K_i - K_prev,i|`.
    pub turnover_rate: f64,
    /// Currency paid: `|K - K_prev|^T C * V` at the value before the trade.
    pub cost_paid: f64,
    pub invested_weight: f64,
    pub objective: f64,
    pub m_x: usize,
    pub m_c: usize,
    pub iterations: u64,
    #[serde(skip)]
    pub solve_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccountPath {
    pub tickers: Vec<String>,
    /// End date of the last training period, when known.
    pub start_date: Option<String>,
    /// End date of every traded period.
    pub dates: Vec<String>,
    /// `values[0]` is the starting value, `values[t + 1]` the value after `dates[t]`.
    pub values: Vec<f64>,
    /// Gross risky weight in force during each traded period.
    pub invested_weight: Vec<f64>,
    pub rebalances: Vec<Rebalance>,
}

impl AccountPath {
    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("path has a starting value")
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `date,value,invested_weight`. The first row is the
    /// starting value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,value,invested_weight\n");
        let first_weight = self.invested_weight.first().copied().unwrap_or(0.0);
        out.push_str(&format!(
            "{},{},{}\n",
            self.start_date.as_deref().unwrap_or(""),
            self.values[0],
            first_weight
        ));
        for (t, date) in self.dates.iter().enumerate() {
            out.push_str(&format!("{date},{},{}\n", self.values[t + 1], self.invested_weight[t]));
        }
        out
    }
}

/// Marker for a Sharpe ratio that is not defined because returns never vary.
pub const SHARPE_UNDEFINED: Option<f64> = None;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceReport {
    pub cumulative_return: f64,
    pub max_drawdown: f64,
    /// `null` when the per-period returns have zero volatility.
    pub annualized_sharpe_ratio: Option<f64>,
    pub average_turnover_rate: f64,
    /// Average gross weight on risky assets over rebalances.
    pub average_invested_weight: f64,
    /// Average over rebalances of the largest `|K_i|` on a risky asset.
    pub average_max_asset_weight: f64,
    pub average_optimal_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_running_time_sec: Option<f64>,
    pub total_cost_paid: f64,
    pub final_value: f64,
    pub periods: usize,
    pub rebalances: usize,
}

impl PerformanceReport {
    /// Drops wall-clock fields so reruns serialize identically.
    pub fn without_timing(mut self) -> Self {
        self.average_running_time_sec = None;
        self
    }
}

/// One step of the account recursion.
pub fn account_step(v_prev: f64, k: &[f64], k_prev: &[f64], x: &[f64], costs: &[f64]) -> Result<f64> {
    let n = k.len();
    if k_prev.len() != n || x.len() != n || costs.len() != n {
        return Err(Error::Dimension(format!(
            "account step with {n} weights, {} previous, {} returns, {} costs",
            k_prev.len(),
            x.len(),
            costs.len()
        )));
    }
    if !(v_prev >= 0.0) || !v_prev.is_finite() {
        return Err(Error::Domain(format!("account value must be non-negative, got {v_prev}")));
    }
    let growth = 1.0 + k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let cost: f64 = (0..n).map(|i| (k[i] - k_prev[i]).abs() * costs[i]).sum();
    let v = growth * (1.0 - cost) * v_prev;
    if v < 0.0 || !v.is_finite() {
        return Err(Error::Invariant(format!(
            "account value {v} after growth factor {growth} and cost fraction {cost}"
        )));
    }
    Ok(v)
}

fn risky_weights<'a>(k: &'a [f64], risk_free: Option<usize>) -> impl Iterator<Item = f64> + 'a {
    k.iter()
        .enumerate()
        .filter(move |(i, _)| Some(*i) != risk_free)
        .map(|(_, w)| w.abs())
}

/// Runs the sliding-window protocol over `data`.
pub fn run(config: &BacktestConfig, data: &ReturnMatrix) -> Result<(AccountPath, PerformanceReport)> {
    config.validate()?;
    let data = config.prepare(data)?;
    let t_total = data.n_periods();
    if t_total <= config.train_window {
        return Err(Error::Precondition(format!(
            "{t_total} return periods cannot cover a training window of {} plus one traded period",
            config.train_window
        )));
    }
    let con = config.constraints_for(&data)?;
    let n = data.n_assets();
    let options = AssemblyOptions {
        encoding: config.encoding,
        strip_turnover: config.strip_turnover,
    };
    let start = config.train_window;
    let mut path = AccountPath {
        tickers: data.tickers.clone(),
        start_date: Some(data.dates[start - 1].clone()),
        dates: Vec::with_capacity(t_total - start),
        values: vec![config.initial_value],
        invested_weight: Vec::with_capacity(t_total - start),
        rebalances: Vec::new(),
    };
    let mut k_prev = vec![0.0; n];
    let mut v = config.initial_value;
    let mut t0 = start;
    while t0 < t_total {
        let date = &data.dates[t0];
        let scen = data.build_scenario_set(t0 - config.train_window..t0)?;
        let fam = family_for(&config.utility, &scen, &con, config.error_budget)?;
        let amb = PolyhedralAmbiguitySet::from_gamma(&scen.probabilities, config.gamma)?;
        let model = assemble_with(&scen, &fam, &amb, &con, &k_prev, options)?;
        let sol = solve_with(&model, SolverOptions::default());
        let (k, diag) = extract_weights(&sol, &model)
            .map_err(|_| Error::NotOptimal(format!("rebalance on {date}: status {:?}", sol.status)))?;
        path.rebalances.push(Rebalance {
            period: t0,
            date: date.clone(),
            weights: k.clone(),
            turnover_rate: diag.turnover_rate,
            cost_paid: con.turnover_cost(&k, &k_prev) * v,
            invested_weight: diag.invested_weight,
            objective: sol.objective,
            m_x: model.plane_counts.0,
            m_c: model.plane_counts.1,
            iterations: sol.iterations,
            solve_time: sol.solve_time,
        });
        let end = (t0 + config.rebalance_every).min(t_total);
        for t in t0..end {
            let held = if t == t0 { &k_prev } else { &k };
            v = account_step(v, &k, held, &data.column(t), &con.cost_vector)
                .map_err(|e| Error::Invariant(format!("on {}: {e}", data.dates[t])))?;
            path.dates.push(data.dates[t].clone());
            path.values.push(v);
            path.invested_weight.push(diag.invested_weight);
        }
        k_prev = k;
        t0 = end;
    }
    let report = metrics(&path, config.periods_per_year, config.risk_free_rate, data.risk_free)?;
    Ok((path, report))
}

/// Runs independent configurations in parallel on the current rayon pool.
pub fn run_many(configs: &[BacktestConfig], data: &ReturnMatrix) -> Vec<Result<(AccountPath, PerformanceReport)>> {
    configs.par_iter().map(|c| run(c, data)).collect()
}

/// Replays the rebalance weights of `path` on `data` under another cost
/// vector, returning the account values.
pub fn replay(path: &AccountPath, data: &ReturnMatrix, costs: &[f64]) -> Result<Vec<f64>> {
    let Some(first) = path.rebalances.first() else {
        return Ok(path.values.clone());
    };
    let n = first.weights.len();
    let mut values = vec![path.values[0]];
    let mut k_prev = vec![0.0; n];
    for (b, reb) in path.rebalances.iter().enumerate() {
        let end = path.rebalances.get(b + 1).map_or(first.period + path.dates.len(), |r| r.period);
        for t in reb.period..end {
            let held = if t == reb.period { &k_prev } else { &reb.weights };
            let v = account_step(*values.last().unwrap(), &reb.weights, held, &data.column(t), costs)?;
            values.push(v);
        }
        k_prev = reb.weights.clone();
    }
    Ok(values)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Largest relative decline from a running peak.
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &v in values {
        peak = peak.max(v);
        if peak > 0.0 {
            worst = worst.max(1.0 - v / peak);
        }
    }
    worst.clamp(0.0, 1.0)
}

/// Annualized Sharpe ratio of the per-period returns of `values`, using the
/// sample standard deviation. `None` when the returns do not vary.
pub fn annualized_sharpe(values: &[f64], periods_per_year: u32, risk_free_annual: f64) -> Option<f64> {
    let returns: Vec<f64> = values
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] - 1.0 } else { 0.0 })
        .collect();
    if returns.len() < 2 {
        return SHARPE_UNDEFINED;
    }
    let rf = per_period_rate(risk_free_annual, periods_per_year);
    let mu = mean(returns.iter().copied())?;
    let var = returns.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / (returns.len() - 1) as f64;
    let sd = var.sqrt();
    if sd <= 1e-12 * (1.0 + mu.abs()) {
        return SHARPE_UNDEFINED;
    }
    Some((mu - rf) / sd * f64::from(periods_per_year).sqrt())
}

/// Summary statistics of a path. `risk_free` marks the column excluded from
/// the per-asset weight statistics.
pub fn metrics(
    path: &AccountPath,
    periods_per_year: u32,
    risk_free_annual: f64,
    risk_free: Option<usize>,
) -> Result<PerformanceReport> {
    if path.values.len() < 2 {
        return Err(Error::Precondition("metrics need at least two account values".into()));
    }
    let v0 = path.values[0];
    let rebs = &path.rebalances;
    let objective = mean(rebs.iter().map(|r| r.objective).filter(|o| o.is_finite()));
    Ok(PerformanceReport {
        cumulative_return: path.final_value() / v0 - 1.0,
        max_drawdown: max_drawdown(&path.values),
        annualized_sharpe_ratio: annualized_sharpe(&path.values, periods_per_year, risk_free_annual),
        average_turnover_rate: mean(rebs.iter().map(|r| r.turnover_rate)).unwrap_or(0.0),
        average_invested_weight: mean(rebs.iter().map(|r| r.invested_weight)).unwrap_or(0.0),
        average_max_asset_weight: mean(
            rebs.iter()
                .map(|r| risky_weights(&r.weights, risk_free).fold(0.0, f64::max)),
        )
        .unwrap_or(0.0),
        average_optimal_value: objective,
        average_running_time_sec: mean(rebs.iter().map(|r| r.solve_time.as_secs_f64())),
        total_cost_paid: rebs.iter().map(|r| r.cost_paid).sum(),
        final_value: path.final_value(),
        periods: path.dates.len(),
        rebalances: rebs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holding {
    Asset(usize),
    /// `1/n` in each risky asset.
    EqualWeight,
}

/// Buys once at the start of period `start` and lets the holdings drift with
/// prices. The cost rate is charged on the initial purchase only.
pub fn benchmark_buy_and_hold(
    data: &ReturnMatrix,
    holding: Holding,
    cost_rate: f64,
    start: usize,
    initial_value: f64,
    periods_per_year: u32,
) -> Result<(AccountPath, PerformanceReport)> {
    if start >= data.n_periods() {
        return Err(Error::Precondition(format!(
            "benchmark start {start} is past the last of {} periods",
            data.n_periods()
        )));
    }
    if !(0.0..1.0).contains(&cost_rate) {
        return Err(Error::Domain(format!("cost rate must lie in [0, 1), got {cost_rate}")));
    }
    let n = data.n_assets();
    let risky: Vec<usize> = (0..n).filter(|i| Some(*i) != data.risk_free).collect();
    let mut k = vec![0.0; n];
    match holding {
        Holding::Asset(i) if i < n => k[i] = 1.0,
        Holding::Asset(i) => return Err(Error::Dimension(format!("asset {i} of {n}"))),
        Holding::EqualWeight if risky.is_empty() => {
            return Err(Error::Precondition("no risky assets to hold".into()));
        }
        Holding::EqualWeight => risky.iter().for_each(|&i| k[i] = 1.0 / risky.len() as f64),
    }
    let gross: f64 = k.iter().map(|w| w.abs()).sum();
    let after_cost = initial_value * (1.0 - cost_rate * gross);
    let mut holdings: Vec<f64> = k.iter().map(|w| w * after_cost).collect();
    let mut path = AccountPath {
        tickers: data.tickers.clone(),
        start_date: start.checked_sub(1).map(|s| data.dates[s].clone()),
        dates: Vec::new(),
        values: vec![initial_value],
        invested_weight: Vec::new(),
        rebalances: vec![Rebalance {
            period: start,
            date: data.dates[start].clone(),
            weights: k.clone(),
            turnover_rate: gross,
            cost_paid: initial_value - after_cost,
            invested_weight: risky_weights(&k, data.risk_free).sum(),
            objective: f64::NAN,
            m_x: 0,
            m_c: 0,
            iterations: 0,
            solve_time: Duration::ZERO,
        }],
    };
    for t in start..data.n_periods() {
        let before: f64 = holdings.iter().sum();
        let invested = if before > 0.0 {
            risky.iter().map(|&i| holdings[i].abs()).sum::<f64>() / before
        } else {
            0.0
        };
        for (h, row) in holdings.iter_mut().zip(&data.returns) {
            *h *= 1.0 + row[t];
        }
        path.dates.push(data.dates[t].clone());
        path.values.push(holdings.iter().sum());
        path.invested_weight.push(invested);
    }
    let mut report = metrics(&path, periods_per_year, 0.0, data.risk_free)?;
    report.average_running_time_sec = None;
    Ok((path, report))
}
