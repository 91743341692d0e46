//! Command-line front end shared by the `dro-portfolio` binary and its tests.
//!
//! Every command reads an optional JSON [`RunConfig`], writes JSON reports
//! and CSV series into the output directory, and returns an exit code:
//! 0 on success, 1 when a solve or a verified property fails, 2 for usage
//! and input errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::AmbiguitySpec;
use crate::backtest::{self, AccountPath, BacktestConfig, Holding, PerformanceReport};
use crate::data::{load_prices, CsvLayout, ReturnMatrix};
use crate::error::Error;
use crate::oracle::{run_verify, Fault, Suite, VerifyReport};
use crate::partition::{partition_report, ErrorBudget, PartitionReport};
use crate::robust_lp::{assemble_with, family_for, solve_with, AssemblyOptions, SolutionReport, SolverOptions};
use crate::utility::SeparableUtility;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable capping the worker threads used by sweeps.
pub const THREADS_ENV: &str = "DRO_PORTFOLIO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dro-portfolio", version, about = "Distributionally robust portfolio selection with hyperplane utilities")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for reports and series.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed recorded in every report and used by randomized checks.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parameter sweep, e.g. `gamma=0,0.25,0.5`.
    #[arg(long, global = true)]
    pub sweep: Option<String>,
    /// Omit timestamps and wall-clock timings so reruns are byte-identical.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and certify a hyperplane family and tabulate plane removals.
    Partition(PartitionArgs),
    /// Solve one rebalance on the most recent training window.
    Solve(DataArgs),
    /// Run the sliding-window backtest.
    Backtest(BacktestArgs),
    /// Run the oracle suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub eps_x: Option<f64>,
    #[arg(long)]
    pub eps_c: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Price CSV, overriding the configured path.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Also write buy-and-hold benchmark paths.
    #[arg(long)]
    pub benchmarks: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Comma-separated suites to run; all suites when omitted.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub suites: Option<Vec<String>>,
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub utility: SeparableUtility,
    pub eps_x: f64,
    pub eps_c: f64,
    pub x_box: (f64, f64),
    pub c_box: (f64, f64),
    /// Grid resolution per axis used to certify the joint error.
    pub grid: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            utility: SeparableUtility::log(),
            eps_x: 1e-5,
            eps_c: 1e-5,
            x_box: (-0.2, 0.2),
            c_box: (0.0, 0.02),
            grid: 1000,
        }
    }
}

/// Everything a command may need. Sections a command does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Price CSV. Relative paths resolve against the config file's directory.
    pub data: Option<PathBuf>,
    pub delimiter: char,
    pub date_column: String,
    pub strategy: BacktestConfig,
    /// Overrides the contamination level of `strategy` in `solve`.
    pub ambiguity: Option<AmbiguitySpec>,
    /// Weights held before the `solve` rebalance; zero when absent.
    pub k_prev: Option<Vec<f64>>,
    /// Return period before which the `solve` training window ends; the end of
    /// the data when absent.
    pub window_end: Option<usize>,
    pub partition: PartitionConfig,
    pub suites: Option<Vec<String>>,
    pub benchmarks: bool,
    /// Ticker of a single-asset buy-and-hold benchmark.
    pub benchmark_asset: Option<String>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            delimiter: ',',
            date_column: "date".into(),
            strategy: BacktestConfig::default(),
            ambiguity: None,
            k_prev: None,
            window_end: None,
            partition: PartitionConfig::default(),
            suites: None,
            benchmarks: false,
            benchmark_asset: None,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        if let (Some(data), Some(dir)) = (&config.data, path.parent()) {
            if data.is_relative() {
                config.data = Some(dir.join(data));
            }
        }
        Ok(config)
    }

    fn layout(&self) -> Result<CsvLayout, CliError> {
        if !self.delimiter.is_ascii() {
            return Err(CliError::Usage(format!("delimiter {:?} is not ASCII", self.delimiter)));
        }
        Ok(CsvLayout {
            delimiter: self.delimiter as u8,
            date_column: self.date_column.clone(),
        })
    }

    fn returns(&self) -> Result<ReturnMatrix, CliError> {
        let path = self
            .data
            .as_ref()
            .ok_or_else(|| CliError::Usage("no price data given (use --data or \"data\" in the config)".into()))?;
        let prices = load_prices(path, &self.layout()?)?;
        let (filled, dropped) = prices.interpolate_missing();
        for ticker in dropped {
            eprintln!("warning: dropped {ticker}, which lacks its first or last price");
        }
        Ok(filled.compute_returns()?)
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input data.
    Usage(String),
    /// A solve or a checked property failed.
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotOptimal(_) | Error::Invariant(_) | Error::Numerical(_) | Error::Bracket(_) => {
                CliError::Failure(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// One `name=v1,v2,...` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<f64>,
}

pub const SWEEP_PARAMS: [&str; 8] = [
    "gamma",
    "cost_rate",
    "turnover_cost_limit",
    "leverage",
    "eps_x",
    "eps_c",
    "train_window",
    "rebalance_every",
];

impl Sweep {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let (param, list) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("sweep {spec:?} is not of the form param=v1,v2")))?;
        let param = param.trim().to_string();
        if !SWEEP_PARAMS.contains(&param.as_str()) {
            return Err(CliError::Usage(format!(
                "cannot sweep {param:?}; choose one of {}",
                SWEEP_PARAMS.join(", ")
            )));
        }
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("sweep value {v:?} is not a number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(CliError::Usage("sweep has no values".into()));
        }
        Ok(Self { param, values })
    }

    fn label(&self, value: f64) -> String {
        format!("{}_{value}", self.param)
    }
}

fn as_count(param: &str, value: f64) -> Result<usize, CliError> {
    if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(CliError::Usage(format!("{param} must be a whole number, got {value}")))
    }
}

/// Applies one sweep point to a strategy configuration.
pub fn apply_sweep(config: &mut BacktestConfig, param: &str, value: f64) -> Result<(), CliError> {
    match param {
        "gamma" => config.gamma = value,
        "cost_rate" => config.cost_rate = value,
        "turnover_cost_limit" => config.turnover_cost_limit = Some(value),
        "leverage" => config.leverage = value,
        "eps_x" => config.error_budget.eps_x = value,
        "eps_c" => config.error_budget.eps_c = value,
        "train_window" => config.train_window = as_count(param, value)?,
        "rebalance_every" => config.rebalance_every = as_count(param, value)?,
        _ => return Err(CliError::Usage(format!("cannot sweep {param:?}"))),
    }
    Ok(())
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Usage(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepPoint<'a>>,
    result: T,
}

#[derive(Serialize)]
struct SweepPoint<'a> {
    param: &'a str,
    value: f64,
}

struct Context {
    config: RunConfig,
    out: PathBuf,
    seed: u64,
    sweep: Option<Sweep>,
    timestamps: bool,
}

impl Context {
    fn write_json<T: Serialize>(
        &self,
        name: &str,
        command: &str,
        point: Option<(&str, f64)>,
        result: T,
    ) -> Result<PathBuf, CliError> {
        let generated_at = self.timestamps.then(|| {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            chrono::DateTime::from_timestamp(secs as i64, 0).map_or_else(String::new, |t| t.to_rfc3339())
        });
        let envelope = Envelope {
            command,
            seed: self.seed,
            generated_at,
            sweep: point.map(|(param, value)| SweepPoint { param, value }),
            result,
        };
        let mut text = serde_json::to_string_pretty(&envelope).map_err(|e| CliError::Failure(e.to_string()))?;
        text.push('\n');
        let path = self.out.join(name);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    /// Strategy configurations for every sweep point, or the single
    /// configured one.
    fn strategies(&self) -> Result<Vec<(Option<f64>, BacktestConfig)>, CliError> {
        match &self.sweep {
            None => Ok(vec![(None, self.config.strategy.clone())]),
            Some(s) => s
                .values
                .iter()
                .map(|&v| {
                    let mut c = self.config.strategy.clone();
                    apply_sweep(&mut c, &s.param, v)?;
                    Ok((Some(v), c))
                })
                .collect(),
        }
    }

    fn file_stem(&self, base: &str, value: Option<f64>) -> String {
        match (&self.sweep, value) {
            (Some(s), Some(v)) => format!("{base}_{}", s.label(v)),
            _ => base.to_string(),
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() {
    let Ok(value) = std::env::var(THREADS_ENV) else { return };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // A second call in the same process keeps the first pool.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring {THREADS_ENV}={value:?}"),
    }
}

pub fn run(cli: Cli) -> Result<i32, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let sweep = cli.sweep.as_deref().map(Sweep::parse).transpose()?;
    let seed = cli.seed.unwrap_or(config.seed);
    config.seed = seed;
    let out = cli.out.clone().unwrap_or_else(|| config.out.clone());
    let mut ctx = Context {
        config,
        out,
        seed,
        sweep,
        timestamps: !cli.no_timestamp,
    };
    match cli.command {
        Command::Partition(args) => cmd_partition(&mut ctx, args),
        Command::Solve(args) => {
            if let Some(d) = args.data {
                ctx.config.data = Some(d);
            }
            cmd_solve(&ctx)
        }
        Command::Backtest(args) => {
            if let Some(d) = args.data.data {
                ctx.config.data = Some(d);
            }
            ctx.config.benchmarks |= args.benchmarks;
            cmd_backtest(&ctx)
        }
        Command::Verify(args) => cmd_verify(&ctx, args),
    }
}

fn cmd_partition(ctx: &mut Context, args: PartitionArgs) -> Result<i32, CliError> {
    let p = &mut ctx.config.partition;
    if let Some(e) = args.eps_x {
        p.eps_x = e;
    }
    if let Some(e) = args.eps_c {
        p.eps_c = e;
    }
    let base = p.clone();
    let points: Vec<(Option<f64>, PartitionConfig)> = match &ctx.sweep {
        None => vec![(None, base)],
        Some(s) if s.param == "eps_x" || s.param == "eps_c" => s
            .values
            .iter()
            .map(|&v| {
                let mut c = base.clone();
                if s.param == "eps_x" {
                    c.eps_x = v;
                } else {
                    c.eps_c = v;
                }
                (Some(v), c)
            })
            .collect(),
        Some(s) => return Err(CliError::Usage(format!("partition can only sweep eps_x or eps_c, not {}", s.param))),
    };
    let reports: Vec<Result<PartitionReport, CliError>> = points
        .par_iter()
        .map(|(_, c)| {
            let budget = ErrorBudget::new(c.eps_x, c.eps_c)?;
            Ok(partition_report(&c.utility, c.x_box, c.c_box, budget, c.grid)?)
        })
        .collect();
    for ((value, _), report) in points.iter().zip(reports) {
        let report = report?;
        let point = ctx.sweep.as_ref().zip(*value).map(|(s, v)| (s.param.as_str(), v));
        let path = ctx.write_json(&format!("{}.json", ctx.file_stem("partition", *value)), "partition", point, &report)?;
        println!(
            "eps_x={} eps_c={}: M_x={} M_c={} sup_x={:.3e} sup_c={:.3e} -> {}",
            report.eps_x,
            report.eps_c,
            report.m_x,
            report.m_c,
            report.sup_x,
            report.sup_c,
            path.display()
        );
    }
    Ok(EXIT_OK)
}

fn solve_one(ctx: &Context, data: &ReturnMatrix, strategy: &BacktestConfig) -> Result<SolutionReport, CliError> {
    strategy.validate()?;
    let data = strategy.prepare(data)?;
    let end = ctx.config.window_end.unwrap_or(data.n_periods());
    if end > data.n_periods() || end < strategy.train_window {
        return Err(CliError::Usage(format!(
            "window ending at period {end} with {} training periods does not fit {} periods of data",
            strategy.train_window,
            data.n_periods()
        )));
    }
    let scen = data.build_scenario_set(end - strategy.train_window..end)?;
    let con = strategy.constraints_for(&data)?;
    let fam = family_for(&strategy.utility, &scen, &con, strategy.error_budget)?;
    let amb = match &ctx.config.ambiguity {
        Some(spec) if ctx.sweep.as_ref().is_none_or(|s| s.param != "gamma") => spec.build(&scen.probabilities)?,
        _ => AmbiguitySpec::Gamma { gamma: strategy.gamma }.build(&scen.probabilities)?,
    };
    let k_prev = ctx.config.k_prev.clone().unwrap_or_else(|| vec![0.0; data.n_assets()]);
    let options = AssemblyOptions {
        encoding: strategy.encoding,
        strip_turnover: strategy.strip_turnover,
    };
    let model = assemble_with(&scen, &fam, &amb, &con, &k_prev, options)?;
    let sol = solve_with(&model, SolverOptions::default());
    Ok(SolutionReport::new(&sol, &model, ctx.timestamps))
}

fn cmd_solve(ctx: &Context) -> Result<i32, CliError> {
    let data = ctx.config.returns()?;
    let points = ctx.strategies()?;
    let reports: Vec<Result<SolutionReport, CliError>> =
        points.par_iter().map(|(_, s)| solve_one(ctx, &data, s)).collect();
    let mut code = EXIT_OK;
    let mut summary = String::from("param,value,status,objective\n");
    for ((value, _), report) in points.iter().zip(reports) {
        let report = report?;
        let point = ctx.sweep.as_ref().zip(*value).map(|(s, v)| (s.param.as_str(), v));
        let path = ctx.write_json(&format!("{}.json", ctx.file_stem("solve", *value)), "solve", point, &report)?;
        let prefix = point.map_or(String::new(), |(p, v)| format!("{p}={v}: "));
        match report.objective {
            Some(obj) => println!("{prefix}status {:?}, objective {obj:.9e}", report.status),
            None => println!("{prefix}status {:?}", report.status),
        }
        for (t, w) in report.tickers.iter().zip(&report.weights) {
            println!("  {t:>12} {w:+.6}");
        }
        if let Some(ms) = report.solve_time_ms {
            println!("  solve time {ms:.1} ms, {} iterations", report.iterations);
        }
        println!("  -> {}", path.display());
        if let Some((p, v)) = point {
            let obj = report.objective.map_or(String::new(), |o| o.to_string());
            let _ = writeln!(summary, "{p},{v},{:?},{obj}", report.status);
        }
        if report.objective.is_none() || report.status != crate::robust_lp::LpStatus::Optimal {
            eprintln!("error: solve finished with status {:?}", report.status);
            code = EXIT_FAILURE;
        }
    }
    if ctx.sweep.is_some() {
        ctx.write_text("solve_sweep.csv", &summary)?;
    }
    Ok(code)
}

#[derive(Serialize)]
struct BacktestOutput<'a> {
    strategy: &'a BacktestConfig,
    report: PerformanceReport,
    rebalances: &'a [backtest::Rebalance],
}

#[derive(Serialize)]
struct BenchmarkOutput {
    name: String,
    report: PerformanceReport,
}

fn cmd_backtest(ctx: &Context) -> Result<i32, CliError> {
    let data = ctx.config.returns()?;
    let points = ctx.strategies()?;
    let results: Vec<Result<(AccountPath, PerformanceReport), Error>> =
        points.par_iter().map(|(_, s)| backtest::run(s, &data)).collect();
    let mut summary = String::from(
        "param,value,cumulative_return,max_drawdown,annualized_sharpe_ratio,average_turnover_rate,average_invested_weight,average_max_asset_weight\n",
    );
    for ((value, strategy), result) in points.iter().zip(results) {
        let (path, report) = result?;
        let report = if ctx.timestamps { report } else { report.without_timing() };
        let stem = ctx.file_stem("backtest", *value);
        let point = ctx.sweep.as_ref().zip(*value).map(|(s, v)| (s.param.as_str(), v));
        let output = BacktestOutput {
            strategy,
            report: report.clone(),
            rebalances: &path.rebalances,
        };
        let json = ctx.write_json(&format!("{stem}_report.json"), "backtest", point, &output)?;
        let csv = ctx.write_text(&format!("{stem}_path.csv"), &path.to_csv())?;
        let prefix = point.map_or(String::new(), |(p, v)| format!("{p}={v}: "));
        println!(
            "{prefix}cumulative return {:.6}, max drawdown {:.4}, {} rebalances -> {}, {}",
            report.cumulative_return,
            report.max_drawdown,
            report.rebalances,
            json.display(),
            csv.display()
        );
        if let Some((p, v)) = point {
            let sharpe = report.annualized_sharpe_ratio.map_or(String::new(), |s| s.to_string());
            let _ = writeln!(
                summary,
                "{p},{v},{},{},{sharpe},{},{},{}",
                report.cumulative_return,
                report.max_drawdown,
                report.average_turnover_rate,
                report.average_invested_weight,
                report.average_max_asset_weight
            );
        }
    }
    if ctx.sweep.is_some() {
        ctx.write_text("backtest_sweep.csv", &summary)?;
    }
    if ctx.config.benchmarks {
        write_benchmarks(ctx, &data)?;
    }
    Ok(EXIT_OK)
}

fn write_benchmarks(ctx: &Context, data: &ReturnMatrix) -> Result<(), CliError> {
    let strategy = &ctx.config.strategy;
    let mut holdings = vec![("equal_weight".to_string(), Holding::EqualWeight)];
    if let Some(ticker) = &ctx.config.benchmark_asset {
        let i = data
            .tickers
            .iter()
            .position(|t| t == ticker)
            .ok_or_else(|| CliError::Usage(format!("benchmark asset {ticker:?} is not in the data")))?;
        holdings.push((ticker.clone(), Holding::Asset(i)));
    }
    let mut outputs = Vec::new();
    for (name, holding) in holdings {
        let (path, report) = backtest::benchmark_buy_and_hold(
            data,
            holding,
            strategy.cost_rate,
            strategy.train_window.min(data.n_periods().saturating_sub(1)),
            strategy.initial_value,
            strategy.periods_per_year,
        )?;
        let csv = ctx.write_text(&format!("benchmark_{name}_path.csv"), &path.to_csv())?;
        println!("benchmark {name}: cumulative return {:.6} -> {}", report.cumulative_return, csv.display());
        outputs.push(BenchmarkOutput { name, report });
    }
    ctx.write_json("benchmarks.json", "backtest", None, &outputs)?;
    Ok(())
}

fn parse_suites(names: &[String]) -> Result<Vec<Suite>, CliError> {
    let names: Vec<&str> = names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(CliError::Usage("empty suite selection".into()));
    }
    names
        .iter()
        .map(|n| {
            Suite::parse(n).ok_or_else(|| {
                let all: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
                CliError::Usage(format!("unknown suite {n:?}; choose from {}", all.join(", ")))
            })
        })
        .collect()
}

fn cmd_verify(ctx: &Context, args: VerifyArgs) -> Result<i32, CliError> {
    let suites = match args.suites.as_ref().or(ctx.config.suites.as_ref()) {
        Some(names) => parse_suites(names)?,
        None => Suite::ALL.to_vec(),
    };
    let fault = match args.inject_fault.as_deref() {
        None => None,
        Some("flip-hyperplane-sign") => Some(Fault::FlipHyperplaneSign),
        Some(other) => return Err(CliError::Usage(format!("unknown fault {other:?}"))),
    };
    let report: VerifyReport = run_verify(&suites, ctx.seed, fault)?;
    let path = ctx.write_json("verify.json", "verify", None, &report)?;
    for s in &report.suites {
        println!(
            "{:<14} {} ({} checks)",
            s.suite.name(),
            if s.passed { "pass" } else { "FAIL" },
            s.checks
        );
        for f in &s.failures {
            println!("  {}: {}", f.invariant, f.witness);
        }
    }
    println!("-> {}", path.display());
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
}
