//! Sliding-window backtest on the bundled fixture.
//!
//! Runs the default protocol (126 training days, quarterly rebalancing,
//! leverage 1.5) at several cost rates and contamination levels, next to an
//! equal-weight buy-and-hold benchmark. Pass a directory to also write the
//! account paths as CSV.

use dro_portfolio::backtest::{benchmark_buy_and_hold, run_many, BacktestConfig, Holding};
use dro_portfolio::data::{load_prices, CsvLayout};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/two_regime.csv");
    let returns = load_prices(path, &CsvLayout::default())?.compute_returns()?;
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);

    let base = BacktestConfig::default();
    let mut configs = Vec::new();
    for cost_rate in [0.0, 0.001, 0.005] {
        configs.push(BacktestConfig { cost_rate, ..base.clone() });
    }
    for gamma in [0.05, 0.1] {
        configs.push(BacktestConfig { gamma, ..base.clone() });
    }

    println!(
        "{:<22} {:>9} {:>8} {:>7} {:>9} {:>9} {:>9}",
        "strategy", "cum.ret", "max.dd", "sharpe", "turnover", "invested", "max.w"
    );
    for (config, result) in configs.iter().zip(run_many(&configs, &returns)) {
        let (path, rep) = result?;
        let label = format!("c={} gamma={}", config.cost_rate, config.gamma);
        println!(
            "{label:<22} {:>9.4} {:>8.4} {:>7} {:>9.3} {:>9.3} {:>9.3}",
            rep.cumulative_return,
            rep.max_drawdown,
            rep.annualized_sharpe_ratio.map_or("n/a".into(), |s| format!("{s:.3}")),
            rep.average_turnover_rate,
            rep.average_invested_weight,
            rep.average_max_asset_weight
        );
        if let Some(dir) = &out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("c{}_g{}.csv", config.cost_rate, config.gamma)), path.to_csv())?;
        }
    }

    let (_, bench) = benchmark_buy_and_hold(&returns, Holding::EqualWeight, 0.0, base.train_window, 100.0, 252)?;
    println!(
        "{:<22} {:>9.4} {:>8.4} {:>7}",
        "equal weight",
        bench.cumulative_return,
        bench.max_drawdown,
        bench.annualized_sharpe_ratio.map_or("n/a".into(), |s| format!("{s:.3}"))
    );
    Ok(())
}
