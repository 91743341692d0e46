//! From a price CSV to the scenario set of one rebalance.
//!
//! Reads prices with a gap, fills it by linear interpolation, turns prices into
//! simple returns, appends a risk-free asset and cuts a training window.

use dro_portfolio::data::{parse_prices, CsvLayout, ScenarioSet};

const PRICES: &str = "\
day;AAA;BBB;CCC;DDD
2024-01-02;100;50;20;10
2024-01-03;101;;20.4;10.1
2024-01-04;99.5;51;20.2;10.2
2024-01-05;102;51.5;;10.1
2024-01-08;103;52;20.6;10.3
2024-01-09;104.5;51.2;20.9;
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let layout = CsvLayout {
        delimiter: b';',
        date_column: "day".into(),
    };
    let prices = parse_prices(PRICES, &layout)?;
    println!("{} tickers, {} dates, {} missing cells", prices.n_assets(), prices.n_periods(), prices.missing_count());
    let (filled, dropped) = prices.interpolate_missing();
    // DDD has no last price, so it cannot be interpolated.
    println!("dropped: {dropped:?}");

    let returns = filled.compute_returns()?.append_risk_free(0.04, 252)?;
    for (ticker, row) in returns.tickers.iter().zip(&returns.returns) {
        println!("{ticker:>10}: {row:+.5?}");
    }

    let window = returns.build_scenario_set(1..4)?;
    println!("window lower bounds {:+.4?}, upper bounds {:+.4?}", window.lower, window.upper);
    let json = window.to_json();
    let back = ScenarioSet::from_json(&json)?;
    assert_eq!(back, window);
    println!("scenario set as JSON:\n{json}");

    let bad = "date,AAA\n2024-01-02,100\n2024-01-01,101\n";
    println!("out-of-order dates: {}", parse_prices(bad, &CsvLayout::default()).unwrap_err());
    Ok(())
}
