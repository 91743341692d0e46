//! Generates the bundled two-regime price fixture.
//!
//! ```text
//! cargo run --example synthetic_market -- crates/core/data/two_regime.csv
//! ```
//!
//! Without an argument the CSV is printed to stdout.

use dro_portfolio::data::write_prices_csv;
use dro_portfolio::synthetic::TwoRegimeMarket;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let market = TwoRegimeMarket::default();
    let prices = market.generate()?;
    let csv = write_prices_csv(&prices);
    match std::env::args().nth(1) {
        Some(path) => {
            std::fs::write(&path, csv)?;
            eprintln!(
                "wrote {} periods of {} assets (seed {}) to {path}",
                prices.n_periods(),
                prices.n_assets(),
                market.seed
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}
