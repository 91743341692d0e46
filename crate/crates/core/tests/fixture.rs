//! The bundled price fixture is exactly what the default generator produces.

use dro_portfolio::data::{load_prices, write_prices_csv, CsvLayout};
use dro_portfolio::synthetic::TwoRegimeMarket;

#[test]
fn bundled_fixture_matches_generator() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/two_regime.csv");
    let generated = TwoRegimeMarket::default().generate().unwrap();
    let on_disk = std::fs::read_to_string(path).unwrap();
    assert_eq!(on_disk, write_prices_csv(&generated), "regenerate with `cargo run --example synthetic_market`");
    let loaded = load_prices(path, &CsvLayout::default()).unwrap();
    assert_eq!(loaded.tickers, generated.tickers);
    assert_eq!(loaded.dates, generated.dates);
    assert_eq!(loaded.n_periods(), 1000);
}
