//! One rebalance on the bundled fixture.
//!
//! Uses six months of returns ending at period 800 as equally likely
//! scenarios (a calm stretch in which one asset trends up), solves
//! the robust LP for several contamination levels and checks each optimum
//! against the independently recomputed worst case.

use dro_portfolio::ambiguity::PolyhedralAmbiguitySet;
use dro_portfolio::data::{load_prices, CsvLayout};
use dro_portfolio::oracle::duality_gap;
use dro_portfolio::partition::ErrorBudget;
use dro_portfolio::robust_lp::{assemble, extract_weights, family_for, solve, TradingConstraintSet};
use dro_portfolio::utility::SeparableUtility;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/two_regime.csv");
    let returns = load_prices(path, &CsvLayout::default())?
        .compute_returns()?
        .append_risk_free(0.02, 252)?;
    let end = 800;
    let scen = returns.build_scenario_set(end - 126..end)?;
    let n = scen.n_assets();

    let mut costs = vec![0.001; n];
    costs[n - 1] = 0.0;
    let con = TradingConstraintSet::new(1.5, None, 0.003, costs.clone(), true)?;
    let u = SeparableUtility::log();
    let fam = family_for(&u, &scen, &con, ErrorBudget::new(1e-5, 1e-5)?)?;
    let (mx, mc) = fam.counts();
    println!("{n} assets, {} scenarios, {mx} x-planes, {mc} c-planes", scen.n_scenarios());

    let k_prev = vec![0.0; n];
    for gamma in [0.0, 0.02, 0.05, 0.1] {
        let amb = PolyhedralAmbiguitySet::from_gamma(&scen.probabilities, gamma)?;
        let model = assemble(&scen, &fam, &amb, &con, &k_prev)?;
        let sol = solve(&model);
        let (k, diag) = extract_weights(&sol, &model)?;
        let gap = duality_gap(&sol, &k_prev, &scen, &amb, &costs, &u)?;
        println!(
            "gamma {gamma:<5} objective {:+.6e}  gap to exact worst case {gap:.2e}  invested {:.3}  turnover cost {:.5}  {} rows, {:.1} ms",
            sol.objective,
            diag.invested_weight,
            diag.turnover_cost,
            model.rows.len(),
            sol.solve_time.as_secs_f64() * 1e3
        );
        let held: Vec<String> = scen
            .tickers
            .iter()
            .zip(&k)
            .filter(|(_, w)| w.abs() > 1e-9)
            .map(|(t, w)| format!("{t} {w:+.3}"))
            .collect();
        println!("    {}", if held.is_empty() { "all cash".to_string() } else { held.join(", ") });
    }
    Ok(())
}
