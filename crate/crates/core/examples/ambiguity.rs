//! Polyhedral ambiguity sets and worst-case expectations.

use dro_portfolio::ambiguity::{AmbiguitySpec, PolyhedralAmbiguitySet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p_hat = [0.25; 4];
    // Payoff of each scenario, e.g. log growth of a fixed portfolio.
    let q = [0.03, 0.01, -0.02, 0.005];

    println!("empirical expectation {:.5}", p_hat.iter().zip(&q).map(|(p, v)| p * v).sum::<f64>());
    for gamma in [0.0, 0.1, 0.5, 1.0] {
        let set = PolyhedralAmbiguitySet::from_gamma(&p_hat, gamma)?;
        let (value, p) = set.min_expectation(&q)?;
        println!("gamma = {gamma:<4} worst-case expectation {value:+.5} at p = {p:.3?}");
    }

    // A hand-written polyhedron: scenario 3 has probability at most 0.3 and
    // scenarios 1 and 2 together at least 0.5.
    let spec: AmbiguitySpec = serde_json::from_str(
        r#"{"A0": [], "d0": [], "A1": [[0, 0, 1, 0], [-1, -1, 0, 0]], "d1": [0.3, -0.5]}"#,
    )?;
    let set = spec.build(&p_hat)?;
    let (value, p) = set.min_expectation(&q)?;
    println!("explicit set: worst-case expectation {value:+.5} at p = {p:.3?}");
    for j in 0..4 {
        let (lo, hi) = set.coordinate_range(j)?;
        println!("  p_{j} ranges over [{lo:.3}, {hi:.3}]");
    }

    let empty = AmbiguitySpec::Explicit {
        a0: vec![vec![1.0, 0.0, 0.0, 0.0]],
        d0: vec![2.0],
        a1: vec![],
        d1: vec![],
    };
    println!("p_0 = 2 on the simplex: {}", empty.build(&p_hat).unwrap_err());
    Ok(())
}
