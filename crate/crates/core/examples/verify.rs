//! Oracle checks: runs every verification suite, then compares the robust LP
//! with a brute-force grid search on one small instance.

use dro_portfolio::oracle::{approximation_instance, run_verify, Suite};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let report = run_verify(&Suite::ALL, seed, None)?;
    for s in &report.suites {
        println!("{:<14} {:<4} {:>6} checks", s.suite.name(), if s.passed { "ok" } else { "FAIL" }, s.checks);
        for f in &s.failures {
            println!("    {}: {}", f.invariant, f.witness);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budgets = [1e-3, 1e-5];
    let (exact, lp_values, lipschitz) = approximation_instance(&mut rng, 2, 8, 0.3, &budgets)?;
    println!(
        "\nexact grid optimum {:.8} at {:.4?} (step {:.1e}, {} evaluations)",
        exact.value, exact.weights, exact.step, exact.evaluations
    );
    for (eps, value) in budgets.iter().zip(&lp_values) {
        println!(
            "robust LP value    {value:.8} with budget {eps:.0e} (allowed excess {:.2e})",
            eps + 2.0 * exact.step * lipschitz
        );
    }
    std::process::exit(if report.passed { 0 } else { 1 });
}
