//! Supporting-hyperplane families for the three utility families.
//!
//! Builds the tangent partitions for a budget, certifies the approximation
//! error on a grid, and shows what happens when one interior plane is dropped.
//!
//! ```text
//! cargo run --release --example partition
//! ```

use dro_portfolio::partition::{build_family, certify_error, partition_report, removal_experiment, Axis, ErrorBudget};
use dro_portfolio::utility::SeparableUtility;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x_box = (-0.2, 0.2);
    let c_box = (0.0, 0.02);

    println!("log utility on x in {x_box:?}, c in {c_box:?}");
    println!("{:>10} {:>10} {:>5} {:>5} {:>12} {:>12}", "eps_x", "eps_c", "M_x", "M_c", "sup_x", "sup_c");
    for (ex, ec) in [(1e-3, 1e-3), (1e-4, 1e-4), (1e-5, 1e-5), (1.5e-5, 5e-6), (8e-6, 1.2e-5)] {
        let report = partition_report(&SeparableUtility::log(), x_box, c_box, ErrorBudget::new(ex, ec)?, 400)?;
        println!(
            "{ex:>10.1e} {ec:>10.1e} {:>5} {:>5} {:>12.4e} {:>12.4e}",
            report.m_x, report.m_c, report.sup_x, report.sup_c
        );
        for row in &report.removal_table {
            println!(
                "{:>24} M_x={:<4} M_c={:<4} sup_x={:.3e} sup_c={:.3e} violation={}",
                row.label, row.m_x, row.m_c, row.sup_x, row.sup_c, row.error_violation
            );
        }
    }

    // The same budget needs different numbers of planes for other curvatures.
    let budget = ErrorBudget::new(1e-5, 1e-5)?;
    println!();
    for (name, u) in [
        ("log", SeparableUtility::log()),
        ("power(0.5)", SeparableUtility::power(0.5)?),
        ("crra(3)", SeparableUtility::crra(3.0)?),
    ] {
        let fam = build_family(&u, x_box, c_box, budget)?;
        let cert = certify_error(&u, &fam, 300);
        let (mx, mc) = fam.counts();
        let mid = mx / 2;
        let dropped = removal_experiment(&u, &fam, mid, Axis::X)?;
        println!(
            "{name:>10}: M_x={mx:<4} M_c={mc:<3} joint error {:.3e} (sum of axes {:.3e}); without x-plane {mid}: {dropped:.3e}",
            cert.sup_joint,
            cert.sup_x + cert.sup_c
        );
    }
    Ok(())
}
