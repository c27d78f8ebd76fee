//! How far the sample operator strays from its population counterpart on a
//! ball of radius r: linear in r for the pseudo operator, cubic for the
//! corrected one.

use singular_em::harness::perturbation_fit;
use singular_em::population::{perturbation_scan, OperatorKind, PerturbationSpec};
use singular_em::rng::RngSpec;
use singular_em::stats::log_grid;

fn main() -> singular_em::Result<()> {
    let n = 1000;
    for (kind, hi) in [
        (OperatorKind::Pseudo, 0.3),
        (OperatorKind::Corrected, 2.0 * (n as f64).powf(-1.0 / 16.0)),
    ] {
        let spec =
            PerturbationSpec::new(kind, log_grid(0.02, hi, 12), n, 1, 20, RngSpec::new(5, 0));
        let table = perturbation_scan(&spec)?;
        println!("{} ({} skipped)", kind.name(), table.skipped);
        for row in &table.rows {
            println!(
                "  r={:.4}  sup dev {:.3e} ± {:.1e}  ({} trials)",
                row.r, row.mean_sup_dev, row.stderr, row.trials
            );
        }
        if let Some(fit) = perturbation_fit(&table)? {
            println!("  exponent {:.3}", fit.slope);
        }
    }
    Ok(())
}
