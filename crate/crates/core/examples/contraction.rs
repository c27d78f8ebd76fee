//! Contraction ratios ‖M(θ)‖/‖θ‖ against their predicted intervals.

use singular_em::harness::{run_contraction_scan, ExperimentKind, ExperimentSpec};
use singular_em::population::{corrected_contraction_bounds, PopulationOperator};
use singular_em::quadrature::QuadratureSpec;

fn main() -> singular_em::Result<()> {
    let spec = ExperimentSpec::new(ExperimentKind::ContractionScan);
    let scan = run_contraction_scan(&spec)?;
    for note in &scan.notes {
        println!("note: {note}");
    }
    for r in &scan.rows {
        println!(
            "{:>9} d={} |θ|={:.4}  ratio-1 = {:+.4e}  interval-1 = [{:+.3e}, {:+.3e}] {}",
            r.operator.name(),
            r.d,
            r.theta_norm,
            r.ratio - 1.0,
            r.lower - 1.0,
            r.upper - 1.0,
            if r.inside { "ok" } else { "OUTSIDE" }
        );
    }

    // the corrected deficit divided by θ⁶ tends to 2/3, not 1/2
    let op = PopulationOperator::corrected(1)?;
    let quad = QuadratureSpec::default();
    for theta in [0.02, 0.05, 0.1, 0.15] {
        let def = op.contraction_deficit(theta, &quad)?;
        let (lo, _) = corrected_contraction_bounds(theta);
        println!(
            "θ={theta}: -deficit/θ⁶ = {:.4}, lower bound allows {:.4}",
            -def / theta.powi(6),
            (1.0 - lo) / theta.powi(6)
        );
    }
    Ok(())
}
