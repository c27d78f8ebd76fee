//! Flatness of the population log-likelihood around the truth: the gap grows
//! like θ⁴ with the scale held at 1 and like θ⁸ when σ² = 1 - θ².

use singular_em::quadrature::QuadratureSpec;
use singular_em::stats::{likelihood_surface_scan, log_grid, SurfaceMode};

fn main() -> singular_em::Result<()> {
    let grid = log_grid(0.05, 0.3, 12);
    let quad = QuadratureSpec::default();
    for mode in [SurfaceMode::LocationOnly, SurfaceMode::LocationScaleCoupled] {
        let scan = likelihood_surface_scan(mode, &grid, &quad)?;
        println!("{}", mode.name());
        for row in &scan.rows {
            println!("  θ={:.4}  gap {:.4e}", row.theta, row.gap);
        }
        if let Some(fit) = scan.fit {
            println!("  exponent {:.3}", fit.slope);
        }
    }
    Ok(())
}
