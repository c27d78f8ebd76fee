//! The d-dimensional operator reduces to a one-dimensional integral along θ;
//! compare it with brute-force Monte Carlo.

use singular_em::em::random_on_sphere;
use singular_em::population::{monte_carlo_operator, PopulationOperator};
use singular_em::quadrature::QuadratureSpec;
use singular_em::rng::RngSpec;

fn main() -> singular_em::Result<()> {
    let quad = QuadratureSpec::default();
    for (case, d) in [(0, 2), (1, 4)] {
        let op = PopulationOperator::pseudo(1.001, d)?;
        let theta = random_on_sphere(d, 0.6, &RngSpec::new(3, case));
        let exact = op.eval(&theta, &quad)?;
        let mc = monte_carlo_operator(&op, &theta, 1_000_000, &RngSpec::new(4, case))?;
        println!(
            "d={d}: quadrature {:.6}, Monte Carlo {:.6} (se {:.1e}), z = {:.2}",
            exact.norm(),
            mc.norm(),
            mc.num_error,
            (mc.norm() - exact.norm()) / mc.num_error
        );
    }
    Ok(())
}
