//! Population-like EM iterates in one and two dimensions next to the
//! surrogate recursions θ/(1+θ⁶) and θ/(1+θ²/2).

use singular_em::harness::{run_population_decay, DecayRow, ExperimentKind, ExperimentSpec};

fn main() -> singular_em::Result<()> {
    let mut spec = ExperimentSpec::new(ExperimentKind::PopulationDecay);
    spec.steps = Some(10_000);
    spec.theta0 = Some(0.5);
    // the large-sample limit; drop this line to use a sampled Z_{n,d}
    spec.z_nd = Some(1.0);

    let rows = run_population_decay(&spec)?;
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10}",
        "t", "d=1", "θ/(1+θ⁶)", "d=2", "θ/(1+θ²/2)"
    );
    let (d1, d2): (Vec<&DecayRow>, Vec<&DecayRow>) = rows.iter().partition(|r| r.d == 1);
    for t in [0, 1, 10, 100, 1000, 10_000] {
        println!(
            "{t:>6} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
            d1[t].theta_norm, d1[t].surrogate, d2[t].theta_norm, d2[t].surrogate
        );
    }
    Ok(())
}
