//! Sample-EM error against n, with fitted log-log slopes.
//!
//! A desk-sized version of the rate experiment: d = 1 should land near
//! n^{-1/8} and d = 2 near n^{-1/4}. Pass a trial count to change it:
//! `cargo run --release --example rates -- 50`.

use singular_em::harness::{run_rate_experiment, ExperimentKind, ExperimentSpec};

fn main() -> singular_em::Result<()> {
    let trials = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20);
    let mut spec = ExperimentSpec::new(ExperimentKind::Rates);
    spec.dims = Some(vec![1, 2]);
    spec.ns = Some((10..=14).map(|k| 1 << k).collect());
    spec.trials = Some(trials);
    spec.master_seed = 2024;

    let table = run_rate_experiment(&spec)?;
    for a in &table.aggregates {
        println!(
            "d={} n={:>6}  mean |θ̂| {:.4} ± {:.4}   mean |σ̂²-1| {:.5}",
            a.d, a.n, a.mean_loc_error, a.stderr, a.mean_scale_error
        );
    }
    for f in &table.fits {
        println!(
            "d={}: location slope {:+.3}, scale slope {:+.3}",
            f.d, f.location.slope, f.scale.slope
        );
    }
    Ok(())
}
