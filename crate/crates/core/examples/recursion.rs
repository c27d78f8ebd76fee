//! The localization recursions, exactly and in floating point, and the epoch
//! schedule they induce.

use singular_em::theory::{epoch_schedule, localization_recursion, Ratio, RecursionKind};

fn main() -> singular_em::Result<()> {
    for kind in RecursionKind::ALL {
        let trace = localization_recursion(kind, 1.0 / 16.0, 200)?;
        println!(
            "{:>20}: a_200 = {:.15}  fixed point {}",
            kind.name(),
            trace.values[200],
            kind.fixed_point()
        );
    }
    let one = RecursionKind::UnivariateA.step_exact(Ratio::new(1, 16));
    println!("one exact step from 1/16: {one}");

    for n in [1_000, 100_000, 10_000_000_000] {
        let s = epoch_schedule(n, 0.1, 0.125)?;
        println!(
            "n={n}: ω={:.3e}, epochs {:?}{}",
            s.omega,
            s.t_ell,
            if s.degenerate {
                " (degenerate: ω too small)"
            } else {
                ""
            }
        );
    }
    Ok(())
}
