//! Fit the three mixture families to standard normal data and watch the
//! location shrink towards zero.

use singular_em::em::{initial_params, random_on_sphere, run_em, StopRule};
use singular_em::model::{sample_standard_normal, FitFamily};
use singular_em::rng::RngSpec;
use singular_em::stats::{location_error, scale_error};

fn main() -> singular_em::Result<()> {
    let (n, d) = (4096, 2);
    let data = sample_standard_normal(n, d, &RngSpec::new(42, 0))?;
    let theta0 = random_on_sphere(d, 0.5, &RngSpec::new(42, 1));

    for fit in [
        FitFamily::Isotropic,
        FitFamily::TiedDiagonal,
        FitFamily::FreeCovariance,
    ] {
        let init = initial_params(fit, &theta0, &data)?;
        let stop = StopRule::new(1e-8, 5000)?;
        let traj = run_em(&init, &data, &stop)?;
        let last = traj.final_params();
        println!(
            "{fit:>16}: {:>5} iterations ({:?}), location error {:.4}, scale error {:.4}",
            traj.iterations,
            traj.stopped_reason,
            location_error(last),
            scale_error(last)
        );
        // log-likelihood never decreases along an EM path
        let worst = traj
            .loglik
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        println!("{:>16}  smallest log-likelihood increment {worst:.3e}", "");
    }
    Ok(())
}
