//! Property tests of the EM updates: symmetry, the scale/location identity,
//! monotone likelihood, equivariance, M-step optimality and determinism.

use proptest::prelude::*;
use singular_em::em::{
    em_step_isotropic, em_step_tied_diagonal, initial_params, q_function, run_em, StopRule,
};
use singular_em::model::{
    sample_standard_normal, DataSet, FitFamily, IsoParams, Mixture, TiedDiagParams,
};
use singular_em::rng::RngSpec;

fn data(seed: u64, n: usize, d: usize) -> DataSet {
    sample_standard_normal(n, d, &RngSpec::new(seed, 0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn density_is_symmetric(theta in prop::collection::vec(-2.0f64..2.0, 1..4), s2 in 0.2f64..3.0, seed in 0u64..1000) {
        let d = theta.len();
        let p = IsoParams::new(theta, s2).unwrap();
        let x = data(seed, 1, d);
        let neg: Vec<f64> = x.row(0).iter().map(|v| -v).collect();
        let (a, b) = (p.log_density(x.row(0)).unwrap(), p.log_density(&neg).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn step_is_odd_and_conserves_scale(theta in prop::collection::vec(-0.6f64..0.6, 1..4), seed in 0u64..1000) {
        let d = theta.len();
        let x = data(seed, 300, d);
        let p = IsoParams::new(theta.clone(), 1.0).unwrap();
        let m = IsoParams::new(theta.iter().map(|t| -t).collect(), 1.0).unwrap();
        let a = em_step_isotropic(&p, &x).unwrap().params;
        let b = em_step_isotropic(&m, &x).unwrap().params;
        for (u, v) in a.theta().iter().zip(b.theta()) {
            prop_assert!((u + v).abs() <= 1e-14);
        }
        let t2: f64 = a.theta().iter().map(|t| t * t).sum();
        prop_assert!((a.sigma2() + t2 / d as f64 - x.z_nd()).abs() <= 1e-12);
    }

    #[test]
    fn tied_step_conserves_each_coordinate(theta in prop::collection::vec(-0.5f64..0.5, 1..4), seed in 0u64..1000) {
        let d = theta.len();
        let x = data(seed, 300, d);
        let p = TiedDiagParams::new(theta, vec![1.0; d]).unwrap();
        let next = em_step_tied_diagonal(&p, &x).unwrap().params;
        let m2 = x.coordinate_second_moments();
        for k in 0..d {
            prop_assert!((next.diag_vars()[k] + next.theta()[k].powi(2) - m2[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn rotation_equivariance(angle in 0.0f64..std::f64::consts::TAU, t in prop::collection::vec(-0.5f64..0.5, 2), seed in 0u64..1000) {
        let (c, s) = (angle.cos(), angle.sin());
        let rot = |v: &[f64]| vec![c * v[0] - s * v[1], s * v[0] + c * v[1]];
        let x = data(seed, 200, 2);
        let rotated: Vec<Vec<f64>> = x.rows().map(rot).collect();
        let y = DataSet::from_points(&rotated).unwrap();
        let a = em_step_isotropic(&IsoParams::new(t.clone(), 1.0).unwrap(), &x).unwrap().params;
        let b = em_step_isotropic(&IsoParams::new(rot(&t), 1.0).unwrap(), &y).unwrap().params;
        let ra = rot(a.theta());
        prop_assert!((ra[0] - b.theta()[0]).abs() <= 1e-12 && (ra[1] - b.theta()[1]).abs() <= 1e-12);
        prop_assert!((a.sigma2() - b.sigma2()).abs() <= 1e-12);
    }

    #[test]
    fn m_step_maximizes_q(theta in prop::collection::vec(-0.5f64..0.5, 1..3), dt in prop::collection::vec(-1e-3f64..1e-3, 2), ds in -1e-3f64..1e-3, seed in 0u64..1000) {
        let d = theta.len();
        let x = data(seed, 400, d);
        // the update takes the variance to be slaved to θ
        let slaved = x.z_nd() - theta.iter().map(|t| t * t).sum::<f64>() / d as f64;
        let cur = IsoParams::new(theta, slaved).unwrap();
        let next = em_step_isotropic(&cur, &x).unwrap().params;
        let cand_theta: Vec<f64> = next.theta().iter().zip(&dt).map(|(a, b)| a + b).collect();
        let cand = IsoParams::new(cand_theta, next.sigma2() + ds).unwrap();
        prop_assert!(q_function(&cand, &cur, &x).unwrap() <= q_function(&next, &cur, &x).unwrap() + 1e-15);
    }

    #[test]
    fn log_likelihood_never_decreases(family in 0usize..3, d in 1usize..3, seed in 0u64..1000, r in 0.1f64..0.8) {
        let fam = [FitFamily::Isotropic, FitFamily::TiedDiagonal, FitFamily::FreeCovariance][family];
        let x = data(seed, 250, d);
        let mut theta0 = vec![0.0; d];
        theta0[0] = r;
        let init = initial_params(fam, &theta0, &x).unwrap();
        let traj = run_em(&init, &x, &StopRule::new(1e-10, 60).unwrap()).unwrap();
        for w in traj.loglik.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), stream in any::<u64>(), n in 1usize..50, d in 1usize..4) {
        let a = sample_standard_normal(n, d, &RngSpec::new(seed, stream)).unwrap();
        let b = sample_standard_normal(n, d, &RngSpec::new(seed, stream)).unwrap();
        prop_assert!(a.samples().iter().zip(b.samples()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}
