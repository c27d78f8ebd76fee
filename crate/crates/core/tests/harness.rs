//! Experiment runners: population decay claims, trial-level determinism and
//! JSON round trips.

use singular_em::harness::{
    run_experiment, run_population_decay, run_rate_experiment, run_rate_trial, ExperimentKind,
    ExperimentOutput, ExperimentSpec,
};

fn decay(z_nd: Option<f64>, theta0: f64, steps: usize) -> (Vec<(f64, f64)>, Vec<f64>) {
    let mut spec = ExperimentSpec::new(ExperimentKind::PopulationDecay);
    spec.steps = Some(steps);
    spec.theta0 = Some(theta0);
    spec.z_nd = z_nd;
    spec.master_seed = 1;
    let rows = run_population_decay(&spec).unwrap();
    let d1 = rows
        .iter()
        .filter(|r| r.d == 1)
        .map(|r| (r.theta_norm, r.surrogate))
        .collect();
    let d2 = rows
        .iter()
        .filter(|r| r.d == 2)
        .map(|r| r.theta_norm)
        .collect();
    (d1, d2)
}

#[test]
fn decay_tracks_surrogate_in_the_limit() {
    let (d1, d2) = decay(Some(1.0), 0.5, 10_000);
    for (t, (theta, sur)) in d1.iter().enumerate() {
        let ratio = theta / sur;
        assert!((0.5..=2.0).contains(&ratio), "t={t}: ratio {ratio}");
    }
    for t in 10..=10_000 {
        assert!(d1[t].0 > d2[t], "t={t}");
    }
}

#[test]
fn decay_with_sampled_denominator() {
    // with a sampled Z_{n,d} the claims hold until |Z - 1| takes over
    let (d1, d2) = decay(None, 0.5, 500);
    for t in 10..=500 {
        let ratio = d1[t].0 / d1[t].1;
        assert!((0.5..=2.0).contains(&ratio) && d1[t].0 > d2[t], "t={t}");
    }
}

#[test]
fn decay_from_zero_stays_zero() {
    let (d1, d2) = decay(None, 0.0, 20);
    assert!(d1.iter().all(|(a, b)| *a == 0.0 && *b == 0.0));
    assert!(d2.iter().all(|a| *a == 0.0));
}

#[test]
fn trial_alone_equals_trial_in_sweep() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Rates);
    spec.dims = Some(vec![1, 2]);
    spec.ns = Some(vec![300, 600]);
    spec.trials = Some(4);
    spec.master_seed = 99;
    let table = run_rate_experiment(&spec).unwrap();
    assert_eq!(table.trials.len(), 16);
    for t in &table.trials {
        let alone = run_rate_trial(&spec, t.d, t.n, t.trial);
        assert_eq!(alone.loc_error.to_bits(), t.loc_error.to_bits());
        assert_eq!(alone.scale_error.to_bits(), t.scale_error.to_bits());
        assert_eq!(alone.iters, t.iters);
        assert!(t.loc_error >= 0.0 && t.scale_error >= 0.0);
    }
    // ordered by (d, n, trial)
    let keys: Vec<_> = table.trials.iter().map(|t| (t.d, t.n, t.trial)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn outputs_round_trip_through_json() {
    for kind in [
        ExperimentKind::Recursion,
        ExperimentKind::HellingerExponent,
        ExperimentKind::LikelihoodSurface,
    ] {
        let out = run_experiment(&ExperimentSpec::new(kind)).unwrap();
        let back: ExperimentOutput = serde_json::from_str(&out.to_json().unwrap()).unwrap();
        assert_eq!(back, out);
    }
}

#[test]
fn spec_round_trips_through_json() {
    let mut spec = ExperimentSpec::new(ExperimentKind::PerturbationScan);
    spec.radii = Some(vec![0.1, 0.2]);
    spec.trials = Some(3);
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(ExperimentSpec::from_json(&text).unwrap(), spec);
}
