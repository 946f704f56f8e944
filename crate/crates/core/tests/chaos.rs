use walkcollide::chaos::{
    estimate_z_moments, second_moment_partial_sums, second_moment_series, second_moment_tail, simulate_z, ChaosEngine,
    GridSpec, NoiseField, WhiteNoiseGrid,
};
use walkcollide::environment::ContinuumAmplitude;
use walkcollide::harness::stats::covariance;
use walkcollide::kernels::rho_chain_norm_sq;
use walkcollide::stream::replica_stream;

#[test]
fn series_is_increasing_in_gamma() {
    assert_eq!(second_moment_series(0.0, 1e-15), 1.0);
    let values: Vec<f64> = [0.1, 0.5, 1.0, 2.0].iter().map(|&g| second_moment_series(g, 1e-15)).collect();
    assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
    let sums = second_moment_partial_sums(1.3, 1e-15);
    assert!(sums.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn tail_and_partial_sum_add_up() {
    let g: f64 = 0.9;
    let head: f64 = (0..=5).map(|n| g.powi(2 * n as i32) * rho_chain_norm_sq(n)).sum();
    let total = second_moment_series(g, 1e-16);
    assert!((head + second_moment_tail(g, 5) - total).abs() < 1e-13);
}

#[test]
fn monte_carlo_matches_exact_discrete_moments() {
    let a = ContinuumAmplitude::constant(0.8);
    let spec = GridSpec::new(16, 0.25, 4.0).unwrap();
    let z = estimate_z_moments(&a, spec, 4, 2, 4000, 5).unwrap();
    let first = &z.coarse_moments[0];
    assert!((first.mean - 1.0).abs() < 4.0 * first.stderr, "{first:?}");
    let second = &z.coarse_moments[1];
    assert!((second.mean - z.discrete_second[0]).abs() < 4.0 * second.stderr, "{second:?} vs {}", z.discrete_second[0]);
    let fine = &z.fine_moments[1];
    assert!((fine.mean - z.discrete_second[1]).abs() < 4.0 * fine.stderr);

    // Orders are uncorrelated.
    let t1: Vec<f64> = z.fine_terms.iter().map(|t| t[1]).collect();
    let t2: Vec<f64> = z.fine_terms.iter().map(|t| t[2]).collect();
    let (c, se) = covariance(&t1, &t2);
    assert!(c.abs() < 4.0 * se);
}

#[test]
fn extrapolated_discrete_moment_is_closer_to_series() {
    let gamma = 0.5 * 2f64.sqrt();
    let a = ContinuumAmplitude::constant(gamma);
    let spec = GridSpec::new(16, 0.25, 6.0).unwrap();
    let z = estimate_z_moments(&a, spec, 6, 2, 2, 1).unwrap();
    let [c, f, _] = z.discrete_second;
    let rho = z.refinement_ratio.expect("refinement ratio");
    let extrapolated = f + (f - c) / (rho - 1.0);
    let target = second_moment_series(gamma, 1e-15) - second_moment_tail(gamma, 6);
    assert!((extrapolated - target).abs() < (f - target).abs());
}

#[test]
fn engine_is_deterministic_per_seed() {
    let a = ContinuumAmplitude::constant(0.5);
    let grid = WhiteNoiseGrid { spec: GridSpec::new(8, 0.25, 2.0).unwrap(), seed: 12 };
    assert_eq!(simulate_z(&a, &grid, 3).unwrap(), simulate_z(&a, &grid, 3).unwrap());
}

#[test]
fn terms_sum_to_value() {
    let a = ContinuumAmplitude::new("ramp", 1.0, |t, x: f64| (1.0 - t) / (1.0 + x * x));
    let spec = GridSpec::new(8, 0.25, 2.0).unwrap();
    let engine = ChaosEngine::new(&a, spec, 4).unwrap();
    let noise = NoiseField::sample(spec, &mut replica_stream(4, 0)).unwrap();
    let z = engine.run(&noise).unwrap();
    assert_eq!(z.per_order.len(), 5);
    assert_eq!(z.per_order[0], 1.0);
    assert!((z.per_order.iter().sum::<f64>() - z.value).abs() < 1e-12);
}
