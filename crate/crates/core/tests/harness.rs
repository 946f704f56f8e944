use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use walkcollide::collisions::TestFunction;
use walkcollide::harness::experiments::{
    convergence_study, duality_experiment, local_time_law_check, ConvergenceConfig, DualityConfig,
};
use walkcollide::harness::stats::{ks_two_sample, mc_estimate};
use walkcollide::polymer::duality_pair;
use walkcollide::stream::replica_stream;
use walkcollide::walks::WalkEnsemble;

#[test]
fn exponential_sampler_reproduces_bit_exactly() {
    let f = TestFunction::gaussian_bump(1.0, 1.0);
    let sampler = |rng: &mut walkcollide::stream::Stream| {
        duality_pair(&WalkEnsemble::sample(2, 64, rng).unwrap(), &f).unwrap().exp_pi
    };
    let a = mc_estimate(500, 99, sampler).unwrap();
    let b = mc_estimate(500, 99, sampler).unwrap();
    assert_eq!(a, b);
    assert!(a.mean.to_bits() == b.mean.to_bits() && a.stderr.to_bits() == b.stderr.to_bits());
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let cfg = ConvergenceConfig { ladder: vec![16, 64], replicates: 300, ..Default::default() };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| serde_json::to_string(&convergence_study(&cfg, 5).unwrap()).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn ks_power_against_shift() {
    let mut rng = replica_stream(31, 0);
    let xs: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ys: Vec<f64> = (0..10_000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + 1.0
        })
        .collect();
    assert!(ks_two_sample(&xs, &ys).unwrap().p_value < 1e-6);
    let us: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
    let vs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
    assert!(ks_two_sample(&us, &vs).unwrap().p_value > 1e-3);
}

#[test]
fn local_time_law_holds_at_moderate_size() {
    let r = local_time_law_check(128, 4000, 3).unwrap();
    assert!(r.all_passed(), "{}", r.to_text());
}

#[test]
fn unit_constant_f_samples_are_local_times() {
    // With f ≡ 1 and k = 2, Π_N(f)/√N is the collision count over √N.
    let cfg = ConvergenceConfig { k: 2, alpha: 1.0, sigma: 1e9, ladder: vec![64], replicates: 50 };
    let r = convergence_study(&cfg, 4).unwrap();
    let mean = r.results["rows"][0]["pi_f"]["mean"].as_f64().unwrap();
    let counts = (mean * 8.0 * 50.0).round();
    assert!((mean * 8.0 * 50.0 - counts).abs() < 1e-6);
}

#[test]
fn exact_bridge_holds_at_small_horizons() {
    let cfg = DualityConfig {
        ladder: vec![4, 16],
        k: 2,
        alpha: 0.5,
        walk_replicates: 20_000,
        env_replicates: 20_000,
        ..Default::default()
    };
    let r = duality_experiment(&cfg, 21).unwrap();
    assert!(r.verdicts.iter().any(|v| v.rule == "exact-bridge" && v.passed), "{}", r.to_text());
}
