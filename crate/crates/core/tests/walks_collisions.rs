use proptest::prelude::*;
use statrs::function::factorial::binomial;
use walkcollide::collisions::{detect_collisions, total_mass_identity_check, TestFunction};
use walkcollide::stream::replica_stream;
use walkcollide::walks::{
    enumerate_paths, first_return_time, local_time_zero, return_time_pmf, sample_walk, WalkEnsemble, WalkPath,
};

fn ensemble(k: usize, n: usize, seed: u64) -> WalkEnsemble {
    WalkEnsemble::sample(k, n, &mut replica_stream(seed, 0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_walks_have_unit_steps(n in 0usize..300, seed in any::<u64>()) {
        let w = sample_walk(n, &mut replica_stream(seed, 1));
        prop_assert_eq!(w.horizon(), n);
        prop_assert_eq!(w.at(0), 0);
        prop_assert!(w.positions().windows(2).all(|p| (p[1] - p[0]).abs() == 1));
    }

    #[test]
    fn multiplicity_sandwich(k in 2usize..6, n in 1usize..80, seed in any::<u64>()) {
        let c = detect_collisions(&ensemble(k, n, seed));
        let (pi, pi_prime) = (c.with_multiplicity.mass(), c.distinct.mass());
        let pairs = (k * (k - 1) / 2) as u64;
        prop_assert!(pi_prime <= pi && pi <= pairs * pi_prime);
        prop_assert_eq!(c.excess_mass(), pi - pi_prime);
    }

    #[test]
    fn two_walk_mass_identity(n in 1usize..200, seed in any::<u64>()) {
        let (mass, zeros) = total_mass_identity_check(&ensemble(2, n, seed)).unwrap();
        prop_assert_eq!(mass, zeros);
    }

    #[test]
    fn integration_is_linear(k in 2usize..5, n in 1usize..60, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let c = detect_collisions(&ensemble(k, n, seed));
        let f = TestFunction::new("f", 1.0, false, |t, x| (t * x).sin());
        let g = TestFunction::gaussian_bump(1.0, 0.5);
        let (f2, g2) = (f.clone(), g.clone());
        let h = TestFunction::new("h", a.abs() + b.abs(), false, move |t, x| a * f2.eval(t, x) + b * g2.eval(t, x));
        let m = &c.with_multiplicity;
        let lhs = m.integrate(&h);
        let rhs = a * m.integrate(&f) + b * m.integrate(&g);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        prop_assert_eq!(m.integrate(&TestFunction::constant(1.0)), m.mass() as f64);
    }

    #[test]
    fn measures_ignore_walk_order(k in 2usize..6, n in 1usize..60, seed in any::<u64>()) {
        let e = ensemble(k, n, seed);
        let mut reversed: Vec<WalkPath> = e.walks().to_vec();
        reversed.reverse();
        let r = WalkEnsemble::new(reversed).unwrap();
        prop_assert_eq!(detect_collisions(&e), detect_collisions(&r));
    }

    #[test]
    fn local_time_counts_returns(n in 1usize..200, seed in any::<u64>()) {
        let w = sample_walk(n, &mut replica_stream(seed, 2));
        let lt = local_time_zero(&w, n);
        match first_return_time(&w) {
            None => prop_assert_eq!(lt, 0),
            Some(t) => {
                prop_assert!(lt >= 1);
                prop_assert_eq!(local_time_zero(&w, t - 1), 0);
            }
        }
    }
}

#[test]
fn return_time_pmf_plus_survival_is_one() {
    // P(T_1 > 2K) = P(S_{2K} = 0) for the simple random walk.
    for kmax in [1usize, 5, 10, 40] {
        let head: f64 = return_time_pmf(kmax).iter().sum();
        let survival = binomial(2 * kmax as u64, kmax as u64) / 4f64.powi(kmax as i32);
        assert!((head + survival - 1.0).abs() < 1e-13, "K = {kmax}");
    }
}

#[test]
fn enumeration_is_a_probability_measure() {
    for n in [0usize, 1, 6, 12] {
        let paths = enumerate_paths(n).unwrap();
        assert_eq!(paths.len(), 1 << n);
        let total: f64 = paths.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }
}

#[test]
fn ensembles_need_matching_horizons() {
    let a = WalkPath::from_steps(&[1, 1]).unwrap();
    let b = WalkPath::from_steps(&[1]).unwrap();
    assert!(WalkEnsemble::new(vec![a.clone(), b]).is_err());
    assert!(WalkEnsemble::new(vec![a]).is_err());
}
