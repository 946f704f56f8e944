use proptest::prelude::*;
use walkcollide::environment::{DisorderFunction, EnvironmentField};
use walkcollide::ustat::{ustat_moment_suite, u_statistic, Averaging, FnIntegrand, UStatPlan, UStatSpec};

fn bump(order: usize, width: f64) -> FnIntegrand {
    FnIntegrand::new(order, 3.0, move |t, x| {
        let r: f64 = x.iter().map(|v| v * v).sum();
        (-r / width).exp() * (1.0 + t.iter().sum::<f64>())
    })
}

fn wave(order: usize) -> FnIntegrand {
    FnIntegrand::new(order, 3.0, |t, x| (x.iter().sum::<f64>() * 2.0).cos() * t[0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn linear_in_the_integrand(order in 1usize..=2, seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (f, g) = (bump(order, 1.0), wave(order));
        let h = FnIntegrand::combine(a, &f, b, &g);
        let amp = DisorderFunction::constant(0.7);
        let field = EnvironmentField::new(seed);
        let eval = |i: &FnIntegrand| {
            let spec = UStatSpec { integrand: i, horizon: 6, amplitude: &amp, field, averaging: Averaging::Quadrature { nodes: 2 } };
            u_statistic(&spec).unwrap()
        };
        let (sh, sf, sg) = (eval(&h), eval(&f), eval(&g));
        prop_assert!((sh - (a * sf + b * sg)).abs() <= 1e-10 * (1.0 + sh.abs()));
    }

    #[test]
    fn homogeneous_in_the_amplitude(seed in any::<u64>(), c in -2.0f64..2.0) {
        let g = bump(2, 0.5).symmetric();
        let plan = UStatPlan::compile(&g, 6, Averaging::Quadrature { nodes: 2 }).unwrap();
        let field = EnvironmentField::new(seed);
        let base = plan.evaluate(&DisorderFunction::constant(1.0), &field);
        let scaled = plan.evaluate(&DisorderFunction::constant(c), &field);
        prop_assert!((scaled - c * c * base).abs() <= 1e-10 * (1.0 + base.abs()));
    }
}

#[test]
fn time_ordered_restriction_matches_masked_full_integrand() {
    let ordered = FnIntegrand::new(2, 3.0, |t, x| if t[0] < t[1] { (-(x[0] * x[0] + x[1] * x[1])).exp() } else { 0.0 });
    let flagged = ordered.clone().time_ordered();
    let a = DisorderFunction::constant(1.0);
    let field = EnvironmentField::new(8);
    let avg = Averaging::Quadrature { nodes: 3 };
    let p1 = UStatPlan::compile(&ordered, 5, avg).unwrap();
    let p2 = UStatPlan::compile(&flagged, 5, avg).unwrap();
    assert!((p1.evaluate(&a, &field) - p2.evaluate(&a, &field)).abs() < 1e-12);
}

#[test]
fn moments_match_exact_variance_and_orders_are_orthogonal() {
    let g1 = bump(1, 1.0);
    let g2 = bump(2, 1.0).symmetric();
    let avg = Averaging::Quadrature { nodes: 2 };
    let p1 = UStatPlan::compile(&g1, 5, avg).unwrap();
    let p2 = UStatPlan::compile(&g2, 5, avg).unwrap();
    let a = DisorderFunction::constant(1.0);
    let suite = ustat_moment_suite(&[&p1, &p2], &a, 40_000, 17).unwrap();
    for p in &suite.plans {
        assert!(p.mean.mean.abs() < 4.0 * p.mean.stderr, "{p:?}");
        assert!((p.sample_variance - p.exact_variance).abs() < 4.0 * p.variance_stderr, "{p:?}");
    }
    let c = &suite.cross[0];
    assert!(c.covariance.abs() < 4.0 * c.stderr, "{c:?}");
}
