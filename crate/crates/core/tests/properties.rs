use proptest::prelude::*;
use ssinv_core::models::{
    dbm_stationary_density, delayed_cost, delayed_sufficient, gbm_level_function, gbm_level_minimizer, jit_better,
    jit_cost, reflected_optimum, DbmParams, GbmParams,
};
use ssinv_core::quad::{integrate, QuadOptions};
use ssinv_core::solver::{evaluate_policy, expected_cycle, minimize_f, SolveOptions, StationaryDensity, Verdict};
use ssinv_core::Smooth;

fn dbm_params() -> impl Strategy<Value = DbmParams> {
    (0.3..3.0f64, 0.3..3.0f64, 0.2..5.0f64, 0.2..5.0f64, 0.2..5.0f64, 0.0..3.0f64).prop_map(
        |(mu, sigma, c_b, c_h, k1, k2)| DbmParams { mu, sigma, c_b, c_h, k1, k2, k5: None },
    )
}

fn gbm_params() -> impl Strategy<Value = GbmParams> {
    (0.2..2.0f64, 0.3..1.5f64, 0.2..3.0f64, 0.1..3.0f64, 0.1..3.0f64, 0.1..3.0f64, -2.5..-0.3f64).prop_map(
        |(mu, sigma, k1, k2, k3, k4, beta)| GbmParams { mu, sigma, k1, k2, k3, k4, beta, eta: 1.0 },
    )
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cost_is_cycle_cost_over_cycle_length(p in dbm_params(), y in -3.0..2.0f64, w in 0.05..4.0f64) {
        let ch = p.characteristics(false).unwrap();
        let costs = p.costs().unwrap();
        let z = y + w;
        let c = expected_cycle(&ch, &costs, y, z).unwrap();
        let e = evaluate_policy(&ch, &costs, y, z).unwrap();
        prop_assert!(close(e.cost, (c.holding + c.ordering) / c.length, 1e-12));
        prop_assert!(close(e.cost, p.policy_cost(y, z), 1e-10));
        prop_assert!(close(e.order_frequency * c.length, 1.0, 1e-12));
    }

    #[test]
    fn dbm_stationary_density_has_unit_mass(p in dbm_params(), y in -3.0..2.0f64, w in 0.05..4.0f64) {
        let z = y + w;
        let tail = 40.0 * p.sigma * p.sigma / p.mu;
        let mass = integrate(|x| dbm_stationary_density(&p, y, z, x), y, z, QuadOptions::default())
            + integrate(|x| dbm_stationary_density(&p, y, z, x), z, z + tail, QuadOptions::default());
        prop_assert!((mass - 1.0).abs() < 1e-8, "mass {}", mass);
    }

    #[test]
    fn gbm_stationary_density_has_unit_mass(p in gbm_params(), y in 0.2..1.5f64, r in 1.2..6.0f64) {
        let ch = p.characteristics().unwrap();
        let costs = p.costs().unwrap();
        let e = evaluate_policy(&ch, &costs, y, y * r).unwrap();
        let pi = StationaryDensity::new(&p.diffusion().unwrap(), &e);
        prop_assert!((pi.total_mass() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn closed_forms_satisfy_the_generator_equations(p in gbm_params(), x in 0.05..20.0f64) {
        let model = p.diffusion().unwrap();
        let ch = p.characteristics().unwrap();
        let costs = p.costs().unwrap();
        let (g1, g2) = (|v| ch.g0_prime(v), |v| ch.g0_second(v));
        let (z1, z2) = (|v| ch.zeta_prime(v), |v| ch.zeta_second(v));
        let ag = model.generator_apply(Smooth::Exact { df: &g1, d2f: &g2 }, x).unwrap();
        let az = model.generator_apply(Smooth::Exact { df: &z1, d2f: &z2 }, x).unwrap();
        prop_assert!(close(ag, -costs.c0(x), 1e-10));
        prop_assert!(close(az, -1.0, 1e-12));
    }

    #[test]
    fn just_in_time_predicate_matches_cost_order(p in dbm_params(), k5 in 0.0..8.0f64) {
        let p = DbmParams { k5: Some(k5), ..p };
        let (_, _, f) = reflected_optimum(&p);
        let (jit, better) = (jit_cost(&p).unwrap(), jit_better(&p).unwrap());
        prop_assume!((jit - f).abs() > 1e-9 * f);
        prop_assert_eq!(better, jit < f);
    }

    #[test]
    fn sufficient_condition_makes_delay_cheaper(p in dbm_params(), frac in 0.0..1.0f64, a in 0.05..0.95f64, w in 0.05..6.0f64) {
        let base = DbmParams { k5: Some(0.0), ..p };
        let bound = p.k2 + (2.0 * p.k1 * p.c_h / p.mu).sqrt();
        let p = DbmParams { k5: Some(frac * bound), ..base };
        prop_assert!(delayed_sufficient(&p).unwrap());
        let (y, z) = (a * w, w);
        prop_assert!(delayed_cost(&p, y, z).unwrap() < p.policy_cost(y, z));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dbm_optimum_straddles_threshold_below_zero(p in dbm_params()) {
        let r = minimize_f(&p.characteristics(false).unwrap(), &p.costs().unwrap(), &SolveOptions::default()).unwrap();
        prop_assert_eq!(r.verdict, Verdict::Minimizer);
        let t = p.threshold();
        prop_assert!(r.y_star < t && t < r.z_star, "{} {} {}", r.y_star, t, r.z_star);
        prop_assert!(r.y_star < 0.0);
    }

    #[test]
    fn gbm_optimum_lies_on_a_level_set(p in gbm_params()) {
        let r = minimize_f(&p.characteristics().unwrap(), &p.costs().unwrap(), &SolveOptions::default()).unwrap();
        prop_assert_eq!(r.verdict, Verdict::Minimizer);
        let (hy, hz) = (gbm_level_function(&p, r.y_star), gbm_level_function(&p, r.z_star));
        prop_assert!(close(hy, hz, 1e-6), "{} vs {}", hy, hz);
        let m = gbm_level_minimizer(&p).unwrap();
        prop_assert!(r.y_star < m && m < r.z_star);
    }

    #[test]
    fn reflected_solver_matches_closed_form(mu in 0.3..3.0f64, sigma in 0.3..2.0f64, c_h in 0.2..4.0f64, k1 in 0.2..4.0f64, k2 in 0.0..2.0f64) {
        let p = DbmParams { mu, sigma, c_b: 0.0, c_h, k1, k2, k5: None };
        let r = minimize_f(&p.characteristics(true).unwrap(), &p.costs().unwrap(), &SolveOptions::default()).unwrap();
        let (y, z, f) = reflected_optimum(&p);
        prop_assert!(r.boundary_case);
        prop_assert!((r.y_star - y).abs() < 1e-9);
        prop_assert!(close(r.z_star, z, 1e-6) && close(r.f_star, f, 1e-9));
    }
}
