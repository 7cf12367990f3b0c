use hysim_core::bargaining::{disagreement_points, nash_objective, solve_bargaining, BargainingOptions};
use hysim_core::benchmarks::{coordination_benchmark, noncooperation_benchmark};
use hysim_core::externality::{LinearParams, PowerParams};
use hysim_core::infovalue::{simulate_info_value, CountMode, Distribution, InterferenceModel, Utility};
use hysim_core::market::{
    check_me_uniqueness, derived_shares, iterate_dynamics, solve_equilibrium, theorem_branch, thresholds,
    EquilibriumCase, SolveOptions,
};
use hysim_core::pricing::{
    best_response_db, best_response_sl, deviation_gain, payoffs_mscg, prices_from_shares, solve_mscg, MscgOptions,
};
use hysim_core::{validate_model, ExternalityModel, MarketShares, PriceVector};
use proptest::prelude::*;

fn power() -> impl Strategy<Value = ExternalityModel> {
    (0.5..2.5f64, 0.0..1.0f64, 0.1..=1.0f64, 0.0..1.0f64, 0.0..1.5f64, 0.1..=1.0f64, 0.2..4.0f64).prop_map(
        |(alpha1, b1, gamma1, alpha2, extra, gamma2, margin)| {
            let p = PowerParams { alpha1, beta1: b1 * alpha1, gamma1, alpha2, beta2: alpha2 + extra, gamma2 };
            ExternalityModel::power(p, alpha1 + p.beta2 + margin).unwrap()
        },
    )
}

fn linear() -> impl Strategy<Value = ExternalityModel> {
    (0.5..2.5f64, 0.0..1.0f64, 0.0..1.5f64, 0.2..4.0f64).prop_map(|(alpha1, b1, beta2, margin)| {
        ExternalityModel::linear(LinearParams { alpha1, beta1: b1 * alpha1, beta2 }, alpha1 + beta2 + margin).unwrap()
    })
}

fn constant() -> impl Strategy<Value = ExternalityModel> {
    (0.2..2.0f64, 0.0..1.0f64, 0.2..4.0f64)
        .prop_map(|(f0, g0, margin)| ExternalityModel::constant(f0, g0, f0 + g0 + margin).unwrap())
}

fn any_model() -> impl Strategy<Value = ExternalityModel> {
    prop_oneof![power(), linear(), constant()]
}

fn shares() -> impl Strategy<Value = MarketShares> {
    (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(l, t)| MarketShares::clamped(l, t * (1.0 - l)))
}

fn prices(model: &ExternalityModel) -> impl Strategy<Value = PriceVector> {
    let r_l = model.r_l();
    (0.0..r_l, 0.0..2.0f64).prop_map(|(p_l, p_a)| PriceVector::new(p_l, p_a).unwrap())
}

fn on_simplex(s: MarketShares) -> bool {
    s.eta_l >= 0.0 && s.eta_a >= 0.0 && s.eta_l + s.eta_a <= 1.0
}

/// Count types on a midpoint grid by direct utility comparison.
fn type_oracle(model: &ExternalityModel, p: PriceVector, s0: MarketShares, n: usize) -> MarketShares {
    let s_b = model.basic_utility(s0.eta_l);
    let s_a = model.advanced_utility(s0.eta_l, s0.eta_a);
    let (mut l, mut a) = (0usize, 0usize);
    for i in 0..n {
        let t = (i as f64 + 0.5) / n as f64;
        let (ub, ua, ul) = (t * s_b, t * s_a - p.p_a, t * model.r_l() - p.p_l);
        if ub >= ua && ub >= ul {
            continue;
        }
        if ua >= ul {
            a += 1;
        } else {
            l += 1;
        }
    }
    MarketShares::clamped(l as f64 / n as f64, a as f64 / n as f64)
}

fn model_prices_shares() -> impl Strategy<Value = (ExternalityModel, PriceVector, MarketShares)> {
    any_model().prop_flat_map(|m| {
        let p = prices(&m);
        (Just(m), p, shares())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derived_shares_match_type_counting((m, p, s0) in model_prices_shares()) {
        let d = derived_shares(&m, p, s0).unwrap();
        prop_assert!(on_simplex(d));
        let n = 200_000;
        prop_assert!(d.distance(&type_oracle(&m, p, s0, n)) <= 2.0 / n as f64, "{:?}", d);
    }

    #[test]
    fn equilibrium_is_a_fixed_point((m, p, _s0) in model_prices_shares()) {
        let opts = SolveOptions::default();
        let eq = solve_equilibrium(&m, p, opts).unwrap();
        prop_assert!(on_simplex(eq.shares));
        let again = derived_shares(&m, p, eq.shares).unwrap();
        prop_assert!(again.distance(&eq.shares) <= opts.tol, "{:?} -> {:?}", eq.shares, again);
    }

    #[test]
    fn dynamics_agree_with_solver_when_unique((m, p, _s0) in model_prices_shares()) {
        prop_assume!(check_me_uniqueness(&m, 41).forall_pass);
        let opts = SolveOptions::default();
        let eq = solve_equilibrium(&m, p, opts).unwrap();
        for corner in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)] {
            let start = MarketShares::new(corner.0, corner.1).unwrap();
            let trace = iterate_dynamics(&m, p, start, opts.tol, opts.max_iter, opts.damping).unwrap();
            prop_assert!(trace.converged);
            prop_assert!(trace.endpoint().distance(&eq.shares) <= 10.0 * opts.tol + 1e-9,
                "{:?} from {:?} vs {:?}", trace.endpoint(), corner, eq.shares);
        }
    }

    #[test]
    fn zero_prices_send_everyone_to_leasing(m in any_model(), s0 in shares()) {
        let d = derived_shares(&m, PriceVector::new(0.0, 0.0).unwrap(), s0).unwrap();
        prop_assert_eq!(d, MarketShares::new(1.0, 0.0).unwrap());
    }

    #[test]
    fn leasing_thresholds_rise_with_the_leasing_price((m, p, s0) in model_prices_shares(), bump in 0.0..1.0f64) {
        let lo = thresholds(&m, p, s0).unwrap();
        let hi = thresholds(&m, PriceVector::new(p.p_l + bump, p.p_a).unwrap(), s0).unwrap();
        prop_assert!(hi.lb >= lo.lb && hi.la >= lo.la);
    }

    #[test]
    fn price_map_round_trips(m in any_model(), l in 0.01..0.97f64, t in 0.02..0.98f64) {
        let s = MarketShares::new(l, t * (0.98 - l)).unwrap();
        let p = prices_from_shares(&m, s);
        prop_assume!(theorem_branch(&m, p) == EquilibriumCase::B);
        let eq = solve_equilibrium(&m, p, SolveOptions::default()).unwrap();
        prop_assert!(eq.shares.distance(&s) <= 1e-6, "{:?} vs {:?}", eq.shares, s);
    }

    #[test]
    fn model_evaluation_is_pure_and_information_is_nonnegative(m in any_model(), s in shares()) {
        prop_assert_eq!(m.f(1.0 - s.eta_l).to_bits(), m.f(1.0 - s.eta_l).to_bits());
        prop_assert!(m.advanced_utility(s.eta_l, s.eta_a) >= m.basic_utility(s.eta_l));
        prop_assert!(validate_model(&m, 101, 1e-9).passed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn licensee_response_ignores_its_share(m in any_model(), eta_a in 0.0..1.0f64, d1 in 0.0..0.99f64, d2 in 0.0..0.99f64) {
        let a = best_response_sl(&m, eta_a, d1, 1e-10);
        let b = best_response_sl(&m, eta_a, d2, 1e-10);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn best_responses_beat_a_fine_grid(m in any_model(), other in 0.0..1.0f64, delta in 0.0..0.99f64) {
        let n = 10_000;
        let eta_a = other;
        let sl = best_response_sl(&m, eta_a, delta, 1e-10);
        let top = 1.0 - eta_a;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let l = top * i as f64 / n as f64;
            best = best.max(payoffs_mscg(&m, MarketShares::clamped(l, eta_a), delta).u_sl);
        }
        prop_assert!(payoffs_mscg(&m, MarketShares::clamped(sl, eta_a), delta).u_sl >= best - 1e-9);

        let eta_l = other;
        let db = best_response_db(&m, eta_l, delta, 1e-10);
        let top = 1.0 - eta_l;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let a = top * i as f64 / n as f64;
            best = best.max(payoffs_mscg(&m, MarketShares::clamped(eta_l, a), delta).u_db);
        }
        prop_assert!(payoffs_mscg(&m, MarketShares::clamped(eta_l, db), delta).u_db >= best - 1e-9);
    }

    #[test]
    fn equilibrium_survives_unilateral_deviations(m in any_model(), delta in 0.0..0.99f64) {
        let eq = solve_mscg(&m, delta, MscgOptions::default()).unwrap();
        prop_assume!(eq.converged(1e-8));
        let gain = deviation_gain(&m, &eq, 1000);
        prop_assert!(gain.u_sl <= 1e-6 && gain.u_db <= 1e-6, "{:?}", gain);
        // steps may jitter by the best-response precision once the paths have met
        let slack = MscgOptions::default().tol;
        for w in eq.lower_path.windows(2) {
            prop_assert!(w[1].eta_a >= w[0].eta_a - slack && w[1].eta_l <= w[0].eta_l + slack);
        }
        for w in eq.upper_path.windows(2) {
            prop_assert!(w[1].eta_a <= w[0].eta_a + slack && w[1].eta_l >= w[0].eta_l - slack);
        }
    }

    #[test]
    fn disagreement_ignores_leasing_quality(m in any_model(), extra in 0.1..3.0f64) {
        let other = m.with_leasing_quality(m.r_l() + extra).unwrap();
        prop_assert_eq!(disagreement_points(&m, 1e-10), disagreement_points(&other, 1e-10));
    }

    #[test]
    fn coordination_dominates(m in any_model(), delta in 0.0..0.99f64) {
        let coord = coordination_benchmark(&m, 1e-10);
        let eq = solve_mscg(&m, delta, MscgOptions::default()).unwrap();
        prop_assert!(coord.network_profit >= eq.payoffs.total() - 1e-6);
        prop_assert!(coord.network_profit >= noncooperation_benchmark(&m, 1e-10).network_profit - 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn bargaining_beats_an_audit_grid(m in any_model()) {
        let opts = BargainingOptions::default();
        let out = solve_bargaining(&m, &opts).unwrap();
        prop_assert!((0.0..=1.0).contains(&out.delta_star));
        let star = nash_objective(&m, out.delta_star, &opts).unwrap();
        for i in 0..=200 {
            let d = i as f64 / 200.0;
            prop_assert!(star >= nash_objective(&m, d, &opts).unwrap() - 1e-6, "delta {d}");
        }
        if out.feasible {
            prop_assert!(out.payoffs.u_sl >= out.disagreement.u_sl - 1e-9);
            prop_assert!(out.payoffs.u_db >= out.disagreement.u_db - 1e-9);
        }
    }

    #[test]
    fn info_value_is_seeded_and_nonnegative(seed in any::<u64>(), k in 1usize..6, l in 0.0..0.5f64, a in 0.0..0.5f64) {
        let im = InterferenceModel {
            users: 30,
            channels: k,
            tv: Distribution::Exponential { mean: 1.0 },
            cross: Distribution::Uniform { lo: 0.0, hi: 0.1 },
            outside: Distribution::LogNormal { mu: -2.0, sigma: 0.5 },
            power: 10.0,
            noise: 0.1,
            utility: Utility::Power { rho: 0.5 },
            samples: 5000,
            seed,
            counts: CountMode::Rounded,
        };
        let s = MarketShares::clamped(l, a);
        let e = simulate_info_value(&im, s).unwrap();
        prop_assert_eq!(e, simulate_info_value(&im, s).unwrap());
        prop_assert!(e.g_est >= -(e.ci_a + e.ci_b));
        prop_assert!(e.s_a >= e.s_b - (e.ci_a + e.ci_b));
    }
}
