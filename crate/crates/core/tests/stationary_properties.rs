use proptest::prelude::*;
use rbm_core::stationary::{
    alpha_y, perturbed_start, power_tail, sample_perturbation, PerturbationKind, PerturbationSpec, PowerSchedule, Sampler,
};

/// `Σ_{n<i≤N} i^{−s}` plus the integral tail `N^{1−s}/(s−1)` and the half-term correction.
fn slow_tail(s: f64, n: usize) -> f64 {
    let big = 2_000_000usize;
    let head: f64 = ((n + 1)..=big).map(|i| (i as f64).powf(-s)).sum();
    let nb = big as f64;
    head + nb.powf(1.0 - s) / (s - 1.0) - 0.5 * nb.powf(-s)
}

#[test]
fn power_tail_matches_direct_summation() {
    for s in [1.5, 2.0, 3.0, 4.5] {
        for n in [0, 1, 5, 100, 5000] {
            let (a, b) = (power_tail(s, n), slow_tail(s, n));
            assert!((a - b).abs() <= 1e-10 * b.max(1e-300), "s = {s}, n = {n}: {a} vs {b}");
        }
    }
    assert!((power_tail(2.0, 0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
}

fn any_perturbation() -> impl Strategy<Value = PerturbationSpec> {
    prop_oneof![
        prop::collection::vec(-3.0..3.0f64, 0..12).prop_map(|v| {
            PerturbationSpec::constant(v).with_schedule(PowerSchedule { c: 1.0, gamma: 0.05 })
        }),
        (0.1..3.0f64).prop_map(PerturbationSpec::exp_rates),
        prop::collection::vec(
            prop_oneof![
                (0.1..2.0f64).prop_map(|mean| Sampler::Exponential { mean }),
                (-2.0..0.0f64, 0.1..2.0f64).prop_map(|(lo, hi)| Sampler::Uniform { lo, hi }),
                (-2.0..2.0f64).prop_map(|value| Sampler::Constant { value }),
            ],
            1..8
        )
        .prop_map(PerturbationSpec::finite),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alpha_y_decreases_to_zero(p in any_perturbation()) {
        let mut prev = f64::INFINITY;
        for n in [0, 1, 2, 5, 10, 50, 1000] {
            let a = alpha_y(&p, n).unwrap();
            prop_assert!(a >= 0.0 && a <= prev);
            prev = a;
        }
        let far = 1_000_000usize;
        let tail = alpha_y(&p, far).unwrap();
        match p.kind {
            // The integral bound `n^{−β}/β` on a `1+β` power tail.
            PerturbationKind::ExpRates { beta_exp } => {
                prop_assert!(tail > 0.0 && tail <= (far as f64).powf(-beta_exp) / beta_exp);
            }
            _ => prop_assert_eq!(tail, 0.0),
        }
    }

    #[test]
    fn perturbed_starts_are_nonnegative(p in any_perturbation(), d in 1usize..20, seed in any::<u64>()) {
        let y = sample_perturbation(&p, d, seed).unwrap();
        let x_inf = vec![0.5; d];
        prop_assert!(perturbed_start(&x_inf, &y).iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn exp_rate_moment_constants_match_zeta_values() {
    let pi = std::f64::consts::PI;
    let (z2, z4) = (pi.powi(2) / 6.0, pi.powi(4) / 90.0);
    let p = PerturbationSpec::exp_rates(1.0);
    assert!((p.p1.unwrap() - (z4 + z2 * z2)).abs() < 1e-12);
    assert!((p.p2.unwrap() - (1.0 + z2)).abs() < 1e-12);
}
