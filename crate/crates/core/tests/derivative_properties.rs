use rand::Rng;
use rbm_core::coupling::{crossing_log, hit_counter, CrossingLog};
use rbm_core::derivative::{derivative_evolve, derivative_trace, rw_distribution_mc, sites_within_3_sigma, Environment};
use rbm_core::model::build_symmetric_atlas;
use rbm_core::seeds::{rng_from, sub_seed};
use rbm_core::skorokhod::{simulate, BrownianDriver};

#[test]
fn recursion_conserves_mass_on_simulated_paths() {
    for d in [1, 2, 5, 8] {
        let spec = build_symmetric_atlas(d).unwrap();
        let r = spec.reflection();
        for seed in 0..10 {
            let path = simulate(&spec, &vec![0.3; d], 3.0, &mut BrownianDriver::new(seed, d + 1, 1e-3)).unwrap();
            for i0 in 1..=d {
                let log = crossing_log(&path, i0).unwrap();
                let mut prev_w0 = 0.0;
                derivative_trace(&log, i0, &r, path.horizon(), |s| {
                    assert!((s.total_mass() - 1.0).abs() <= 1e-12);
                    assert!(s.s.iter().all(|&v| (0.0..=1.0).contains(&v)));
                    let w0 = s.w0.unwrap();
                    assert!(w0 >= prev_w0 && w0 <= 1.0);
                    prev_w0 = w0;
                })
                .unwrap();
            }
        }
    }
}

/// Random environment of `n` face crossings over `d` faces on `[0, 1]`.
fn random_log<R: Rng>(d: usize, n: usize, rng: &mut R) -> CrossingLog {
    let hits = (0..n).map(|k| ((k + 1) as f64 / (n + 1) as f64, k + 1, rng.random_range(1..=d)));
    CrossingLog::from_hits(d, 1, hits).unwrap()
}

#[test]
fn walk_law_equals_recursion_on_random_environments() {
    let mut rng = rng_from(2024);
    let n_samples = 20_000;
    let (mut agree, mut total) = (0, 0);
    for env in 0..50 {
        let d = rng.random_range(1..=8);
        let n_events = rng.random_range(0..=1000);
        let mut log = random_log(d, n_events, &mut rng);
        let i0 = rng.random_range(1..=d);
        log.i0 = i0;
        let r = build_symmetric_atlas(d).unwrap().reflection();
        let exact = derivative_evolve(&log, i0, &r, 1.0).unwrap().site_masses().unwrap();
        let emp = rw_distribution_mc(&log, i0, 1.0, n_samples, sub_seed(5, env)).unwrap();
        assert!((emp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        agree += sites_within_3_sigma(&emp, &exact, n_samples);
        total += exact.len();
    }
    assert!(agree as f64 >= 0.99 * total as f64, "{agree} of {total} sites within 3 sigma");
}

#[test]
fn confined_walks_jump_at_least_once_per_hit_cycle() {
    let d = 5;
    let spec = build_symmetric_atlas(d).unwrap();
    let horizon = 20.0;
    let mut checked = 0;
    for seed in 0..20 {
        let path = simulate(&spec, &[0.5; 5], horizon, &mut BrownianDriver::new(seed, d + 1, 1e-3)).unwrap();
        for i0 in 1..d {
            let log = crossing_log(&path, i0).unwrap();
            let env = Environment::new(&log, horizon);
            let mut rng = rng_from(sub_seed(seed, i0 as u64));
            for m in (i0 + 1)..=d {
                let n_cycles = hit_counter(&path, m).unwrap().n_of_t(horizon);
                for _ in 0..200 {
                    let w = env.sample(i0, &mut rng);
                    if w.min_position >= 1 && w.max_position < m {
                        assert!(w.jumps >= n_cycles, "m = {m}: {} jumps, {n_cycles} cycles", w.jumps);
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 0);
}
