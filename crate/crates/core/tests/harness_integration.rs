use rbm_core::harness::{derivative_validation_runs, run_experiment, ExperimentConfig};
use rbm_core::Error;

fn with_workers(text: &str, workers: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(text).unwrap();
    cfg.workers = Some(workers);
    cfg
}

#[test]
fn perturbation_rows_do_not_depend_on_worker_count() {
    let text = r#"{"experiment": "perturbation", "model": {"builder": "symmetric_atlas", "d": 6},
        "start": {"policy": "stationary_perturbed", "perturbation": {"kind": "exp_rates", "beta_exp": 1.0}},
        "t_grid": [0.5, 1, 2], "h": 0.01, "n_reps": 20, "seed": 21}"#;
    let base = run_experiment(&with_workers(text, 1)).unwrap().rows;
    assert!(!base.is_empty());
    for w in [2, 4] {
        assert_eq!(run_experiment(&with_workers(text, w)).unwrap().rows, base, "workers = {w}");
    }
}

#[test]
fn derivative_runs_do_not_depend_on_worker_count() {
    let text = r#"{"experiment": "derivative_validation", "model": {"builder": "symmetric_atlas", "d": 4},
        "h": 0.001, "n_reps": 8, "seed": 22, "derivative": {"i0": 2, "n_walk": 300}}"#;
    let (out, base) = derivative_validation_runs(&with_workers(text, 1)).unwrap();
    assert_eq!(base.len(), 8);
    for w in [2, 4] {
        let (o, runs) = derivative_validation_runs(&with_workers(text, w)).unwrap();
        assert_eq!(runs, base, "workers = {w}");
        assert_eq!(o.report, out.report);
    }
}

#[test]
fn config_round_trips_through_json() {
    let text = r#"{"experiment": "decay", "model": {"builder": "asymmetric_atlas", "d": 4, "p": 0.75},
        "start": {"policy": "ones"}, "burn_in": {"t_burn": 3}, "t_grid": [1, 2], "n_reps": 3,
        "zero_arm": true, "d_prime": 2, "seed": 9}"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
}

fn config_error(text: &str) -> (String, String) {
    match ExperimentConfig::from_json(text) {
        Err(Error::Config { path, message }) => (path, message),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn nested_config_errors_name_the_offending_field() {
    let cases = [
        (
            r#"{"experiment": "perturbation", "model": {"builder": "symmetric_atlas", "d": 3},
                "start": {"policy": "stationary_perturbed", "perturbation": {"kind": "exp_rates", "beta_exp": "x"}},
                "t_grid": [1]}"#,
            "start",
            "\"x\"",
        ),
        (
            r#"{"experiment": "decay", "model": {"builder": "asymmetric_atlas", "d": 3, "p": "high"}, "t_grid": [1]}"#,
            "model",
            "\"high\"",
        ),
        (
            r#"{"experiment": "derivative_validation", "model": {"builder": "symmetric_atlas", "d": 3},
                "derivative": {"eps": "small"}}"#,
            "derivative.eps",
            "\"small\"",
        ),
        (r#"{"experiment": "decay", "model": {"builder": "symmetric_atlas", "d": 3}, "t_grid": [2, 1]}"#, "t_grid[1]", ""),
        (r#"{"experiment": "sideways", "model": {"builder": "symmetric_atlas", "d": 3}}"#, "experiment", "sideways"),
    ];
    // Tagged variants are buffered before they are parsed, so their paths stop at the enclosing field.
    for (text, want, mentions) in cases {
        let (path, message) = config_error(text);
        assert_eq!(path, want);
        assert!(message.contains(mentions), "`{path}`: {message}");
    }
}
