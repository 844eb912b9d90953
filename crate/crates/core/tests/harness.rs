use bisim_core::harness::{run_suite, ExperimentConfig, SuiteName};
use bisim_core::Error;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).expect("valid config")
}

#[test]
fn reports_are_deterministic() {
    let cfg = config("suite = \"compression_sweep\"\nenvironment = \"random\"\nn_states = 6\nseeds = [0, 3]\n");
    let a = run_suite(&cfg).unwrap();
    let b = run_suite(&cfg).unwrap();
    assert_eq!(a.report_json(), b.report_json());
    assert_eq!(a.files, b.files);
}

#[test]
fn baseline_rows_carry_stable_field_names() {
    let cfg = config("suite = \"metric_baseline\"\nside = 3\n");
    let out = run_suite(&cfg).unwrap();
    let v: serde_json::Value = serde_json::from_str(&out.report_json()).unwrap();
    let row = &v["baseline"][0];
    for key in [
        "array_mean",
        "array_std",
        "frobenius",
        "spectral_radius",
        "condition_number",
        "eigen_entropy",
        "empirical_contraction",
    ] {
        assert!(row.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["constants"]["entropy_base"], "nats");
    assert!(out.report.passed);
}

#[test]
fn every_suite_runs_on_a_small_grid() {
    for suite in SuiteName::ALL {
        let extra = match suite {
            SuiteName::Scaling => "sides = [2, 3]\n",
            SuiteName::Adversarial => "[adversarial]\niterations = 3\npopulation = 6\n",
            _ => "",
        };
        let cfg = config(&format!("suite = \"{}\"\nside = 3\n{extra}", suite.as_str()));
        let out = run_suite(&cfg).unwrap();
        assert_eq!(out.report.suite, suite);
        assert!(out.report.passed, "{}: {:?}", suite.as_str(), out.report.checks);
        assert!(!out.report.checks.is_empty());
    }
}

#[test]
fn value_loss_rows_report_both_bounds() {
    let cfg = config("suite = \"compression_sweep\"\nside = 3\nepsilons = [0.5]\n");
    let out = run_suite(&cfg).unwrap();
    let row = serde_json::to_value(&out.report.rows[0]).unwrap();
    for key in ["value_loss", "bound_eps", "bound_diam"] {
        assert!(row.get(key).is_some(), "missing {key} in {row}");
    }
}

#[test]
fn invalid_configs_name_the_field() {
    for (text, field) in [
        ("suite = \"spectral\"\ntolerance = -1.0\n", "tolerance"),
        ("suite = \"spectral\"\nepsilons = []\n", "epsilons"),
        ("suite = \"transfer_test\"\nenvironment = \"random\"\n", "environment"),
    ] {
        match ExperimentConfig::from_toml(text) {
            Err(e @ Error::Config { .. }) => assert!(e.to_string().contains(field), "{e}"),
            other => panic!("expected config error for {field}, got {other:?}"),
        }
    }
    assert!(matches!(ExperimentConfig::from_toml("suite = \"nope\"\n"), Err(Error::Toml(_))));
}
