use abnodal_core::grid::GridLevel;
use abnodal_core::scenario::{builtin, builtin_scenarios, run_scenario, Scenario, ScenarioError, Stage};
use num_complex::Complex64;
use proptest::prelude::*;

fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    let traces = prop_oneof![
        Just("symmetric".to_string()),
        (0u32..3, 1e-4..0.05f64).prop_map(|(k, e)| format!("perturbed:{k}:{e:?}")),
        any::<u64>().prop_map(|s| format!("random:{s}")),
    ];
    let potentials = prop_oneof![Just("const:0".to_string()), (0.0..5.0f64).prop_map(|c| format!("const:{c:?}"))];
    let stages = proptest::sample::subsequence(Stage::ALL.to_vec(), 1..=Stage::ALL.len());
    let pole = proptest::option::of((-0.9..0.9f64, -0.4..0.4f64).prop_map(|(x, y)| Complex64::new(x, y)));
    let tolerances = proptest::collection::btree_map("[a-z]{1,6}\\.[a-z_]{1,8}", 1e-9..1.0f64, 0..3);
    (
        "[a-z][a-z0-9-]{0,15}",
        "[A-Za-z0-9,.]([A-Za-z0-9 ,.]{0,30}[A-Za-z0-9,.])?",
        traces,
        potentials,
        stages,
        pole,
        any::<u64>(),
        10.0..1e7f64,
        tolerances,
    )
        .prop_map(|(id, description, trace, potential, pipeline, pole, seed, kappa_max, tolerances)| Scenario {
            id,
            description,
            trace,
            potential,
            pipeline,
            pole,
            seed,
            kappa_max,
            tolerances,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn text_form_round_trips(s in scenario_strategy()) {
        let back = Scenario::parse(&s.to_text()).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.fingerprint(GridLevel::Coarse), s.fingerprint(GridLevel::Coarse));
    }
}

#[test]
fn builtins_round_trip_and_have_distinct_fingerprints() {
    let all = builtin_scenarios();
    assert!(all.len() >= 10);
    let mut prints = std::collections::BTreeSet::new();
    for s in &all {
        assert_eq!(&Scenario::parse(&s.to_text()).unwrap(), s);
        assert!(prints.insert(s.fingerprint(GridLevel::Default)), "duplicate fingerprint for {}", s.id);
        assert_ne!(s.fingerprint(GridLevel::Default), s.fingerprint(GridLevel::Coarse));
    }
}

#[test]
fn parse_errors_are_specific() {
    let good = builtin("symmetric-triple").unwrap().to_text();
    let missing = good.lines().filter(|l| !l.starts_with("trace")).collect::<Vec<_>>().join("\n");
    assert!(matches!(Scenario::parse(&missing), Err(ScenarioError::MissingField("trace"))));
    let bad_stage = good.replace("pipeline = newton", "pipeline = warp, newton");
    assert!(matches!(Scenario::parse(&bad_stage), Err(ScenarioError::UnknownStage(_))));
    assert!(matches!(Scenario::parse("no equals sign here"), Err(ScenarioError::Syntax { line: 1, .. })));
    let bad_seed = format!("{good}\nseed = 1.5");
    assert!(matches!(Scenario::parse(&bad_seed), Err(ScenarioError::BadValue { .. })));
    assert!(matches!(builtin("nope"), Err(ScenarioError::UnknownBuiltin(_))));
}

#[test]
fn runs_are_deterministic_and_write_artifacts() {
    let s = builtin("symmetric-triple").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = run_scenario(&s, GridLevel::Coarse, Some(dir.path())).unwrap();
    let second = run_scenario(&s, GridLevel::Coarse, None).unwrap();
    assert!(first.passed, "{}", first.summary());
    assert_eq!(first.measurements(), second.measurements());
    assert_eq!(first.fingerprint, second.fingerprint);

    let out = dir.path().join(&s.id);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["fingerprint"], first.fingerprint.as_str());
    assert_eq!(report["passed"], true);
    let saved = Scenario::parse(&std::fs::read_to_string(out.join("scenario.txt")).unwrap()).unwrap();
    assert_eq!(saved, s);
    for a in &first.artifacts {
        assert!(out.join(a).is_file(), "missing artifact {a}");
    }
}
