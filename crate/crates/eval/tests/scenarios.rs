//! The authored scenario corpus replays against the bundled engine.

use std::time::{Duration, Instant};

use tutorbot_core::Engine;
use tutorbot_eval::scenario::{parse_scenarios, to_toml};
use tutorbot_eval::{bundled_dir, load, run_all, run_scenario, ScenarioError};

#[test]
fn bundled_corpus_passes_quickly_and_covers_every_behaviour() {
    let engine = Engine::bundled();
    let scenarios = load(&bundled_dir()).unwrap();
    assert!(scenarios.len() >= 130, "{} scenarios", scenarios.len());
    let started = Instant::now();
    let report = run_all(&scenarios, &engine);
    let elapsed = started.elapsed();
    assert!(report.all_passed(), "{}", report.summary());
    assert!(elapsed < Duration::from_secs(10), "{elapsed:?}");
    assert_eq!(report.coverage.gaps(), Vec::<String>::new());
}

const ONE: &str = r#"
[[scenario]]
id = "one"

[[scenario.turn]]
user = "Final examination question 3 in Chapter 2"
expect = "final_request"
slots = { topic = "t02", exam_mode = "final_examination", question_number = "3" }
"#;

#[test]
fn mismatches_are_reported_with_the_turn() {
    let engine = Engine::bundled();
    let ok = parse_scenarios(ONE, "one.toml".as_ref()).unwrap();
    assert!(run_scenario(&ok[0], &engine).passed);

    let wrong_action = ONE.replace("final_request", "ask_level");
    let r = run_scenario(&parse_scenarios(&wrong_action, "x".as_ref()).unwrap()[0], &engine);
    let f = r.failure.unwrap();
    assert_eq!((f.turn, f.what.as_str(), f.actual.as_str()), (0, "action", "final_request"));

    let wrong_slot = ONE.replace("topic = \"t02\"", "topic = \"t03\"");
    let r = run_scenario(&parse_scenarios(&wrong_slot, "x".as_ref()).unwrap()[0], &engine);
    assert_eq!(r.failure.unwrap().what, "slots");

    let extra_slot = ONE.replace(", question_number = \"3\"", "");
    let r = run_scenario(&parse_scenarios(&extra_slot, "x".as_ref()).unwrap()[0], &engine);
    assert!(!r.passed, "an unlisted change is a mismatch");
}

#[test]
fn invalid_files_are_rejected() {
    let bad_action = ONE.replace("final_request", "final_answer");
    assert!(matches!(parse_scenarios(&bad_action, "x".as_ref()), Err(ScenarioError::Invalid { .. })));
    let bad_slot = ONE.replace("topic =", "chapter =");
    assert!(matches!(parse_scenarios(&bad_slot, "x".as_ref()), Err(ScenarioError::Invalid { .. })));
    assert!(matches!(parse_scenarios("[[scenario]]\nid = 3", "x".as_ref()), Err(ScenarioError::Parse { .. })));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.toml"), ONE).unwrap();
    std::fs::write(dir.path().join("b.toml"), ONE).unwrap();
    assert!(matches!(load(dir.path()), Err(ScenarioError::Duplicate(id)) if id == "one"));
}

#[test]
fn scenarios_survive_serialization() {
    let scenarios = load(&bundled_dir()).unwrap();
    let back = parse_scenarios(&to_toml(&scenarios), "x".as_ref()).unwrap();
    assert_eq!(back, scenarios);
}
