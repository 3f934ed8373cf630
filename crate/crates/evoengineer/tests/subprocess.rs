mod common;

use std::time::{Duration, Instant};

use evoengineer::subprocess::SubprocessEvaluator;
use evoengineer_core::evaluator::{synthetic_evaluate, EvalConfig, EvalError, Evaluator, Stage, StageTimeouts, SyntheticRules};
use evoengineer_core::{KernelCategory, Task, TestSpec};

fn task() -> Task {
    Task {
        id: "softmax".into(),
        category: KernelCategory::ActivationPooling,
        description: "row softmax".into(),
        reference_source: String::new(),
        initial_code: "x".into(),
        test_spec: TestSpec::default(),
        baseline_mean_ms: 100.0,
    }
}

fn expected(code: &str) -> Result<evoengineer_core::EvaluationResult, EvalError> {
    synthetic_evaluate(code, &SyntheticRules::default(), task().test_spec.n_cases, &EvalConfig::default())
}

#[test]
fn echo_eval_through_a_pipe_matches_in_process() {
    let mut ev = SubprocessEvaluator::new(common::echo_command(), None);
    let cfg = EvalConfig::default();
    for code in ["VALID CORRECT", "VALID CORRECT FAST FAST", "VALID", "broken", "  ", "VALID CORRECT\n\"quoted\" é"] {
        assert_eq!(ev.evaluate(code, &task(), &cfg), expected(code), "{code:?}");
    }
}

#[test]
fn crashes_are_faults_and_the_child_restarts() {
    let script = format!(
        "while read -r l; do case \"$l\" in *CRASH*) exit 1;; esac; printf '%s\\n' \"$l\" | {}; done",
        common::echo_command()
    );
    let mut ev = SubprocessEvaluator::new(script, None);
    let cfg = EvalConfig::default();
    assert_eq!(ev.evaluate("VALID CORRECT", &task(), &cfg), expected("VALID CORRECT"));
    assert!(matches!(ev.evaluate("VALID CRASH", &task(), &cfg), Err(EvalError::Fault(_))));
    assert_eq!(ev.evaluate("VALID CORRECT FAST", &task(), &cfg), expected("VALID CORRECT FAST"));
}

#[test]
fn a_command_that_cannot_serve_is_a_fault() {
    let mut ev = SubprocessEvaluator::new("exit 3", None);
    assert!(matches!(
        ev.evaluate("VALID", &task(), &EvalConfig::default()),
        Err(EvalError::Fault(_))
    ));
}

#[test]
fn garbage_replies_are_protocol_errors() {
    let mut ev = SubprocessEvaluator::new("while read -r l; do echo nonsense; done", None);
    assert!(matches!(
        ev.evaluate("VALID", &task(), &EvalConfig::default()),
        Err(EvalError::Protocol(_))
    ));
}

#[test]
fn silent_children_time_out_and_are_killed() {
    let mut ev = SubprocessEvaluator::new("sleep 30", None);
    ev.grace = Duration::ZERO;
    let cfg = EvalConfig {
        per_stage_timeout_s: StageTimeouts {
            compile: 0.1,
            test_case: 0.01,
            time: 0.1,
        },
        ..EvalConfig::default()
    };
    let started = Instant::now();
    assert_eq!(
        ev.evaluate("VALID", &task(), &cfg),
        Err(EvalError::Timeout { stage: Stage::Time })
    );
    assert!(started.elapsed() < Duration::from_secs(5));
}
