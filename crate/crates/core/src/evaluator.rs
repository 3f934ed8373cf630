//! Staged candidate evaluation: compile, functional tests, timing.
//!
//! Later stages only run when earlier ones succeed: tests need a successful
//! compile and timing needs every test to pass. [`SyntheticEvaluator`] is a
//! deterministic in-process stand-in used for desk-scale runs; real
//! evaluators speak the `evoeval/1` line protocol from the companion crate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{EvaluationResult, Task, TestSummary, TimingStats};
use crate::hash::fnv1a64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Compile,
    Test,
    Time,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Compile => "compile",
            Stage::Test => "test",
            Stage::Time => "time",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Seconds allowed per stage. The test budget is per case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageTimeouts {
    pub compile: f64,
    pub test_case: f64,
    pub time: f64,
}

impl Default for StageTimeouts {
    fn default() -> Self {
        StageTimeouts {
            compile: 120.0,
            test_case: 30.0,
            time: 300.0,
        }
    }
}

impl StageTimeouts {
    /// Upper bound on wall time for one evaluation with `n_cases` tests.
    pub fn total_s(&self, stages: &[Stage], n_cases: u32) -> f64 {
        stages
            .iter()
            .map(|s| match s {
                Stage::Compile => self.compile,
                Stage::Test => self.test_case * f64::from(n_cases.max(1)),
                Stage::Time => self.time,
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub stages: Vec<Stage>,
    pub timing_runs: u32,
    pub warmup_runs: u32,
    pub per_stage_timeout_s: StageTimeouts,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            stages: vec![Stage::Compile, Stage::Test, Stage::Time],
            timing_runs: 100,
            warmup_runs: 10,
            per_stage_timeout_s: StageTimeouts::default(),
        }
    }
}

impl EvalConfig {
    /// Stages must be a prefix of compile, test, time.
    pub fn validate(&self) -> Result<(), String> {
        let canonical = [Stage::Compile, Stage::Test, Stage::Time];
        if self.stages.is_empty() || self.stages.len() > 3 || self.stages[..] != canonical[..self.stages.len()] {
            return Err(format!(
                "stages must be [compile], [compile, test] or [compile, test, time]; got {:?}",
                self.stages
            ));
        }
        if self.timing_runs == 0 {
            return Err(String::from("timing_runs must be >= 1"));
        }
        let t = &self.per_stage_timeout_s;
        if !(t.compile > 0.0 && t.test_case > 0.0 && t.time > 0.0) {
            return Err(String::from("stage timeouts must be > 0"));
        }
        Ok(())
    }

    pub fn runs(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    EmptyCode,
    /// A stage exceeded its time limit; later stages were skipped.
    Timeout { stage: Stage },
    /// The evaluator process crashed or could not be reached.
    Fault(String),
    /// The evaluator answered with something that breaks the protocol.
    Protocol(String),
    /// The evaluator reported a structured error of its own.
    Reported {
        stage: Option<String>,
        reason: String,
        message: String,
    },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::EmptyCode => f.write_str("candidate code is empty"),
            EvalError::Timeout { stage } => write!(f, "{stage} stage timed out"),
            EvalError::Fault(msg) => write!(f, "evaluator fault: {msg}"),
            EvalError::Protocol(msg) => write!(f, "protocol error: {msg}"),
            EvalError::Reported {
                stage,
                reason,
                message,
            } => match stage {
                Some(stage) => write!(f, "evaluator error in {stage} stage ({reason}): {message}"),
                None => write!(f, "evaluator error ({reason}): {message}"),
            },
        }
    }
}

impl core::error::Error for EvalError {}

/// Runs the staged pipeline for one candidate.
pub trait Evaluator {
    fn evaluate(&mut self, code: &str, task: &Task, cfg: &EvalConfig)
        -> Result<EvaluationResult, EvalError>;
}

impl<E: Evaluator + ?Sized> Evaluator for &mut E {
    fn evaluate(&mut self, code: &str, task: &Task, cfg: &EvalConfig) -> Result<EvaluationResult, EvalError> {
        (**self).evaluate(code, task, cfg)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for alloc::boxed::Box<E> {
    fn evaluate(&mut self, code: &str, task: &Task, cfg: &EvalConfig) -> Result<EvaluationResult, EvalError> {
        (**self).evaluate(code, task, cfg)
    }
}

/// Marker tokens that drive the synthetic cost model.
///
/// * code compiles iff it contains `compile_token`;
/// * it passes every test iff it contains `correct_token`; otherwise a
///   hash-derived number of cases (always fewer than all) pass;
/// * its mean runtime is `base_ms / (1 + occurrences of speed_token)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticRules {
    pub compile_token: String,
    pub correct_token: String,
    pub speed_token: String,
    pub base_ms: f64,
}

impl Default for SyntheticRules {
    fn default() -> Self {
        SyntheticRules {
            compile_token: String::from("VALID"),
            correct_token: String::from("CORRECT"),
            speed_token: String::from("FAST"),
            base_ms: 100.0,
        }
    }
}

impl SyntheticRules {
    pub fn validate(&self) -> Result<(), String> {
        let tokens = [&self.compile_token, &self.correct_token, &self.speed_token];
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(String::from("synthetic tokens must be non-empty"));
        }
        if tokens[0] == tokens[1] || tokens[0] == tokens[2] || tokens[1] == tokens[2] {
            return Err(String::from("synthetic tokens must be pairwise distinct"));
        }
        if !(self.base_ms > 0.0) || !self.base_ms.is_finite() {
            return Err(String::from("base_ms must be > 0"));
        }
        Ok(())
    }

    /// Mean runtime the cost model assigns to `code`.
    pub fn mean_ms(&self, code: &str) -> f64 {
        let speedups = code.matches(self.speed_token.as_str()).count();
        self.base_ms / (1.0 + speedups as f64)
    }
}

/// Pure function of `(code, rules, n_cases, cfg)`.
pub fn synthetic_evaluate(
    code: &str,
    rules: &SyntheticRules,
    n_cases: u32,
    cfg: &EvalConfig,
) -> Result<EvaluationResult, EvalError> {
    if code.trim().is_empty() {
        return Err(EvalError::EmptyCode);
    }
    if !code.contains(rules.compile_token.as_str()) {
        return Ok(EvaluationResult::compile_failure(format!(
            "synthetic compiler: error: missing `{}` marker\n1 error generated.",
            rules.compile_token
        )));
    }
    let mut result = EvaluationResult {
        compile_ok: true,
        compile_log: String::new(),
        tests: None,
        timing: None,
    };
    if !cfg.runs(Stage::Test) {
        return Ok(result);
    }
    let total = n_cases.max(1);
    let tests = if code.contains(rules.correct_token.as_str()) {
        TestSummary {
            passed: total,
            total,
            max_abs_error: Some(0.0),
        }
    } else {
        let hash = fnv1a64(code.as_bytes());
        TestSummary {
            passed: (hash % u64::from(total)) as u32,
            total,
            max_abs_error: Some(1.0 + (hash >> 32) as f64 / 4_294_967_296.0),
        }
    };
    let all_passed = tests.all_passed();
    result.tests = Some(tests);
    if all_passed && cfg.runs(Stage::Time) {
        result.timing = Some(TimingStats {
            runs: cfg.timing_runs,
            warmup_runs: cfg.warmup_runs,
            mean_ms: rules.mean_ms(code),
            std_ms: 0.0,
        });
    }
    Ok(result)
}

/// In-process evaluator implementing [`SyntheticRules`].
#[derive(Debug, Clone, Default)]
pub struct SyntheticEvaluator {
    pub rules: SyntheticRules,
}

impl SyntheticEvaluator {
    pub fn new(rules: SyntheticRules) -> Self {
        SyntheticEvaluator { rules }
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&mut self, code: &str, task: &Task, cfg: &EvalConfig) -> Result<EvaluationResult, EvalError> {
        synthetic_evaluate(code, &self.rules, task.test_spec.n_cases, cfg)
    }
}
