//! Domain types shared by every module, the feasibility predicate and the
//! speedup arithmetic.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::hash::sha256_hex;

/// Kernel families used to slice reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelCategory {
    Matmul,
    Convolution,
    ActivationPooling,
    NormalizationReduction,
    Loss,
    Cumulative,
}

impl KernelCategory {
    pub const ALL: [KernelCategory; 6] = [
        KernelCategory::Matmul,
        KernelCategory::Convolution,
        KernelCategory::ActivationPooling,
        KernelCategory::NormalizationReduction,
        KernelCategory::Loss,
        KernelCategory::Cumulative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelCategory::Matmul => "matmul",
            KernelCategory::Convolution => "convolution",
            KernelCategory::ActivationPooling => "activation-pooling",
            KernelCategory::NormalizationReduction => "normalization-reduction",
            KernelCategory::Loss => "loss",
            KernelCategory::Cumulative => "cumulative",
        }
    }
}

impl fmt::Display for KernelCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a candidate is checked for functional correctness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestSpec {
    pub n_cases: u32,
    pub input_seed: u64,
    pub abs_tolerance: f64,
    pub rel_tolerance: f64,
}

impl Default for TestSpec {
    fn default() -> Self {
        TestSpec {
            n_cases: 5,
            input_seed: 0,
            abs_tolerance: 1e-2,
            rel_tolerance: 1e-2,
        }
    }
}

/// One optimization problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub category: KernelCategory,
    /// Optimization goal and constraints, shown verbatim in every prompt.
    pub description: String,
    #[serde(default)]
    pub reference_source: String,
    pub initial_code: String,
    #[serde(default)]
    pub test_spec: TestSpec,
    /// Mean runtime of `initial_code`, in milliseconds.
    pub baseline_mean_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        TokenUsage {
            input_tokens,
            output_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

impl core::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> TokenUsage {
        iter.fold(TokenUsage::default(), Add::add)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub runs: u32,
    pub warmup_runs: u32,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub passed: u32,
    pub total: u32,
    pub max_abs_error: Option<f64>,
}

impl TestSummary {
    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

/// Staged evaluation outcome. `tests` is only present when compilation
/// succeeded and `timing` only when every test passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub compile_ok: bool,
    #[serde(default)]
    pub compile_log: String,
    pub tests: Option<TestSummary>,
    pub timing: Option<TimingStats>,
}

impl EvaluationResult {
    pub fn compile_failure(log: impl Into<String>) -> Self {
        EvaluationResult {
            compile_ok: false,
            compile_log: log.into(),
            tests: None,
            timing: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        is_valid(self)
    }

    /// Checks the stage-gating rules. Returns the first broken rule.
    pub fn check_gating(&self) -> Result<(), &'static str> {
        if let Some(tests) = &self.tests {
            if !self.compile_ok {
                return Err("test results reported for a candidate that did not compile");
            }
            if tests.passed > tests.total {
                return Err("tests passed exceeds tests total");
            }
            if let Some(err) = tests.max_abs_error {
                if !(err >= 0.0) {
                    return Err("max_abs_error must be non-negative");
                }
            }
        }
        if let Some(timing) = &self.timing {
            match &self.tests {
                Some(tests) if self.compile_ok && tests.all_passed() => {}
                _ => return Err("timing reported for a candidate that did not pass every test"),
            }
            if timing.runs == 0 {
                return Err("timing runs must be >= 1");
            }
            if !(timing.mean_ms > 0.0) || !timing.mean_ms.is_finite() {
                return Err("timing mean_ms must be > 0");
            }
            if !(timing.std_ms >= 0.0) {
                return Err("timing std_ms must be >= 0");
            }
        }
        Ok(())
    }
}

/// The feasibility predicate: compiled and passed every functional test.
pub fn is_valid(eval: &EvaluationResult) -> bool {
    eval.compile_ok && eval.tests.as_ref().is_some_and(TestSummary::all_passed)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainError {
    NonPositiveTime { baseline_mean_ms: f64, candidate_mean_ms: f64 },
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainError::NonPositiveTime {
                baseline_mean_ms,
                candidate_mean_ms,
            } => write!(
                f,
                "speedup needs positive times (baseline {baseline_mean_ms} ms, candidate {candidate_mean_ms} ms)"
            ),
        }
    }
}

impl core::error::Error for DomainError {}

/// `baseline / candidate`; values above 1.0 mean the candidate is faster.
pub fn speedup(baseline_mean_ms: f64, candidate_mean_ms: f64) -> Result<f64, DomainError> {
    if !(baseline_mean_ms > 0.0 && candidate_mean_ms > 0.0) {
        return Err(DomainError::NonPositiveTime {
            baseline_mean_ms,
            candidate_mean_ms,
        });
    }
    Ok(baseline_mean_ms / candidate_mean_ms)
}

/// Lists every broken `Task` invariant; empty means the task is usable.
pub fn validate_task(task: &Task) -> Vec<String> {
    let mut violations = Vec::new();
    if task.id.trim().is_empty() {
        violations.push(String::from("id must be non-empty"));
    }
    if !(task.baseline_mean_ms > 0.0) || !task.baseline_mean_ms.is_finite() {
        violations.push(String::from("baseline_mean_ms must be > 0"));
    }
    if task.initial_code.trim().is_empty() {
        violations.push(String::from("initial_code must be non-empty"));
    }
    if task.test_spec.n_cases == 0 {
        violations.push(String::from("test_spec.n_cases must be >= 1"));
    }
    if !(task.test_spec.abs_tolerance >= 0.0) {
        violations.push(String::from("test_spec.abs_tolerance must be >= 0"));
    }
    if !(task.test_spec.rel_tolerance >= 0.0) {
        violations.push(String::from("test_spec.rel_tolerance must be >= 0"));
    }
    violations
}

/// Validates each task and additionally requires ids to be unique.
pub fn validate_task_set(tasks: &[Task]) -> Vec<String> {
    let mut violations = Vec::new();
    for (i, task) in tasks.iter().enumerate() {
        for v in validate_task(task) {
            violations.push(format!("task {:?}: {v}", task.id));
        }
        if tasks[..i].iter().any(|t| t.id == task.id) {
            violations.push(format!("task {:?}: id must be unique within the task set", task.id));
        }
    }
    violations
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Pending,
    CompileError,
    TestFailure,
    RuntimeError,
    Timeout,
    /// The reply had no usable fenced code block.
    ParseError,
    /// The backend returned nothing (refusal or empty body).
    EmptyCompletion,
    Valid,
}

impl CandidateStatus {
    pub const TERMINAL: [CandidateStatus; 7] = [
        CandidateStatus::Valid,
        CandidateStatus::CompileError,
        CandidateStatus::TestFailure,
        CandidateStatus::RuntimeError,
        CandidateStatus::Timeout,
        CandidateStatus::ParseError,
        CandidateStatus::EmptyCompletion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CandidateStatus::Pending => "pending",
            CandidateStatus::CompileError => "compile_error",
            CandidateStatus::TestFailure => "test_failure",
            CandidateStatus::RuntimeError => "runtime_error",
            CandidateStatus::Timeout => "timeout",
            CandidateStatus::ParseError => "parse_error",
            CandidateStatus::EmptyCompletion => "empty_completion",
            CandidateStatus::Valid => "valid",
        }
    }

    /// Status implied by a completed evaluation.
    pub fn from_evaluation(eval: &EvaluationResult) -> CandidateStatus {
        if !eval.compile_ok {
            CandidateStatus::CompileError
        } else if is_valid(eval) {
            CandidateStatus::Valid
        } else {
            CandidateStatus::TestFailure
        }
    }
}

/// A design rationale extracted from a model reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Insight {
    pub text: String,
    pub source_candidate: String,
    pub fitness_at_creation: Option<f64>,
}

/// One program in text space, with lineage and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub code: String,
    pub parent_ids: Vec<String>,
    pub trial_index: u32,
    pub generation: u32,
    pub status: CandidateStatus,
    pub eval: Option<EvaluationResult>,
    pub insight: Option<Insight>,
    pub tokens: TokenUsage,
}

impl Candidate {
    /// Stable identity: trial index plus a digest of the code text.
    pub fn make_id(trial_index: u32, code: &str) -> String {
        let digest = sha256_hex(code.as_bytes());
        format!("t{trial_index:04}-{}", &digest[..16])
    }

    pub fn mean_ms(&self) -> Option<f64> {
        self.eval
            .as_ref()
            .and_then(|e| e.timing.as_ref())
            .map(|t| t.mean_ms)
    }

    /// Speedup over `baseline_mean_ms`; `None` unless the candidate is valid and timed.
    pub fn fitness(&self, baseline_mean_ms: f64) -> Option<f64> {
        if self.status != CandidateStatus::Valid {
            return None;
        }
        speedup(baseline_mean_ms, self.mean_ms()?).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn eval(compile_ok: bool, passed: u32, total: u32) -> EvaluationResult {
        EvaluationResult {
            compile_ok,
            compile_log: String::new(),
            tests: compile_ok.then_some(TestSummary {
                passed,
                total,
                max_abs_error: None,
            }),
            timing: None,
        }
    }

    pub(crate) fn task() -> Task {
        Task {
            id: "relu".into(),
            category: KernelCategory::ActivationPooling,
            description: "make relu fast".into(),
            reference_source: "torch.relu(x)".into(),
            initial_code: "__global__ void relu() {}".into(),
            test_spec: TestSpec::default(),
            baseline_mean_ms: 10.0,
        }
    }

    #[test]
    fn validity_predicate() {
        assert!(is_valid(&eval(true, 5, 5)));
        assert!(!is_valid(&eval(false, 0, 0)));
        assert!(!is_valid(&eval(true, 4, 5)));
    }

    #[test]
    fn speedup_ratios() {
        assert_eq!(speedup(10.0, 5.0).unwrap(), 2.0);
        assert_eq!(speedup(10.0, 10.0).unwrap(), 1.0);
        assert_eq!(speedup(3.0, 12.0).unwrap(), 0.25);
        assert!(speedup(0.0, 1.0).is_err());
        assert!(speedup(1.0, -2.0).is_err());
        assert!(speedup(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn task_validation() {
        assert!(validate_task(&task()).is_empty());

        let mut t = task();
        t.baseline_mean_ms = 0.0;
        assert_eq!(validate_task(&t), vec![String::from("baseline_mean_ms must be > 0")]);

        let mut t = task();
        t.initial_code = String::new();
        assert_eq!(validate_task(&t), vec![String::from("initial_code must be non-empty")]);
    }

    #[test]
    fn task_set_requires_unique_ids() {
        let tasks = vec![task(), task()];
        let v = validate_task_set(&tasks);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("unique"));
    }

    #[test]
    fn gating_rejects_timing_without_full_pass() {
        let mut e = eval(true, 4, 5);
        e.timing = Some(TimingStats {
            runs: 100,
            warmup_runs: 10,
            mean_ms: 1.0,
            std_ms: 0.0,
        });
        assert!(e.check_gating().is_err());
        e.tests.as_mut().unwrap().passed = 5;
        assert!(e.check_gating().is_ok());

        let mut e = eval(false, 0, 0);
        e.tests = Some(TestSummary {
            passed: 0,
            total: 5,
            max_abs_error: None,
        });
        assert!(e.check_gating().is_err());
    }

    #[test]
    fn status_from_evaluation() {
        assert_eq!(
            CandidateStatus::from_evaluation(&eval(false, 0, 0)),
            CandidateStatus::CompileError
        );
        assert_eq!(
            CandidateStatus::from_evaluation(&eval(true, 3, 5)),
            CandidateStatus::TestFailure
        );
        assert_eq!(
            CandidateStatus::from_evaluation(&eval(true, 5, 5)),
            CandidateStatus::Valid
        );
    }

    #[test]
    fn candidate_id_is_stable_and_indexed() {
        let a = Candidate::make_id(3, "code");
        assert_eq!(a, Candidate::make_id(3, "code"));
        assert!(a.starts_with("t0003-"));
        assert_ne!(a, Candidate::make_id(4, "code"));
        assert_ne!(a, Candidate::make_id(3, "code2"));
    }
}
