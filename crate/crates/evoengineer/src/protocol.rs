//! The `evoeval/1` evaluator protocol: one JSON request per line on the
//! evaluator's stdin, one JSON reply per line on its stdout.

use evoengineer_core::evaluator::{EvalConfig, EvalError, Stage, StageTimeouts};
use evoengineer_core::{EvaluationResult, Task, TestSummary, TimingStats};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: &str = "evoeval/1";
pub const OP_EVALUATE: &str = "evaluate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub version: String,
    pub op: String,
    pub task_id: String,
    pub code: String,
    pub stages: Vec<Stage>,
    pub n_cases: u32,
    pub input_seed: u64,
    pub abs_tolerance: f64,
    pub rel_tolerance: f64,
    pub timing_runs: u32,
    pub warmup_runs: u32,
    pub per_stage_timeout_s: StageTimeouts,
}

impl EvalRequest {
    pub fn new(code: &str, task: &Task, cfg: &EvalConfig) -> Self {
        EvalRequest {
            version: PROTOCOL_VERSION.into(),
            op: OP_EVALUATE.into(),
            task_id: task.id.clone(),
            code: code.into(),
            stages: cfg.stages.clone(),
            n_cases: task.test_spec.n_cases,
            input_seed: task.test_spec.input_seed,
            abs_tolerance: task.test_spec.abs_tolerance,
            rel_tolerance: task.test_spec.rel_tolerance,
            timing_runs: cfg.timing_runs,
            warmup_runs: cfg.warmup_runs,
            per_stage_timeout_s: cfg.per_stage_timeout_s,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            stages: self.stages.clone(),
            timing_runs: self.timing_runs,
            warmup_runs: self.warmup_runs,
            per_stage_timeout_s: self.per_stage_timeout_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileReply {
    pub ok: bool,
    #[serde(default)]
    pub log: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestsReply {
    pub passed: u32,
    pub total: u32,
    #[serde(default)]
    pub max_abs_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReply {
    pub runs: u32,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyError {
    #[serde(default)]
    pub stage: Option<String>,
    pub reason: String,
    #[serde(default)]
    pub message: String,
}

/// `compile` may be null only on error replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReply {
    pub version: String,
    #[serde(default)]
    pub compile: Option<CompileReply>,
    #[serde(default)]
    pub tests: Option<TestsReply>,
    #[serde(default)]
    pub timing: Option<TimingReply>,
    #[serde(default)]
    pub error: Option<ReplyError>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0:?} (expected {PROTOCOL_VERSION})")]
    Version(String),
    #[error("unsupported op {0:?}")]
    UnsupportedOp(String),
    #[error("reply without compile result or error")]
    MissingCompile,
    #[error("reply breaks stage gating: {0}")]
    Gating(&'static str),
}

impl From<ProtocolError> for EvalError {
    fn from(e: ProtocolError) -> Self {
        EvalError::Protocol(e.to_string())
    }
}

fn single_line<T: Serialize>(msg: &T) -> String {
    // JSON escapes control characters inside strings, so this never
    // contains a raw newline.
    serde_json::to_string(msg).expect("protocol messages serialize")
}

pub fn encode_request(req: &EvalRequest) -> String {
    single_line(req)
}

pub fn decode_request(line: &str) -> Result<EvalRequest, ProtocolError> {
    let req: EvalRequest = serde_json::from_str(line).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if req.version != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(req.version));
    }
    if req.op != OP_EVALUATE {
        return Err(ProtocolError::UnsupportedOp(req.op));
    }
    Ok(req)
}

pub fn encode_reply(reply: &EvalReply) -> String {
    single_line(reply)
}

/// Parses a reply line and rejects replies that break stage gating.
pub fn decode_reply(line: &str) -> Result<EvalReply, ProtocolError> {
    let reply: EvalReply = serde_json::from_str(line).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if reply.version != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(reply.version));
    }
    match &reply.compile {
        Some(_) => {
            reply.to_evaluation(0).check_gating().map_err(ProtocolError::Gating)?;
        }
        None if reply.error.is_none() => return Err(ProtocolError::MissingCompile),
        None => {
            if reply.tests.is_some() || reply.timing.is_some() {
                return Err(ProtocolError::Gating("results reported without a compile result"));
            }
        }
    }
    Ok(reply)
}

impl EvalReply {
    pub fn from_result(result: &EvaluationResult) -> Self {
        EvalReply {
            version: PROTOCOL_VERSION.into(),
            compile: Some(CompileReply {
                ok: result.compile_ok,
                log: result.compile_log.clone(),
            }),
            tests: result.tests.as_ref().map(|t| TestsReply {
                passed: t.passed,
                total: t.total,
                max_abs_error: t.max_abs_error,
            }),
            timing: result.timing.as_ref().map(|t| TimingReply {
                runs: t.runs,
                mean_ms: t.mean_ms,
                std_ms: t.std_ms,
            }),
            error: None,
        }
    }

    pub fn from_error(error: &EvalError) -> Self {
        let (stage, reason, message) = match error {
            EvalError::EmptyCode => (None, "empty-code", error.to_string()),
            EvalError::Timeout { stage } => (Some(stage.as_str().to_string()), "timeout", error.to_string()),
            EvalError::Fault(m) => (None, "fault", m.clone()),
            EvalError::Protocol(m) => (None, "protocol", m.clone()),
            EvalError::Reported {
                stage,
                reason,
                message,
            } => (stage.clone(), reason.as_str(), message.clone()),
        };
        EvalReply {
            version: PROTOCOL_VERSION.into(),
            compile: None,
            tests: None,
            timing: None,
            error: Some(ReplyError {
                stage,
                reason: reason.into(),
                message,
            }),
        }
    }

    /// Answer to a line that could not be understood.
    pub fn malformed(detail: &str) -> Self {
        EvalReply::from_error(&EvalError::Reported {
            stage: None,
            reason: "malformed-request".into(),
            message: detail.into(),
        })
    }

    fn to_evaluation(&self, warmup_runs: u32) -> EvaluationResult {
        let compile = self.compile.clone().unwrap_or(CompileReply {
            ok: false,
            log: String::new(),
        });
        EvaluationResult {
            compile_ok: compile.ok,
            compile_log: compile.log,
            tests: self.tests.map(|t| TestSummary {
                passed: t.passed,
                total: t.total,
                max_abs_error: t.max_abs_error,
            }),
            timing: self.timing.map(|t| TimingStats {
                runs: t.runs,
                warmup_runs,
                mean_ms: t.mean_ms,
                std_ms: t.std_ms,
            }),
        }
    }

    /// The evaluation this reply describes, or the error it reports.
    /// Warmup runs are not echoed back, so they come from `cfg`.
    pub fn into_result(self, cfg: &EvalConfig) -> Result<EvaluationResult, EvalError> {
        if let Some(err) = self.error {
            return Err(match (err.reason.as_str(), err.stage.as_deref()) {
                ("empty-code", _) => EvalError::EmptyCode,
                ("timeout", Some(stage)) if parse_stage(stage).is_some() => EvalError::Timeout {
                    stage: parse_stage(stage).unwrap(),
                },
                _ => EvalError::Reported {
                    stage: err.stage,
                    reason: err.reason,
                    message: err.message,
                },
            });
        }
        let result = self.to_evaluation(cfg.warmup_runs);
        result.check_gating().map_err(|e| EvalError::from(ProtocolError::Gating(e)))?;
        Ok(result)
    }
}

fn parse_stage(s: &str) -> Option<Stage> {
    match s {
        "compile" => Some(Stage::Compile),
        "test" => Some(Stage::Test),
        "time" => Some(Stage::Time),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok_reply() -> &'static str {
        r#"{"version":"evoeval/1","compile":{"ok":true,"log":""},"tests":{"passed":5,"total":5,"max_abs_error":0.0},"timing":{"runs":100,"mean_ms":2.5,"std_ms":0.1},"error":null}"#
    }

    #[test]
    fn decodes_a_complete_reply() {
        let reply = decode_reply(ok_reply()).unwrap();
        let result = reply.into_result(&EvalConfig::default()).unwrap();
        assert!(result.is_valid());
        assert_eq!(result.timing.unwrap().warmup_runs, 10);
    }

    #[test]
    fn rejects_gating_violations() {
        let tests_without_compile = r#"{"version":"evoeval/1","compile":{"ok":false,"log":"x"},"tests":{"passed":0,"total":5}}"#;
        assert!(matches!(decode_reply(tests_without_compile), Err(ProtocolError::Gating(_))));
        let timing_on_failure = r#"{"version":"evoeval/1","compile":{"ok":true},"tests":{"passed":4,"total":5},"timing":{"runs":1,"mean_ms":1.0,"std_ms":0.0}}"#;
        assert!(matches!(decode_reply(timing_on_failure), Err(ProtocolError::Gating(_))));
    }

    #[test]
    fn rejects_missing_fields_and_versions() {
        assert!(matches!(decode_reply(r#"{"compile":{"ok":true}}"#), Err(ProtocolError::Malformed(_))));
        assert!(matches!(decode_reply(r#"{"version":"evoeval/1"}"#), Err(ProtocolError::MissingCompile)));
        assert!(matches!(
            decode_reply(r#"{"version":"evoeval/2","compile":{"ok":true}}"#),
            Err(ProtocolError::Version(_))
        ));
        assert!(matches!(decode_reply("not json"), Err(ProtocolError::Malformed(_))));
    }

    #[test]
    fn error_replies_map_to_eval_errors() {
        let timeout = r#"{"version":"evoeval/1","compile":null,"error":{"stage":"time","reason":"timeout","message":"slow"}}"#;
        let err = decode_reply(timeout).unwrap().into_result(&EvalConfig::default()).unwrap_err();
        assert_eq!(err, EvalError::Timeout { stage: Stage::Time });
        let device = r#"{"version":"evoeval/1","error":{"stage":"time","reason":"no-device","message":"no GPU"}}"#;
        let err = decode_reply(device).unwrap().into_result(&EvalConfig::default()).unwrap_err();
        assert!(matches!(err, EvalError::Reported { ref reason, .. } if reason == "no-device"));
    }

    #[test]
    fn encoded_lines_have_no_raw_newlines() {
        let task = Task {
            id: "t".into(),
            category: evoengineer_core::KernelCategory::Loss,
            description: String::new(),
            reference_source: String::new(),
            initial_code: "x".into(),
            test_spec: Default::default(),
            baseline_mean_ms: 1.0,
        };
        let req = EvalRequest::new("line one\nline two\r\n\ttabbed", &task, &EvalConfig::default());
        let line = encode_request(&req);
        assert!(!line.contains('\n'));
        assert_eq!(decode_request(&line).unwrap(), req);
    }
}
