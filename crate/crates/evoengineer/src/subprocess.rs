//! Evaluator that talks `evoeval/1` to a long-lived child process.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use evoengineer_core::evaluator::{EvalConfig, EvalError, Evaluator, Stage};
use evoengineer_core::{EvaluationResult, Task};

use crate::protocol::{decode_reply, encode_request, EvalRequest};

/// Runs `command` through `sh -c`, restarting it after a crash or timeout.
/// The child's stderr is passed through.
pub struct SubprocessEvaluator {
    command: String,
    working_dir: Option<PathBuf>,
    /// Added to the summed stage timeouts before the child is killed.
    pub grace: Duration,
    child: Option<Running>,
}

struct Running {
    child: Child,
    stdin: Option<ChildStdin>,
    replies: Receiver<std::io::Result<String>>,
}

impl SubprocessEvaluator {
    pub fn new(command: impl Into<String>, working_dir: Option<PathBuf>) -> Self {
        SubprocessEvaluator {
            command: command.into(),
            working_dir,
            grace: Duration::from_secs(5),
            child: None,
        }
    }

    fn spawn(&self) -> Result<Running, EvalError> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(dir) = &self.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| EvalError::Fault(format!("cannot start evaluator `{}`: {e}", self.command)))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Running {
            child,
            stdin,
            replies: rx,
        })
    }

    fn kill(&mut self) {
        if let Some(mut running) = self.child.take() {
            let _ = running.child.kill();
            let _ = running.child.wait();
        }
    }

    fn exchange(&mut self, line: &str, limit: Duration) -> Result<String, Exchange> {
        if self.child.is_none() {
            self.child = Some(self.spawn().map_err(Exchange::Failed)?);
        }
        let running = self.child.as_mut().expect("child was just started");
        let stdin = running.stdin.as_mut().expect("stdin stays open while running");
        if let Err(e) = writeln!(stdin, "{line}").and_then(|_| stdin.flush()) {
            return Err(Exchange::Died(format!("evaluator stdin closed: {e}")));
        }
        match running.replies.recv_timeout(limit) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => Err(Exchange::Died(format!("reading evaluator output: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Exchange::TimedOut),
            Err(RecvTimeoutError::Disconnected) => {
                let status = running.child.wait().map(|s| s.to_string()).unwrap_or_default();
                Err(Exchange::Died(format!("evaluator exited ({status})")))
            }
        }
    }
}

enum Exchange {
    Failed(EvalError),
    Died(String),
    TimedOut,
}

impl Evaluator for SubprocessEvaluator {
    fn evaluate(&mut self, code: &str, task: &Task, cfg: &EvalConfig) -> Result<EvaluationResult, EvalError> {
        let request = encode_request(&EvalRequest::new(code, task, cfg));
        let budget = cfg.per_stage_timeout_s.total_s(&cfg.stages, task.test_spec.n_cases);
        let limit = Duration::from_secs_f64(budget.max(0.0)) + self.grace;
        match self.exchange(&request, limit) {
            Ok(line) => decode_reply(&line)?.into_result(cfg),
            Err(Exchange::Failed(e)) => Err(e),
            Err(Exchange::Died(message)) => {
                self.kill();
                Err(EvalError::Fault(message))
            }
            Err(Exchange::TimedOut) => {
                self.kill();
                let stage = cfg.stages.last().copied().unwrap_or(Stage::Compile);
                Err(EvalError::Timeout { stage })
            }
        }
    }
}

impl Drop for SubprocessEvaluator {
    fn drop(&mut self) {
        let Some(mut running) = self.child.take() else { return };
        // Closing stdin asks the evaluator to exit; give it a moment.
        drop(running.stdin.take());
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = running.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = running.child.kill();
        let _ = running.child.wait();
    }
}
