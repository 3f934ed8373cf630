//! Runs searches for a task set, one archive file per (task, repeat), with
//! several task loops in parallel.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use evoengineer_core::evaluator::{Evaluator, SyntheticEvaluator};
use evoengineer_core::llm::{Backoff, LlmBackend, ScriptedBackend};
use evoengineer_core::orchestrator::{resume, run_search, Host, RunArchive, SearchDeps, SearchError};
use evoengineer_core::Task;

use crate::archive_io::{archive_path, read_archive, ArchiveReadError, JsonlSink};
use crate::config::{BackendConfig, EvaluatorConfig, Settings};
use crate::corpus::load_corpus;
use crate::remote::{RemoteBackend, RemoteError};
use crate::subprocess::SubprocessEvaluator;

/// Wall clock and real sleeps.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemHost;

impl Host for SystemHost {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }

    fn sleep(&self, duration: Duration) {
        thread::sleep(duration);
    }
}

pub type SharedBackend = Arc<dyn LlmBackend + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum BackendSetupError {
    #[error("loading corpus {path}: {source}")]
    Corpus {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scripted corpus {0} is empty")]
    EmptyCorpus(PathBuf),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

pub fn build_backend(settings: &Settings) -> Result<SharedBackend, BackendSetupError> {
    match settings.file.backend.as_ref().expect("validated settings have a backend") {
        BackendConfig::Scripted { corpus, cycle } => {
            let loaded = load_corpus(corpus).map_err(|source| BackendSetupError::Corpus {
                path: corpus.clone(),
                source,
            })?;
            if loaded.is_empty() {
                return Err(BackendSetupError::EmptyCorpus(corpus.clone()));
            }
            Ok(Arc::new(ScriptedBackend::new(loaded.cycling(*cycle))))
        }
        BackendConfig::Remote(remote) => Ok(Arc::new(RemoteBackend::new(remote)?)),
    }
}

pub fn build_evaluator(cfg: &EvaluatorConfig) -> Box<dyn Evaluator + Send> {
    match cfg {
        EvaluatorConfig::Synthetic { rules } => Box::new(SyntheticEvaluator::new(rules.clone())),
        EvaluatorConfig::Subprocess {
            command,
            working_dir,
        } => Box::new(SubprocessEvaluator::new(command.clone(), working_dir.clone())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Start every archive from scratch, replacing existing files.
    Fresh,
    /// Continue partial archives, keep complete ones, start missing ones.
    Resume,
}

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: ArchiveReadError,
    },
}

#[derive(Debug)]
pub struct JobOutcome {
    pub task_id: String,
    pub repeat: u32,
    pub run_id: String,
    pub path: PathBuf,
    pub result: Result<RunArchive, JobError>,
}

fn run_job(
    settings: &Settings,
    backend: &SharedBackend,
    task: &Task,
    repeat: u32,
    out_dir: &Path,
    mode: Mode,
) -> JobOutcome {
    let cfg = settings.run_config().for_repeat(repeat);
    let run_id = settings.run_id(&cfg);
    let path = archive_path(out_dir, &run_id, &task.id);
    let mut evaluator = build_evaluator(settings.file.evaluator.as_ref().expect("validated settings have an evaluator"));
    let mut sink = JsonlSink::new(&path);
    let host = SystemHost;
    let mut deps = SearchDeps {
        backend: backend.as_ref(),
        evaluator: evaluator.as_mut(),
        sink: &mut sink,
        host: &host,
        template: &settings.template,
        prices: &settings.prices,
        backoff: Backoff::default(),
    };
    let result = if mode == Mode::Resume && path.exists() {
        match read_archive(&path) {
            Ok(loaded) => resume(loaded.archive, task, &cfg, &mut deps).map_err(JobError::from),
            Err(source) => Err(JobError::Read {
                path: path.clone(),
                source,
            }),
        }
    } else {
        run_search(task, &cfg, &run_id, &mut deps).map_err(JobError::from)
    };
    JobOutcome {
        task_id: task.id.clone(),
        repeat,
        run_id,
        path,
        result,
    }
}

/// Runs `tasks` x `runs_repeat` searches. Outcomes are in (repeat, task)
/// order regardless of scheduling.
pub fn execute(
    settings: &Settings,
    tasks: &[Task],
    backend: &SharedBackend,
    out_dir: &Path,
    mode: Mode,
) -> Vec<JobOutcome> {
    let repeats = settings.run_config().runs_repeat;
    let jobs: Vec<(u32, &Task)> = (0..repeats).flat_map(|r| tasks.iter().map(move |t| (r, t))).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<JobOutcome>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = settings.file.parallel_tasks.clamp(1, jobs.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(repeat, task)) = jobs.get(i) else { break };
                let outcome = run_job(settings, backend, task, repeat, out_dir, mode);
                results.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(outcome);
            });
        }
    });
    results
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|o| o.expect("every job ran"))
        .collect()
}
