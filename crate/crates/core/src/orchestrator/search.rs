use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use super::archive::{ArchiveFooter, ArchiveHeader, PopulationEntry, RunArchive, TrialRecord, ARCHIVE_FORMAT};
use super::{InsightStore, RunConfig, Schedule};
use crate::domain::{validate_task, Candidate, CandidateStatus, EvaluationResult, Insight, Task, TokenUsage};
use crate::evaluator::{EvalError, Evaluator};
use crate::hash::sha256_hex;
use crate::llm::{cost, generate, Backoff, GenerateError, LlmBackend, PriceTable, RequestMeta};
use crate::population::Population;
use crate::traverse::{build_context, parse_response, render_prompt, PromptTemplate, SearchView};

/// Destination for archive lines. Implementations should make each call
/// durable before returning.
pub trait ArchiveSink {
    /// Starts (or restarts) an archive with `existing` records already in it.
    fn begin(&mut self, header: &ArchiveHeader, existing: &[TrialRecord]) -> Result<(), SinkError>;
    fn append(&mut self, record: &TrialRecord) -> Result<(), SinkError>;
    fn finish(&mut self, footer: &ArchiveFooter) -> Result<(), SinkError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkError(pub String);

impl fmt::Display for SinkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "archive write failed: {}", self.0)
    }
}

/// Discards everything; the returned [`RunArchive`] is the only record.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl ArchiveSink for NullSink {
    fn begin(&mut self, _: &ArchiveHeader, _: &[TrialRecord]) -> Result<(), SinkError> {
        Ok(())
    }

    fn append(&mut self, _: &TrialRecord) -> Result<(), SinkError> {
        Ok(())
    }

    fn finish(&mut self, _: &ArchiveFooter) -> Result<(), SinkError> {
        Ok(())
    }
}

/// Wall clock and sleeping, supplied by the embedding environment.
pub trait Host {
    fn now_ms(&self) -> u64;
    fn sleep(&self, duration: Duration);
}

/// Host with a frozen clock that never sleeps.
#[derive(Debug, Default, Clone, Copy)]
pub struct FixedHost {
    pub now_ms: u64,
}

impl Host for FixedHost {
    fn now_ms(&self) -> u64 {
        self.now_ms
    }

    fn sleep(&self, _duration: Duration) {}
}

/// Collaborators of one search loop.
pub struct SearchDeps<'a, B: ?Sized, E: ?Sized> {
    pub backend: &'a B,
    pub evaluator: &'a mut E,
    pub sink: &'a mut dyn ArchiveSink,
    pub host: &'a dyn Host,
    pub template: &'a PromptTemplate,
    pub prices: &'a PriceTable,
    pub backoff: Backoff,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchError {
    InvalidTask(Vec<String>),
    InvalidConfig(Vec<String>),
    ResumeConfigMismatch(String),
    InconsistentArchive(String),
    BudgetExhausted,
    Sink(SinkError),
}

impl fmt::Display for SearchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchError::InvalidTask(v) => write!(f, "invalid task: {}", v.join("; ")),
            SearchError::InvalidConfig(v) => write!(f, "invalid run config: {}", v.join("; ")),
            SearchError::ResumeConfigMismatch(detail) => {
                write!(f, "archive was produced by a different configuration: {detail}")
            }
            SearchError::InconsistentArchive(detail) => write!(f, "inconsistent archive: {detail}"),
            SearchError::BudgetExhausted => f.write_str("trial budget already used up"),
            SearchError::Sink(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SearchError {}

impl From<SinkError> for SearchError {
    fn from(e: SinkError) -> Self {
        SearchError::Sink(e)
    }
}

/// Mutable state of one search loop.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub archive: RunArchive,
    pub population: Population,
    pub insights: InsightStore,
    pub last_feedback: Option<String>,
    schedule: Schedule,
}

impl SearchState {
    pub fn config(&self) -> &RunConfig {
        &self.archive.header.config
    }

    pub fn task(&self) -> &Task {
        &self.archive.header.task
    }

    pub fn trials_used(&self) -> u32 {
        self.archive.trials_used()
    }

    pub fn is_done(&self) -> bool {
        self.trials_used() >= self.config().budget_trials
    }

    fn new(header: ArchiveHeader) -> Result<Self, SearchError> {
        let cfg = &header.config;
        let population = Population::new(cfg.strategy.population.clone(), header.task.baseline_mean_ms)
            .map_err(|e| SearchError::InvalidConfig(alloc::vec![format!("{e}")]))?;
        let insights = InsightStore::new(cfg.insight_capacity);
        let schedule = cfg.schedule();
        Ok(SearchState {
            archive: RunArchive::new(header),
            population,
            insights,
            last_feedback: None,
            schedule,
        })
    }

    /// Rebuilds population, insights and feedback from recorded trials.
    fn replay(header: ArchiveHeader, trials: &[TrialRecord]) -> Result<Self, SearchError> {
        let mut state = SearchState::new(header)?;
        for record in trials {
            state.absorb(record.clone())?;
        }
        Ok(state)
    }

    fn absorb(&mut self, record: TrialRecord) -> Result<(), SearchError> {
        let candidate = &record.candidate;
        if candidate.status == CandidateStatus::Valid {
            self.population
                .insert(candidate.clone())
                .map_err(|e| SearchError::InconsistentArchive(format!("{e}")))?;
        }
        if self.config().strategy.use_insights {
            if let Some(insight) = &candidate.insight {
                self.insights.push(insight.clone());
            }
        }
        self.last_feedback = record.feedback.clone();
        self.archive.trials.push(record);
        Ok(())
    }
}

/// What one call to [`step`] did.
#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Recorded(CandidateStatus),
    /// The backend is gone; nothing was recorded for this trial.
    Aborted(String),
}

pub fn start<B, E>(
    task: &Task,
    cfg: &RunConfig,
    run_id: &str,
    deps: &mut SearchDeps<'_, B, E>,
) -> Result<SearchState, SearchError>
where
    B: LlmBackend + ?Sized,
    E: Evaluator + ?Sized,
{
    let violations = validate_task(task);
    if !violations.is_empty() {
        return Err(SearchError::InvalidTask(violations));
    }
    cfg.validate().map_err(SearchError::InvalidConfig)?;
    let header = ArchiveHeader {
        format: String::from(ARCHIVE_FORMAT),
        run_id: String::from(run_id),
        task: task.clone(),
        config: cfg.clone(),
        started_ms: deps.host.now_ms(),
    };
    deps.sink.begin(&header, &[])?;
    SearchState::new(header)
}

/// Runs one trial: context, prompt, generation, parsing, evaluation,
/// population update, insight storage, archive append.
pub fn step<B, E>(state: &mut SearchState, deps: &mut SearchDeps<'_, B, E>) -> Result<StepOutcome, SearchError>
where
    B: LlmBackend + ?Sized,
    E: Evaluator + ?Sized,
{
    if state.is_done() {
        return Err(SearchError::BudgetExhausted);
    }
    let cfg = state.config().clone();
    let task = state.task().clone();
    let trial_index = state.trials_used();
    let generation = state.schedule.generation_of(trial_index);
    let cold_start = state.schedule.is_cold_start(trial_index);

    let ctx = build_context(
        &cfg.strategy,
        &task,
        SearchView {
            population: &state.population,
            insights: &state.insights,
            last_feedback: state.last_feedback.as_deref(),
            trial_index,
            cold_start,
        },
    );
    let prompt = render_prompt(&ctx, deps.template);
    let prompt_hash = sha256_hex(prompt.as_bytes());
    let parent_ids = ctx.parent_ids();
    let started_ms = deps.host.now_ms();

    let host = deps.host;
    let meta = RequestMeta {
        trial_index,
        seed: cfg.seed,
    };
    let generated = generate(
        deps.backend,
        &prompt,
        &cfg.generation_params,
        meta,
        deps.backoff,
        &mut |d| host.sleep(d),
    );

    let mut candidate = Candidate {
        id: String::new(),
        code: String::new(),
        parent_ids,
        trial_index,
        generation,
        status: CandidateStatus::Pending,
        eval: None,
        insight: None,
        tokens: TokenUsage::default(),
    };
    let mut error;
    let mut raw_reply = None;
    let attempts;
    let mut latency_ms = 0.0;

    match generated {
        Err(GenerateError::EmptyCompletion {
            attempts: n,
            usage,
            message,
        }) => {
            candidate.status = CandidateStatus::EmptyCompletion;
            candidate.tokens = usage;
            attempts = n;
            error = Some(message);
        }
        Err(e) => return Ok(StepOutcome::Aborted(format!("{e}"))),
        Ok(completion) => {
            candidate.tokens = completion.usage;
            attempts = completion.attempts;
            latency_ms = completion.latency_ms;
            match parse_response(&completion.text) {
                Err(e) => {
                    candidate.status = CandidateStatus::ParseError;
                    error = Some(format!("{e}"));
                    raw_reply = Some(completion.text);
                }
                Ok(parsed) => {
                    candidate.code = parsed.code;
                    let outcome = deps.evaluator.evaluate(&candidate.code, &task, &cfg.eval_config);
                    let (status, eval, err) = classify(outcome);
                    candidate.status = status;
                    candidate.eval = eval;
                    error = err;
                    if let Some(text) = parsed.insight {
                        candidate.insight = Some(Insight {
                            text,
                            source_candidate: String::new(),
                            fitness_at_creation: None,
                        });
                    }
                }
            }
        }
    }

    candidate.id = Candidate::make_id(trial_index, &candidate.code);
    if candidate.status == CandidateStatus::Valid && candidate.fitness(task.baseline_mean_ms).is_none() {
        candidate.status = CandidateStatus::RuntimeError;
        error = Some(String::from("valid candidate reported without timing"));
    }
    let fitness = candidate.fitness(task.baseline_mean_ms);
    if let Some(insight) = candidate.insight.as_mut() {
        insight.source_candidate = candidate.id.clone();
        insight.fitness_at_creation = fitness;
    }
    let feedback = feedback_for(&candidate, error.as_deref(), cfg.feedback_limit);
    let status = candidate.status;

    let record = TrialRecord {
        trial_index,
        generation,
        candidate,
        prompt_hash,
        attempts,
        latency_ms,
        error,
        feedback,
        raw_reply,
        started_ms,
        finished_ms: deps.host.now_ms(),
    };
    deps.sink.append(&record)?;
    state.absorb(record)?;
    Ok(StepOutcome::Recorded(status))
}

fn classify(
    outcome: Result<EvaluationResult, EvalError>,
) -> (CandidateStatus, Option<EvaluationResult>, Option<String>) {
    match outcome {
        Ok(eval) => match eval.check_gating() {
            Ok(()) => (CandidateStatus::from_evaluation(&eval), Some(eval), None),
            Err(rule) => (
                CandidateStatus::RuntimeError,
                None,
                Some(format!("evaluator broke stage gating: {rule}")),
            ),
        },
        Err(e @ EvalError::Timeout { .. }) => (CandidateStatus::Timeout, None, Some(format!("{e}"))),
        Err(e) => (CandidateStatus::RuntimeError, None, Some(format!("{e}"))),
    }
}

fn truncate_chars(text: &str, limit: usize) -> String {
    match text.char_indices().nth(limit) {
        Some((cut, _)) => String::from(&text[..cut]),
        None => String::from(text),
    }
}

/// Feedback passed to the next prompt; `None` after a valid trial.
pub fn feedback_for(candidate: &Candidate, error: Option<&str>, limit: usize) -> Option<String> {
    let text = match candidate.status {
        CandidateStatus::Valid | CandidateStatus::Pending => return None,
        CandidateStatus::CompileError => {
            let log = candidate.eval.as_ref().map(|e| e.compile_log.as_str()).unwrap_or("");
            if log.trim().is_empty() {
                String::from("Compilation failed without diagnostic output.")
            } else {
                String::from(log)
            }
        }
        CandidateStatus::TestFailure => {
            let tests = candidate.eval.as_ref().and_then(|e| e.tests.as_ref());
            match tests {
                Some(t) => match t.max_abs_error {
                    Some(err) => format!(
                        "Functional tests failed: {}/{} cases passed; max abs error {err:.6}.",
                        t.passed, t.total
                    ),
                    None => format!("Functional tests failed: {}/{} cases passed.", t.passed, t.total),
                },
                None => String::from("Functional tests failed."),
            }
        }
        CandidateStatus::ParseError => {
            String::from("The previous reply did not contain a fenced code block; no code was evaluated.")
        }
        CandidateStatus::EmptyCompletion => String::from("The previous reply was empty."),
        CandidateStatus::Timeout => format!("Evaluation timed out: {}.", error.unwrap_or("unknown stage")),
        CandidateStatus::RuntimeError => format!("Evaluation failed: {}", error.unwrap_or("unknown error")),
    };
    Some(truncate_chars(&text, limit))
}

/// Writes the footer and returns the archive.
pub fn finish<B, E>(
    mut state: SearchState,
    deps: &mut SearchDeps<'_, B, E>,
    abort_reason: Option<String>,
) -> Result<RunArchive, SearchError>
where
    B: LlmBackend + ?Sized,
    E: Evaluator + ?Sized,
{
    let tokens = state.archive.tokens();
    let model = &state.config().generation_params.model_name;
    let footer = ArchiveFooter {
        trials_used: state.trials_used(),
        aborted: abort_reason.is_some(),
        abort_reason,
        final_population: state
            .population
            .members()
            .map(|(island, m)| PopulationEntry {
                island,
                candidate_id: m.candidate.id.clone(),
                trial_index: m.candidate.trial_index,
                fitness: m.fitness,
            })
            .collect(),
        tokens,
        cost_usd: cost(tokens, model, deps.prices).ok(),
        finished_ms: deps.host.now_ms(),
    };
    deps.sink.finish(&footer)?;
    state.archive.footer = Some(footer);
    Ok(state.archive)
}

fn drive<B, E>(mut state: SearchState, deps: &mut SearchDeps<'_, B, E>) -> Result<RunArchive, SearchError>
where
    B: LlmBackend + ?Sized,
    E: Evaluator + ?Sized,
{
    while !state.is_done() {
        if let StepOutcome::Aborted(reason) = step(&mut state, deps)? {
            return finish(state, deps, Some(reason));
        }
    }
    finish(state, deps, None)
}

/// Runs a full search of `cfg.budget_trials` trials on `task`.
///
/// A backend outage ends the run early with an archive whose footer is
/// marked aborted; every other failure is recorded as a trial.
pub fn run_search<B, E>(
    task: &Task,
    cfg: &RunConfig,
    run_id: &str,
    deps: &mut SearchDeps<'_, B, E>,
) -> Result<RunArchive, SearchError>
where
    B: LlmBackend + ?Sized,
    E: Evaluator + ?Sized,
{
    let state = start(task, cfg, run_id, deps)?;
    drive(state, deps)
}

/// Continues a partial run. A complete archive is returned unchanged.
pub fn resume<B, E>(
    archive: RunArchive,
    task: &Task,
    cfg: &RunConfig,
    deps: &mut SearchDeps<'_, B, E>,
) -> Result<RunArchive, SearchError>
where
    B: LlmBackend + ?Sized,
    E: Evaluator + ?Sized,
{
    if archive.header.config != *cfg {
        let detail = if archive.header.config.strategy.name != cfg.strategy.name {
            format!(
                "strategy {} in archive, {} requested",
                archive.header.config.strategy.name, cfg.strategy.name
            )
        } else {
            String::from("run configuration differs from the archived snapshot")
        };
        return Err(SearchError::ResumeConfigMismatch(detail));
    }
    if archive.header.task != *task {
        return Err(SearchError::ResumeConfigMismatch(format!(
            "archive is for task {:?}, not {:?}",
            archive.header.task.id, task.id
        )));
    }
    archive.check().map_err(SearchError::InconsistentArchive)?;
    if archive.is_complete() {
        return Ok(archive);
    }
    cfg.validate().map_err(SearchError::InvalidConfig)?;
    let RunArchive { header, trials, .. } = archive;
    deps.sink.begin(&header, &trials)?;
    let state = SearchState::replay(header, &trials)?;
    drive(state, deps)
}
