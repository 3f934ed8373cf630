//! The search loop: budgeted trials, feedback threading, insight storage,
//! archive persistence and resume.
//!
//! Trials within one task are strictly sequential since each prompt depends
//! on the previous trial's feedback and on the population. Independent tasks
//! may run in parallel, each with its own evaluator and archive.

mod archive;
mod config;
mod insights;
mod search;

pub use archive::{
    ArchiveFooter, ArchiveHeader, ArchiveLine, PopulationEntry, RunArchive, TrialRecord, ARCHIVE_FORMAT,
};
pub use config::{RunConfig, Schedule};
pub use insights::InsightStore;
pub use search::{
    feedback_for, finish, resume, run_search, start, step, ArchiveSink, FixedHost, Host, NullSink,
    SearchDeps, SearchError, SearchState, SinkError, StepOutcome,
};
