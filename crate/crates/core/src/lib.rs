//! Core of an LLM-driven evolutionary optimizer for performance-critical code.
//!
//! The search decomposes into two orthogonal parts:
//!
//! * a *traverse technique* ([`traverse`]) that decides which closed-world
//!   information goes into a prompt (task context, historical solutions,
//!   optimization insights) and renders it, and
//! * a *population management* strategy ([`population`]) that decides which
//!   valid candidates survive.
//!
//! Candidates are judged by a staged evaluation (compile, functional tests,
//! timing). Only candidates that pass every stage are feasible; their fitness
//! is the speedup over the task baseline.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! processes or the network lives behind the [`llm::LlmBackend`],
//! [`evaluator::Evaluator`], [`orchestrator::ArchiveSink`] and
//! [`orchestrator::Host`] traits and is implemented by the `evoengineer`
//! companion crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod domain;
pub mod evaluator;
pub mod hash;
pub mod llm;
pub mod metrics;
pub mod orchestrator;
pub mod population;
pub mod traverse;

pub use domain::{
    is_valid, speedup, validate_task, validate_task_set, Candidate, CandidateStatus, DomainError,
    EvaluationResult, Insight, KernelCategory, Task, TestSpec, TestSummary, TimingStats,
    TokenUsage,
};
