use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::domain::{Candidate, CandidateStatus, Task, TokenUsage};

pub const ARCHIVE_FORMAT: &str = "evoarchive/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub format: String,
    pub run_id: String,
    pub task: Task,
    pub config: RunConfig,
    pub started_ms: u64,
}

/// One generation attempt and its evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u32,
    pub generation: u32,
    pub candidate: Candidate,
    /// SHA-256 of the rendered prompt.
    pub prompt_hash: String,
    pub attempts: u32,
    pub latency_ms: f64,
    /// Why the trial failed, when it did.
    pub error: Option<String>,
    /// Feedback handed to the next trial.
    pub feedback: Option<String>,
    /// Raw reply, kept only when no code could be extracted from it.
    pub raw_reply: Option<String>,
    pub started_ms: u64,
    pub finished_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub island: usize,
    pub candidate_id: String,
    pub trial_index: u32,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveFooter {
    pub trials_used: u32,
    pub aborted: bool,
    pub abort_reason: Option<String>,
    pub final_population: Vec<PopulationEntry>,
    pub tokens: TokenUsage,
    /// `None` when the model has no known price.
    pub cost_usd: Option<f64>,
    pub finished_ms: u64,
}

/// One line of an archive file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArchiveLine {
    Header(ArchiveHeader),
    Trial(TrialRecord),
    Footer(ArchiveFooter),
}

/// Append-only log of one search over one task.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArchive {
    pub header: ArchiveHeader,
    pub trials: Vec<TrialRecord>,
    /// Present once the run finished or aborted.
    pub footer: Option<ArchiveFooter>,
}

impl RunArchive {
    pub fn new(header: ArchiveHeader) -> Self {
        RunArchive {
            header,
            trials: Vec::new(),
            footer: None,
        }
    }

    pub fn task(&self) -> &Task {
        &self.header.task
    }

    pub fn is_complete(&self) -> bool {
        self.footer.as_ref().is_some_and(|f| !f.aborted)
    }

    pub fn is_aborted(&self) -> bool {
        self.footer.as_ref().is_some_and(|f| f.aborted)
    }

    pub fn trials_used(&self) -> u32 {
        self.trials.len() as u32
    }

    pub fn tokens(&self) -> TokenUsage {
        self.trials.iter().map(|t| t.candidate.tokens).sum()
    }

    pub fn count(&self, status: CandidateStatus) -> usize {
        self.trials
            .iter()
            .filter(|t| t.candidate.status == status)
            .count()
    }

    /// Lines in file order.
    pub fn lines(&self) -> Vec<ArchiveLine> {
        let mut lines = Vec::with_capacity(self.trials.len() + 2);
        lines.push(ArchiveLine::Header(self.header.clone()));
        lines.extend(self.trials.iter().cloned().map(ArchiveLine::Trial));
        if let Some(footer) = &self.footer {
            lines.push(ArchiveLine::Footer(footer.clone()));
        }
        lines
    }

    /// Checks the structural invariants: contiguous trial indices, budget,
    /// and statuses consistent with stored evaluations.
    pub fn check(&self) -> Result<(), String> {
        for (i, t) in self.trials.iter().enumerate() {
            if t.trial_index as usize != i || t.candidate.trial_index as usize != i {
                return Err(alloc::format!("trial {i} recorded with index {}", t.trial_index));
            }
            for parent in &t.candidate.parent_ids {
                let earlier = self.trials[..i].iter().any(|p| &p.candidate.id == parent);
                if !earlier {
                    return Err(alloc::format!("trial {i} names unknown parent {parent}"));
                }
            }
            if let Some(eval) = &t.candidate.eval {
                if let Err(e) = eval.check_gating() {
                    return Err(alloc::format!("trial {i}: {e}"));
                }
                let implied = CandidateStatus::from_evaluation(eval);
                if t.candidate.status != implied && t.candidate.status != CandidateStatus::RuntimeError {
                    return Err(alloc::format!(
                        "trial {i}: status {} contradicts its evaluation",
                        t.candidate.status.as_str()
                    ));
                }
            } else if t.candidate.status == CandidateStatus::Valid {
                return Err(alloc::format!("trial {i}: valid without an evaluation"));
            }
        }
        if self.trials_used() > self.header.config.budget_trials {
            return Err(alloc::format!(
                "{} trials exceed the budget of {}",
                self.trials.len(),
                self.header.config.budget_trials
            ));
        }
        Ok(())
    }
}
