//! Reported statistics: best speedup per task, median speedup with the
//! failure floor, Speedup Count, Pass@1 rates, speedup-range histograms,
//! token and cost totals, and averaging over independent runs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{speedup, CandidateStatus, KernelCategory, TokenUsage};
use crate::llm::{cost, PriceTable};
use crate::orchestrator::RunArchive;

/// Upper edges of the default speedup buckets:
/// `<1`, `[1,2)`, `[2,5)`, `[5,10)`, `>=10`.
pub const DEFAULT_BUCKET_EDGES: [f64; 4] = [1.0, 2.0, 5.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    Empty(&'static str),
    AggregationMismatch(String),
    InvalidEdges,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::Empty(what) => write!(f, "{what} is empty"),
            MetricsError::AggregationMismatch(detail) => {
                write!(f, "runs cannot be aggregated: {detail}")
            }
            MetricsError::InvalidEdges => f.write_str("bucket edges must be strictly ascending"),
        }
    }
}

impl core::error::Error for MetricsError {}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub valid: u64,
    pub compile_error: u64,
    pub test_failure: u64,
    pub runtime_error: u64,
    pub timeout: u64,
    pub parse_error: u64,
    pub empty_completion: u64,
    pub pending: u64,
}

impl StatusCounts {
    pub fn record(&mut self, status: CandidateStatus) {
        let slot = match status {
            CandidateStatus::Valid => &mut self.valid,
            CandidateStatus::CompileError => &mut self.compile_error,
            CandidateStatus::TestFailure => &mut self.test_failure,
            CandidateStatus::RuntimeError => &mut self.runtime_error,
            CandidateStatus::Timeout => &mut self.timeout,
            CandidateStatus::ParseError => &mut self.parse_error,
            CandidateStatus::EmptyCompletion => &mut self.empty_completion,
            CandidateStatus::Pending => &mut self.pending,
        };
        *slot += 1;
    }

    pub fn get(&self, status: CandidateStatus) -> u64 {
        match status {
            CandidateStatus::Valid => self.valid,
            CandidateStatus::CompileError => self.compile_error,
            CandidateStatus::TestFailure => self.test_failure,
            CandidateStatus::RuntimeError => self.runtime_error,
            CandidateStatus::Timeout => self.timeout,
            CandidateStatus::ParseError => self.parse_error,
            CandidateStatus::EmptyCompletion => self.empty_completion,
            CandidateStatus::Pending => self.pending,
        }
    }

    /// Every generation attempt, whatever its outcome.
    pub fn attempts(&self) -> u64 {
        self.valid
            + self.compile_error
            + self.test_failure
            + self.runtime_error
            + self.timeout
            + self.parse_error
            + self.empty_completion
            + self.pending
    }
}

/// Per-task summary of one archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub category: KernelCategory,
    pub best_valid_speedup: Option<f64>,
    pub trials: StatusCounts,
    /// Trials whose code compiled.
    pub compiled: u64,
    pub tokens: TokenUsage,
    pub cost_usd: Option<f64>,
}

/// Largest speedup among valid trials, if any.
pub fn best_speedup_per_task(archive: &RunArchive) -> Option<f64> {
    let baseline = archive.task().baseline_mean_ms;
    archive
        .trials
        .iter()
        .filter(|t| t.candidate.status == CandidateStatus::Valid)
        .filter_map(|t| speedup(baseline, t.candidate.mean_ms()?).ok())
        .reduce(f64::max)
}

pub fn task_outcome(archive: &RunArchive, prices: &PriceTable) -> TaskOutcome {
    let mut trials = StatusCounts::default();
    let mut compiled = 0;
    for t in &archive.trials {
        trials.record(t.candidate.status);
        if t.candidate.eval.as_ref().is_some_and(|e| e.compile_ok) {
            compiled += 1;
        }
    }
    let tokens = archive.tokens();
    let model = &archive.header.config.generation_params.model_name;
    TaskOutcome {
        task_id: archive.task().id.clone(),
        category: archive.task().category,
        best_valid_speedup: best_speedup_per_task(archive),
        trials,
        compiled,
        tokens,
        cost_usd: cost(tokens, model, prices).ok(),
    }
}

/// One value per task: the best speedup floored at 1.0, or 1.0 without a
/// valid result.
pub fn substituted_speedups(outcomes: &[TaskOutcome]) -> Vec<f64> {
    outcomes
        .iter()
        .map(|o| o.best_valid_speedup.map_or(1.0, |s| s.max(1.0)))
        .collect()
}

/// Best speedups with absent results mapped to 0.0, for histograms.
pub fn raw_speedups(outcomes: &[TaskOutcome]) -> Vec<f64> {
    outcomes
        .iter()
        .map(|o| o.best_valid_speedup.unwrap_or(0.0))
        .collect()
}

pub fn median_speedup(speedups: &[f64]) -> Result<f64, MetricsError> {
    if speedups.is_empty() {
        return Err(MetricsError::Empty("speedup list"));
    }
    let mut sorted = speedups.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassRates {
    pub compile: f64,
    pub functional: f64,
}

/// Compile and functional success over every generation attempt, including
/// replies that could not be parsed.
pub fn pass_at_1(outcomes: &[TaskOutcome]) -> Result<PassRates, MetricsError> {
    let attempts: u64 = outcomes.iter().map(|o| o.trials.attempts()).sum();
    if attempts == 0 {
        return Err(MetricsError::Empty("trial set"));
    }
    let compiled: u64 = outcomes.iter().map(|o| o.compiled).sum();
    let correct: u64 = outcomes.iter().map(|o| o.trials.valid).sum();
    Ok(PassRates {
        compile: compiled as f64 / attempts as f64,
        functional: correct as f64 / attempts as f64,
    })
}

/// Tasks whose best valid speedup is strictly above 1.0.
pub fn speedup_count(outcomes: &[TaskOutcome]) -> usize {
    outcomes
        .iter()
        .filter(|o| o.best_valid_speedup.is_some_and(|s| s > 1.0))
        .count()
}

/// Histogram over half-open buckets: `(-inf, e0)`, `[e0, e1)`, ...,
/// `[e_last, +inf)`.
pub fn bucket_distribution(speedups: &[f64], edges: &[f64]) -> Result<Vec<u64>, MetricsError> {
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MetricsError::InvalidEdges);
    }
    let mut counts = vec![0u64; edges.len() + 1];
    for &s in speedups {
        let bucket = edges.partition_point(|&e| e <= s);
        counts[bucket] += 1;
    }
    Ok(counts)
}

/// Human-readable bucket labels for `edges`.
pub fn bucket_labels(edges: &[f64]) -> Vec<String> {
    let mut labels = Vec::with_capacity(edges.len() + 1);
    for (i, e) in edges.iter().enumerate() {
        if i == 0 {
            labels.push(format!("<{e:.1}"));
        } else {
            labels.push(format!("{:.1}-{e:.1}", edges[i - 1]));
        }
    }
    match edges.last() {
        Some(last) => labels.push(format!(">={last:.1}")),
        None => labels.push(String::from("all")),
    }
    labels
}

/// Metric values over one group of tasks. Fractional after averaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub tasks: usize,
    pub speedup_count: f64,
    pub median_speedup: f64,
    /// `None` when the group has no recorded trials.
    pub compile_pass1: Option<f64>,
    pub functional_pass1: Option<f64>,
    pub buckets: Vec<f64>,
    pub input_tokens: f64,
    pub output_tokens: f64,
    pub total_cost_usd: Option<f64>,
}

impl MetricsRow {
    fn compute(outcomes: &[&TaskOutcome], edges: &[f64]) -> Result<MetricsRow, MetricsError> {
        let owned: Vec<TaskOutcome> = outcomes.iter().map(|o| (*o).clone()).collect();
        let pass = pass_at_1(&owned).ok();
        let buckets = bucket_distribution(&raw_speedups(&owned), edges)?;
        let tokens: TokenUsage = owned.iter().map(|o| o.tokens).sum();
        let total_cost_usd = owned
            .iter()
            .map(|o| o.cost_usd)
            .try_fold(0.0, |acc, c| c.map(|c| acc + c));
        Ok(MetricsRow {
            tasks: owned.len(),
            speedup_count: speedup_count(&owned) as f64,
            median_speedup: median_speedup(&substituted_speedups(&owned))?,
            compile_pass1: pass.map(|p| p.compile),
            functional_pass1: pass.map(|p| p.functional),
            buckets: buckets.into_iter().map(|c| c as f64).collect(),
            input_tokens: tokens.input_tokens as f64,
            output_tokens: tokens.output_tokens as f64,
            total_cost_usd,
        })
    }

    fn mean(rows: &[&MetricsRow]) -> MetricsRow {
        let n = rows.len() as f64;
        let avg = |f: &dyn Fn(&MetricsRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        let width = rows[0].buckets.len();
        MetricsRow {
            tasks: rows[0].tasks,
            speedup_count: avg(&|r| r.speedup_count),
            median_speedup: avg(&|r| r.median_speedup),
            compile_pass1: mean_present(rows.iter().map(|r| r.compile_pass1)),
            functional_pass1: mean_present(rows.iter().map(|r| r.functional_pass1)),
            buckets: (0..width)
                .map(|i| rows.iter().map(|r| r.buckets[i]).sum::<f64>() / n)
                .collect(),
            input_tokens: avg(&|r| r.input_tokens),
            output_tokens: avg(&|r| r.output_tokens),
            total_cost_usd: rows
                .iter()
                .map(|r| r.total_cost_usd)
                .try_fold(0.0, |acc, c| c.map(|c| acc + c))
                .map(|sum| sum / n),
        }
    }
}

/// Mean of the values that are present.
fn mean_present(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0u32), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / f64::from(n))
}

/// Metrics of one method (configuration + model) over a task set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    /// Sorted ids of the tasks covered.
    pub task_ids: Vec<String>,
    pub edges: Vec<f64>,
    /// Number of independent runs averaged into this report.
    pub runs: usize,
    pub overall: MetricsRow,
    pub categories: BTreeMap<KernelCategory, MetricsRow>,
}

pub fn method_report(
    method: &str,
    outcomes: &[TaskOutcome],
    edges: &[f64],
) -> Result<MethodReport, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty("outcome set"));
    }
    let all: Vec<&TaskOutcome> = outcomes.iter().collect();
    let overall = MetricsRow::compute(&all, edges)?;
    let mut categories = BTreeMap::new();
    for category in KernelCategory::ALL {
        let group: Vec<&TaskOutcome> = outcomes.iter().filter(|o| o.category == category).collect();
        if !group.is_empty() {
            categories.insert(category, MetricsRow::compute(&group, edges)?);
        }
    }
    let mut task_ids: Vec<String> = outcomes.iter().map(|o| o.task_id.clone()).collect();
    task_ids.sort();
    Ok(MethodReport {
        method: String::from(method),
        task_ids,
        edges: edges.to_vec(),
        runs: 1,
        overall,
        categories,
    })
}

/// Element-wise mean of reports from independent runs over the same tasks.
pub fn aggregate_runs(reports: &[MethodReport]) -> Result<MethodReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::Empty("report list"))?;
    for r in &reports[1..] {
        if r.task_ids != first.task_ids {
            return Err(MetricsError::AggregationMismatch(format!(
                "task sets differ ({} vs {} tasks)",
                first.task_ids.len(),
                r.task_ids.len()
            )));
        }
        if r.edges != first.edges {
            return Err(MetricsError::AggregationMismatch(String::from("bucket edges differ")));
        }
    }
    let overall: Vec<&MetricsRow> = reports.iter().map(|r| &r.overall).collect();
    let mut categories = BTreeMap::new();
    for category in first.categories.keys() {
        let rows: Vec<&MetricsRow> = reports.iter().filter_map(|r| r.categories.get(category)).collect();
        categories.insert(*category, MetricsRow::mean(&rows));
    }
    Ok(MethodReport {
        method: first.method.clone(),
        task_ids: first.task_ids.clone(),
        edges: first.edges.clone(),
        runs: reports.iter().map(|r| r.runs).sum(),
        overall: MetricsRow::mean(&overall),
        categories,
    })
}
