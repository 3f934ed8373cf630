//! Aggregated reports over a directory of archives.
//!
//! Archives are grouped into methods (strategy and model) and, within a
//! method, into runs by run id. Each run is summarized on its own and the
//! runs are then averaged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use evoengineer_core::llm::PriceTable;
use evoengineer_core::metrics::{
    aggregate_runs, bucket_labels, method_report, task_outcome, MethodReport, MetricsError, MetricsRow, TaskOutcome,
    DEFAULT_BUCKET_EDGES,
};
use evoengineer_core::orchestrator::RunArchive;

use crate::archive_io::{find_archives, read_archive};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no readable archives under {0}")]
    NoArchives(PathBuf),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("writing {path}: {message}")]
    Write { path: PathBuf, message: String },
}

/// Readable archives under `dir`, plus one warning per skipped or
/// incomplete file.
pub fn load_archives(dir: &Path) -> Result<(Vec<RunArchive>, Vec<String>), ReportError> {
    let paths = find_archives(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut archives = Vec::new();
    let mut warnings = Vec::new();
    for path in paths {
        match read_archive(&path) {
            Ok(loaded) => {
                let a = &loaded.archive;
                if loaded.truncated_tail {
                    warnings.push(format!("{}: ignored a cut-off final line", path.display()));
                }
                if !a.is_complete() {
                    warnings.push(format!(
                        "{}: run {} ({} of {} trials)",
                        path.display(),
                        if a.is_aborted() { "aborted" } else { "unfinished" },
                        a.trials.len(),
                        a.header.config.budget_trials
                    ));
                }
                archives.push(loaded.archive);
            }
            Err(e) => warnings.push(format!("{}: skipped: {e}", path.display())),
        }
    }
    if archives.is_empty() {
        return Err(ReportError::NoArchives(dir.to_path_buf()));
    }
    Ok((archives, warnings))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_id: String,
    pub outcomes: Vec<TaskOutcome>,
    pub report: MethodReport,
}

#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: String,
    pub runs: Vec<RunSummary>,
    pub mean: MethodReport,
}

pub fn method_name(archive: &RunArchive) -> String {
    let cfg = &archive.header.config;
    format!("{}/{}", cfg.strategy.name, cfg.generation_params.model_name)
}

/// Summaries per method. Runs of one method are compared on the tasks they
/// all cover; tasks missing from some run are dropped with a warning.
pub fn summarize(archives: &[RunArchive], prices: &PriceTable) -> Result<(Vec<MethodSummary>, Vec<String>), ReportError> {
    let mut by_method: BTreeMap<String, BTreeMap<String, Vec<&RunArchive>>> = BTreeMap::new();
    for a in archives {
        by_method
            .entry(method_name(a))
            .or_default()
            .entry(a.header.run_id.clone())
            .or_default()
            .push(a);
    }
    let mut warnings = Vec::new();
    let mut summaries = Vec::new();
    for (method, runs) in by_method {
        let task_sets: Vec<BTreeSet<&str>> = runs
            .values()
            .map(|v| v.iter().map(|a| a.header.task.id.as_str()).collect())
            .collect();
        let shared: BTreeSet<&str> = task_sets
            .iter()
            .skip(1)
            .fold(task_sets[0].clone(), |acc, s| acc.intersection(s).copied().collect());
        let all: BTreeSet<&str> = task_sets.iter().flatten().copied().collect();
        if shared.len() != all.len() {
            let dropped: Vec<&str> = all.difference(&shared).copied().collect();
            warnings.push(format!(
                "{method}: tasks not present in every run are left out: {}",
                dropped.join(", ")
            ));
        }
        if shared.is_empty() {
            warnings.push(format!("{method}: no task is shared by all runs; method skipped"));
            continue;
        }
        let mut run_summaries = Vec::new();
        for (run_id, members) in &runs {
            let mut outcomes: Vec<TaskOutcome> = members
                .iter()
                .filter(|a| shared.contains(a.header.task.id.as_str()))
                .map(|a| task_outcome(a, prices))
                .collect();
            outcomes.sort_by(|a, b| a.task_id.cmp(&b.task_id));
            let report = method_report(&method, &outcomes, &DEFAULT_BUCKET_EDGES)?;
            run_summaries.push(RunSummary {
                run_id: run_id.clone(),
                outcomes,
                report,
            });
        }
        let reports: Vec<MethodReport> = run_summaries.iter().map(|r| r.report.clone()).collect();
        summaries.push(MethodSummary {
            method,
            mean: aggregate_runs(&reports)?,
            runs: run_summaries,
        });
    }
    Ok((summaries, warnings))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// (scope label, per-run rows, mean row) for every category present, then
/// the overall row.
fn scopes(m: &MethodSummary) -> Vec<(String, Vec<&MetricsRow>, &MetricsRow)> {
    let mut out = Vec::new();
    for (category, mean) in &m.mean.categories {
        let per_run = m.runs.iter().filter_map(|r| r.report.categories.get(category)).collect();
        out.push((category.to_string(), per_run, mean));
    }
    let per_run = m.runs.iter().map(|r| &r.report.overall).collect();
    out.push(("overall".to_string(), per_run, &m.mean.overall));
    out
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, ReportError> {
    csv::Writer::from_path(path).map_err(|e| ReportError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `summary.csv`, `buckets.csv` and `tokens.csv` into `dir`.
pub fn write_csv(dir: &Path, methods: &[MethodSummary]) -> Result<Vec<PathBuf>, ReportError> {
    let summary_path = dir.join("summary.csv");
    let buckets_path = dir.join("buckets.csv");
    let tokens_path = dir.join("tokens.csv");
    let wrap = |path: &Path| {
        let path = path.to_path_buf();
        move |e: csv::Error| ReportError::Write {
            path: path.clone(),
            message: e.to_string(),
        }
    };

    let mut w = csv_writer(&summary_path)?;
    w.write_record([
        "method",
        "category",
        "runs",
        "tasks",
        "speedup_count",
        "speedup_count_per_run",
        "median_speedup",
        "compile_pass1",
        "functional_pass1",
        "input_tokens",
        "output_tokens",
        "cost_usd",
    ])
    .map_err(wrap(&summary_path))?;
    for m in methods {
        for (scope, per_run, mean) in scopes(m) {
            let counts: Vec<String> = per_run.iter().map(|r| r.speedup_count.to_string()).collect();
            w.write_record([
                m.method.clone(),
                scope,
                m.mean.runs.to_string(),
                mean.tasks.to_string(),
                mean.speedup_count.to_string(),
                counts.join(";"),
                mean.median_speedup.to_string(),
                opt(mean.compile_pass1),
                opt(mean.functional_pass1),
                mean.input_tokens.to_string(),
                mean.output_tokens.to_string(),
                opt(mean.total_cost_usd),
            ])
            .map_err(wrap(&summary_path))?;
        }
    }
    w.flush().map_err(|e| wrap(&summary_path)(e.into()))?;

    let mut w = csv_writer(&buckets_path)?;
    w.write_record(["method", "category", "bucket", "mean_count", "count_per_run"])
        .map_err(wrap(&buckets_path))?;
    for m in methods {
        let labels = bucket_labels(&m.mean.edges);
        for (scope, per_run, mean) in scopes(m) {
            for (i, label) in labels.iter().enumerate() {
                let counts: Vec<String> = per_run.iter().map(|r| r.buckets[i].to_string()).collect();
                w.write_record([
                    m.method.clone(),
                    scope.clone(),
                    label.clone(),
                    mean.buckets[i].to_string(),
                    counts.join(";"),
                ])
                .map_err(wrap(&buckets_path))?;
            }
        }
    }
    w.flush().map_err(|e| wrap(&buckets_path)(e.into()))?;

    let mut w = csv_writer(&tokens_path)?;
    w.write_record(["method", "run_id", "task_id", "input_tokens", "output_tokens", "cost_usd"])
        .map_err(wrap(&tokens_path))?;
    for m in methods {
        for run in &m.runs {
            for o in &run.outcomes {
                w.write_record([
                    m.method.clone(),
                    run.run_id.clone(),
                    o.task_id.clone(),
                    o.tokens.input_tokens.to_string(),
                    o.tokens.output_tokens.to_string(),
                    opt(o.cost_usd),
                ])
                .map_err(wrap(&tokens_path))?;
            }
        }
    }
    w.flush().map_err(|e| wrap(&tokens_path)(e.into()))?;
    Ok(vec![summary_path, buckets_path, tokens_path])
}

fn fmt_opt(v: Option<f64>, scale: f64, digits: usize) -> String {
    v.map(|x| format!("{:.*}", digits, x * scale)).unwrap_or_else(|| "n/a".into())
}

pub fn render_markdown(methods: &[MethodSummary], warnings: &[String]) -> String {
    let mut md = String::from("# Optimization report\n");
    for m in methods {
        let _ = write!(
            md,
            "\n## {}\n\n{} run(s), {} task(s).\n\n",
            m.method,
            m.mean.runs,
            m.mean.task_ids.len()
        );
        md.push_str("| Category | Tasks | Speedup count | Median speedup | Compile Pass@1 (%) | Functional Pass@1 (%) |\n");
        md.push_str("|---|---:|---:|---:|---:|---:|\n");
        for (scope, _, row) in scopes(m) {
            let _ = writeln!(
                md,
                "| {} | {} | {:.2} | {:.2}x | {} | {} |",
                scope,
                row.tasks,
                row.speedup_count,
                row.median_speedup,
                fmt_opt(row.compile_pass1, 100.0, 1),
                fmt_opt(row.functional_pass1, 100.0, 1)
            );
        }
        let labels = bucket_labels(&m.mean.edges);
        md.push_str("\nBest speedup per task, by range (mean task count over runs):\n\n|");
        for l in &labels {
            let _ = write!(md, " {l} |");
        }
        md.push_str("\n|");
        md.push_str(&"---:|".repeat(labels.len()));
        md.push_str("\n|");
        for c in &m.mean.overall.buckets {
            let _ = write!(md, " {c:.2} |");
        }
        let o = &m.mean.overall;
        let _ = write!(
            md,
            "\n\nTokens per run: {:.0} input, {:.0} output; cost {}.\n",
            o.input_tokens,
            o.output_tokens,
            o.total_cost_usd
                .map(|c| format!("${c:.2}"))
                .unwrap_or_else(|| "unknown (no price for this model)".into())
        );
    }
    if !warnings.is_empty() {
        md.push_str("\n## Warnings\n\n");
        for w in warnings {
            let _ = writeln!(md, "- {w}");
        }
    }
    md
}

pub fn write_markdown(dir: &Path, methods: &[MethodSummary], warnings: &[String]) -> Result<PathBuf, ReportError> {
    let path = dir.join("report.md");
    fs::write(&path, render_markdown(methods, warnings)).map_err(|e| ReportError::Write {
        path: path.clone(),
        message: e.to_string(),
    })?;
    Ok(path)
}
