mod common;

use common::task;
use evoengineer_core::domain::{Candidate, CandidateStatus, EvaluationResult, TestSummary, TimingStats, TokenUsage};
use evoengineer_core::llm::PriceTable;
use evoengineer_core::metrics::{
    bucket_distribution, median_speedup, method_report, pass_at_1, raw_speedups, speedup_count,
    substituted_speedups, task_outcome, TaskOutcome, DEFAULT_BUCKET_EDGES,
};
use evoengineer_core::orchestrator::{ArchiveHeader, RunArchive, RunConfig, TrialRecord, ARCHIVE_FORMAT};
use evoengineer_core::traverse::StrategyName;
use evoengineer_core::KernelCategory;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runtimes chosen so that speedups land on and around the bucket edges.
const MEANS: [f64; 10] = [1.0, 2.5, 5.0, 9.0, 10.0, 20.0, 50.0, 99.0, 100.0, 400.0];

fn record(i: u32, status: CandidateStatus, mean_ms: f64) -> TrialRecord {
    let compiled = !matches!(
        status,
        CandidateStatus::CompileError
            | CandidateStatus::ParseError
            | CandidateStatus::EmptyCompletion
            | CandidateStatus::Timeout
            | CandidateStatus::RuntimeError
    );
    let eval = match status {
        CandidateStatus::CompileError => Some(EvaluationResult::compile_failure("error")),
        _ if compiled => {
            let valid = status == CandidateStatus::Valid;
            Some(EvaluationResult {
                compile_ok: true,
                compile_log: String::new(),
                tests: Some(TestSummary {
                    passed: if valid { 5 } else { 2 },
                    total: 5,
                    max_abs_error: Some(if valid { 0.0 } else { 0.5 }),
                }),
                timing: valid.then_some(TimingStats {
                    runs: 100,
                    warmup_runs: 10,
                    mean_ms,
                    std_ms: 0.0,
                }),
            })
        }
        _ => None,
    };
    TrialRecord {
        trial_index: i,
        generation: i,
        candidate: Candidate {
            id: format!("t{i:04}"),
            code: String::from("code"),
            parent_ids: vec![],
            trial_index: i,
            generation: i,
            status,
            eval,
            insight: None,
            tokens: TokenUsage::new(100 + u64::from(i), 50),
        },
        prompt_hash: String::new(),
        attempts: 1,
        latency_ms: 0.0,
        error: None,
        feedback: None,
        raw_reply: None,
        started_ms: 0,
        finished_ms: 0,
    }
}

fn random_archives(seed: u64) -> Vec<RunArchive> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_tasks = rng.random_range(1..12);
    let mut cfg = RunConfig::new(StrategyName::Free);
    cfg.generation_params.model_name = "GPT-4.1".into();
    (0..n_tasks)
        .map(|k| {
            let mut t = task(&format!("task{k}"));
            t.category = KernelCategory::ALL[rng.random_range(0..6)];
            t.baseline_mean_ms = MEANS[rng.random_range(0..MEANS.len())];
            let n_trials = rng.random_range(0..46);
            let valid_bias = rng.random_range(0..10);
            let trials = (0..n_trials)
                .map(|i| {
                    let status = if rng.random_range(0..10) < valid_bias {
                        CandidateStatus::Valid
                    } else {
                        CandidateStatus::TERMINAL[rng.random_range(0..7)]
                    };
                    record(i, status, MEANS[rng.random_range(0..MEANS.len())])
                })
                .collect();
            RunArchive {
                header: ArchiveHeader {
                    format: ARCHIVE_FORMAT.into(),
                    run_id: "r".into(),
                    task: t,
                    config: cfg.clone(),
                    started_ms: 0,
                },
                trials,
                footer: None,
            }
        })
        .collect()
}

fn outcomes(archives: &[RunArchive]) -> Vec<TaskOutcome> {
    let prices = PriceTable::builtin();
    archives.iter().map(|a| task_outcome(a, &prices)).collect()
}

// Brute-force references, written against the raw records.

fn oracle_best(a: &RunArchive) -> Option<f64> {
    let mut best: Option<f64> = None;
    for t in &a.trials {
        if t.candidate.status != CandidateStatus::Valid {
            continue;
        }
        let s = a.header.task.baseline_mean_ms / t.candidate.eval.as_ref().unwrap().timing.as_ref().unwrap().mean_ms;
        if best.is_none() || s > best.unwrap() {
            best = Some(s);
        }
    }
    best
}

fn oracle_median(archives: &[RunArchive]) -> f64 {
    let mut v: Vec<f64> = archives
        .iter()
        .map(|a| match oracle_best(a) {
            Some(s) if s > 1.0 => s,
            _ => 1.0,
        })
        .collect();
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
            }
        }
    }
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn oracle_pass(archives: &[RunArchive]) -> Option<(f64, f64)> {
    let (mut total, mut compiled, mut correct) = (0u64, 0u64, 0u64);
    for a in archives {
        for t in &a.trials {
            total += 1;
            if let Some(e) = &t.candidate.eval {
                if e.compile_ok {
                    compiled += 1;
                    if let Some(tests) = &e.tests {
                        if tests.passed == tests.total {
                            correct += 1;
                        }
                    }
                }
            }
        }
    }
    (total > 0).then(|| (compiled as f64 / total as f64, correct as f64 / total as f64))
}

fn oracle_count(archives: &[RunArchive]) -> usize {
    archives.iter().filter(|a| matches!(oracle_best(a), Some(s) if s > 1.0)).count()
}

fn oracle_buckets(archives: &[RunArchive]) -> Vec<u64> {
    let mut b = vec![0u64; 5];
    for a in archives {
        let s = oracle_best(a).unwrap_or(0.0);
        let i = if s < 1.0 {
            0
        } else if s < 2.0 {
            1
        } else if s < 5.0 {
            2
        } else if s < 10.0 {
            3
        } else {
            4
        };
        b[i] += 1;
    }
    b
}

fn scaled(archives: &[RunArchive], factor: f64) -> Vec<RunArchive> {
    let mut out = archives.to_vec();
    for a in &mut out {
        a.header.task.baseline_mean_ms *= factor;
        for t in &mut a.trials {
            if let Some(timing) = t.candidate.eval.as_mut().and_then(|e| e.timing.as_mut()) {
                timing.mean_ms *= factor;
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_match_brute_force(seed in any::<u64>()) {
        let archives = random_archives(seed);
        let outs = outcomes(&archives);
        for (a, o) in archives.iter().zip(&outs) {
            prop_assert_eq!(o.best_valid_speedup, oracle_best(a));
        }
        prop_assert_eq!(median_speedup(&substituted_speedups(&outs)).unwrap(), oracle_median(&archives));
        match oracle_pass(&archives) {
            Some((compile, functional)) => {
                let p = pass_at_1(&outs).unwrap();
                prop_assert_eq!((p.compile, p.functional), (compile, functional));
                prop_assert!((0.0..=1.0).contains(&p.compile) && (0.0..=1.0).contains(&p.functional));
            }
            None => prop_assert!(pass_at_1(&outs).is_err()),
        }
        prop_assert_eq!(speedup_count(&outs), oracle_count(&archives));
        let buckets = bucket_distribution(&raw_speedups(&outs), &DEFAULT_BUCKET_EDGES).unwrap();
        prop_assert_eq!(buckets.iter().sum::<u64>(), archives.len() as u64);
        prop_assert_eq!(buckets, oracle_buckets(&archives));
        prop_assert!(substituted_speedups(&outs).iter().all(|&s| s >= 1.0));
    }

    #[test]
    fn power_of_two_scaling_changes_nothing(seed in any::<u64>(), exp in -20i32..20) {
        let archives = random_archives(seed);
        if oracle_pass(&archives).is_none() {
            return Ok(());
        }
        let a = method_report("m", &outcomes(&archives), &DEFAULT_BUCKET_EDGES).unwrap();
        let b = method_report("m", &outcomes(&scaled(&archives, 2f64.powi(exp))), &DEFAULT_BUCKET_EDGES).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn arbitrary_scaling_moves_speedups_by_rounding_only(seed in any::<u64>(), factor in 1e-3f64..1e3) {
        let archives = random_archives(seed);
        let before = outcomes(&archives);
        let after = outcomes(&scaled(&archives, factor));
        for (x, y) in before.iter().zip(&after) {
            match (x.best_valid_speedup, y.best_valid_speedup) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0)),
                (x, y) => prop_assert_eq!(x, y),
            }
            prop_assert_eq!(x.trials, y.trials);
        }
    }
}
