#![allow(dead_code)]

use evoengineer_core::domain::{Candidate, CandidateStatus, EvaluationResult, TestSummary, TimingStats, TokenUsage};
use evoengineer_core::evaluator::SyntheticEvaluator;
use evoengineer_core::llm::{Backoff, PriceTable, ScriptedBackend, ScriptedCorpus};
use evoengineer_core::orchestrator::{run_search, FixedHost, NullSink, RunArchive, RunConfig};
use evoengineer_core::traverse::{PromptTemplate, StrategyName};
use evoengineer_core::{KernelCategory, Task, TestSpec};

pub const BASELINE_MS: f64 = 100.0;

pub fn task(id: &str) -> Task {
    Task {
        id: id.into(),
        category: KernelCategory::ActivationPooling,
        description: "Add two float vectors elementwise.".into(),
        reference_source: "def forward(a, b):\n    return a + b".into(),
        initial_code: "__global__ void add(float* a, float* b, float* c) {}".into(),
        test_spec: TestSpec::default(),
        baseline_mean_ms: BASELINE_MS,
    }
}

/// Valid candidate with the given mean runtime.
pub fn valid(trial: u32, mean_ms: f64) -> Candidate {
    let code = format!("kernel {trial} {mean_ms}");
    Candidate {
        id: Candidate::make_id(trial, &code),
        code,
        parent_ids: vec![],
        trial_index: trial,
        generation: 0,
        status: CandidateStatus::Valid,
        eval: Some(EvaluationResult {
            compile_ok: true,
            compile_log: String::new(),
            tests: Some(TestSummary {
                passed: 5,
                total: 5,
                max_abs_error: Some(0.0),
            }),
            timing: Some(TimingStats {
                runs: 100,
                warmup_runs: 10,
                mean_ms,
                std_ms: 0.0,
            }),
        }),
        insight: None,
        tokens: TokenUsage::default(),
    }
}

pub fn reply(code: &str, insight: Option<&str>) -> String {
    match insight {
        Some(text) => format!("Here is a faster version.\n```cuda\n{code}\n```\nINSIGHT: {text}\n"),
        None => format!("```cuda\n{code}\n```\n"),
    }
}

pub fn run_scripted(name: StrategyName, corpus: ScriptedCorpus, seed: u64) -> RunArchive {
    let mut cfg = RunConfig::new(name);
    cfg.seed = seed;
    run_with(&cfg, corpus)
}

pub fn run_with(cfg: &RunConfig, corpus: ScriptedCorpus) -> RunArchive {
    let backend = ScriptedBackend::new(corpus);
    let mut evaluator = SyntheticEvaluator::default();
    let mut sink = NullSink;
    let host = FixedHost::default();
    let template = PromptTemplate::bundled();
    let prices = PriceTable::builtin();
    let mut deps = evoengineer_core::orchestrator::SearchDeps {
        backend: &backend,
        evaluator: &mut evaluator,
        sink: &mut sink,
        host: &host,
        template: &template,
        prices: &prices,
        backoff: Backoff::NONE,
    };
    run_search(&task("vec_add"), cfg, "test-run", &mut deps).expect("search runs")
}
