mod common;

use evoengineer_core::evaluator::{synthetic_evaluate, EvalConfig, Stage, SyntheticRules};
use evoengineer_core::llm::{cost, PriceTable};
use evoengineer_core::{speedup, CandidateStatus, TokenUsage};
use proptest::prelude::*;

const WORDS: [&str; 8] = ["VALID", "CORRECT", "FAST", "kernel", "x", "VALIDCORRECT", "FASTFAST", "\n"];

/// Code made of marker words and filler, so every synthetic outcome occurs.
fn code() -> impl Strategy<Value = String> {
    proptest::collection::vec(0..WORDS.len(), 1..12)
        .prop_map(|picks| picks.into_iter().map(|i| WORDS[i]).collect::<Vec<_>>().join(" "))
        .prop_filter("blank code is rejected before evaluation", |c| !c.trim().is_empty())
}

fn eval_config() -> impl Strategy<Value = EvalConfig> {
    (1usize..=3, 1u32..200, 0u32..20).prop_map(|(n, runs, warmup)| EvalConfig {
        stages: [Stage::Compile, Stage::Test, Stage::Time][..n].to_vec(),
        timing_runs: runs,
        warmup_runs: warmup,
        ..EvalConfig::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn speedup_is_multiplicative(a in 1e-3f64..1e3, b in 1e-3f64..1e3, c in 1e-3f64..1e3) {
        let lhs = speedup(a, b).unwrap() * speedup(b, c).unwrap();
        let rhs = speedup(a, c).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn cost_is_additive(
        a_in in 0u64..1_000_000_000, a_out in 0u64..1_000_000_000,
        b_in in 0u64..1_000_000_000, b_out in 0u64..1_000_000_000,
        model in prop::sample::select(vec!["GPT-4.1", "DeepSeekV3.1", "Claude-Sonnet-4"]),
    ) {
        let prices = PriceTable::builtin();
        let a = TokenUsage::new(a_in, a_out);
        let b = TokenUsage::new(b_in, b_out);
        let whole = cost(a + b, model, &prices).unwrap();
        let parts = cost(a, model, &prices).unwrap() + cost(b, model, &prices).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-9, "{whole} vs {parts}");
    }

    #[test]
    fn synthetic_results_respect_gating(code in code(), cfg in eval_config(), n_cases in 1u32..10) {
        let rules = SyntheticRules::default();
        let r = synthetic_evaluate(&code, &rules, n_cases, &cfg).unwrap();
        prop_assert_eq!(r.check_gating(), Ok(()));
        if let Some(tests) = &r.tests {
            prop_assert!(r.compile_ok);
            prop_assert!(tests.passed <= tests.total);
        }
        if r.timing.is_some() {
            let tests = r.tests.as_ref().unwrap();
            prop_assert_eq!(tests.passed, tests.total);
            prop_assert!(r.is_valid());
        }
        // Purity.
        prop_assert_eq!(synthetic_evaluate(&code, &rules, n_cases, &cfg).unwrap(), r.clone());
        prop_assert!(synthetic_evaluate(" \n ", &rules, n_cases, &cfg).is_err());
        // Status partition: exactly one terminal status per evaluation.
        let status = CandidateStatus::from_evaluation(&r);
        let matching = CandidateStatus::TERMINAL.iter().filter(|s| **s == status).count();
        prop_assert_eq!(matching, 1);
        prop_assert_eq!(status == CandidateStatus::Valid, r.is_valid());
    }
}
