mod common;

use common::{reply, task, valid, BASELINE_MS};
use evoengineer_core::orchestrator::InsightStore;
use evoengineer_core::population::{Population, PopulationStrategy};
use evoengineer_core::traverse::{
    build_context, parse_response, render_prompt, PromptTemplate, SearchView, StrategyConfig, StrategyName,
    HISTORY_HEADER, INSIGHTS_HEADER, TASK_HEADER,
};
use evoengineer_core::Insight;
use proptest::prelude::*;

fn prompt_for(name: StrategyName, trial_index: u32, cold_start: bool, feedback: Option<&str>) -> String {
    let cfg = StrategyConfig::new(name);
    let mut population = Population::new(cfg.population.clone(), BASELINE_MS).unwrap();
    for (t, ms) in [(0, 50.0), (1, 25.0), (2, 80.0)] {
        population.insert(valid(t, ms)).unwrap();
    }
    let mut insights = InsightStore::new(10);
    insights.push(Insight {
        text: "coalesce global loads".into(),
        source_candidate: "t0001-x".into(),
        fitness_at_creation: Some(4.0),
    });
    let ctx = build_context(
        &cfg,
        &task("vec_add"),
        SearchView {
            population: &population,
            insights: &insights,
            last_feedback: feedback,
            trial_index,
            cold_start,
        },
    );
    render_prompt(&ctx, &PromptTemplate::bundled())
}

#[test]
fn information_matrix_matches_table() {
    // (configuration, history, insights, population)
    let table = [
        (StrategyName::Free, false, false, PopulationStrategy::SingleBest),
        (StrategyName::Insight, false, true, PopulationStrategy::SingleBest),
        (StrategyName::Solution, true, false, PopulationStrategy::Elite),
        (StrategyName::Full, true, true, PopulationStrategy::Elite),
    ];
    for (name, history, insights, population) in table {
        assert_eq!(StrategyConfig::new(name).population.strategy, population, "{name}");
        for cold_start in [false, true] {
            let prompt = prompt_for(name, 3, cold_start, Some("compile error: x"));
            assert!(prompt.contains(TASK_HEADER), "{name}");
            assert_eq!(prompt.contains(HISTORY_HEADER), history, "{name} history");
            assert_eq!(prompt.contains(INSIGHTS_HEADER), insights, "{name} insights");
            assert_eq!(prompt.contains("INSIGHT:"), insights, "{name} output format");
            assert!(prompt.contains("compile error: x"), "{name} feedback");
        }
    }
}

#[test]
fn incumbent_code_sits_in_task_section() {
    let prompt = prompt_for(StrategyName::Free, 3, false, None);
    let task_part = &prompt[prompt.find(TASK_HEADER).unwrap()..];
    assert!(task_part.contains("kernel 1 25"));
    assert!(task_part.contains("Current Best Code (speedup 4.000x"));
    let cold = prompt_for(StrategyName::Full, 3, true, None);
    assert!(cold.contains("Current Code (initial implementation)"));
    assert!(!cold.contains("kernel 1 25"));
}

#[test]
fn rendering_is_pure() {
    for name in StrategyName::ALL {
        assert_eq!(prompt_for(name, 7, false, Some("f")), prompt_for(name, 7, false, Some("f")));
    }
}

fn code_text() -> impl Strategy<Value = String> {
    proptest::collection::vec("[ a-zA-Z0-9_(){};=+*<>\\[\\]]{0,30}[a-zA-Z0-9;}]", 1..8).prop_map(|l| l.join("\n"))
}

fn insight_text() -> impl Strategy<Value = String> {
    proptest::collection::vec("[A-Za-z][A-Za-z0-9 ,.]{0,40}[A-Za-z0-9.]", 1..3).prop_map(|l| l.join("\n"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn parse_inverts_reply_rendering(code in code_text(), insight in proptest::option::of(insight_text())) {
        let parsed = parse_response(&reply(&code, insight.as_deref())).unwrap();
        prop_assert_eq!(parsed.code, code);
        prop_assert_eq!(parsed.insight, insight);
    }
}
