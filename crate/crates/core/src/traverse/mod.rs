//! Traverse techniques: choosing what goes into a prompt and talking to the
//! model.
//!
//! The solution-guiding layer ([`build_context`]) selects closed-world
//! information according to a [`StrategyConfig`]:
//!
//! | name       | task context | historical solutions | insights | population  |
//! |------------|:------------:|:--------------------:|:--------:|-------------|
//! | `Free`     | yes          | no                   | no       | single best |
//! | `Insight`  | yes          | no                   | yes      | single best |
//! | `Solution` | yes          | yes                  | no       | elite       |
//! | `Full`     | yes          | yes                  | yes      | elite       |
//!
//! The prompt-engineering layer ([`render_prompt`], [`parse_response`])
//! turns a [`PromptContext`] into text and a reply back into code.

mod parse;
mod render;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::Task;
use crate::orchestrator::InsightStore;
use crate::population::{Population, PopulationConfig, PopulationStrategy};

pub use parse::{parse_response, ParseError, ParsedOutput, INSIGHT_MARKER};
pub use render::{
    render_prompt, PromptTemplate, Section, TemplateError, DEFAULT_TEMPLATE, HISTORY_HEADER,
    INSIGHTS_HEADER, OUTPUT_FORMAT_HEADER, TASK_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    Free,
    Insight,
    Solution,
    Full,
}

impl StrategyName {
    pub const ALL: [StrategyName; 4] = [
        StrategyName::Free,
        StrategyName::Insight,
        StrategyName::Solution,
        StrategyName::Full,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::Free => "free",
            StrategyName::Insight => "insight",
            StrategyName::Solution => "solution",
            StrategyName::Full => "full",
        }
    }

    /// (historical solutions, insights) switched on for this configuration.
    pub fn information(self) -> (bool, bool) {
        match self {
            StrategyName::Free => (false, false),
            StrategyName::Insight => (false, true),
            StrategyName::Solution => (true, false),
            StrategyName::Full => (true, true),
        }
    }

    pub fn population_strategy(self) -> PopulationStrategy {
        match self {
            StrategyName::Free | StrategyName::Insight => PopulationStrategy::SingleBest,
            StrategyName::Solution | StrategyName::Full => PopulationStrategy::Elite,
        }
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "free" => Ok(StrategyName::Free),
            "insight" => Ok(StrategyName::Insight),
            "solution" | "eoh" => Ok(StrategyName::Solution),
            "full" => Ok(StrategyName::Full),
            other => Err(format!(
                "unknown strategy {other:?} (expected free, insight, solution or full)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub name: StrategyName,
    pub use_task_context: bool,
    pub use_history: bool,
    pub use_insights: bool,
    pub history_n: usize,
    pub insights_n: usize,
    pub population: PopulationConfig,
}

impl StrategyConfig {
    pub fn new(name: StrategyName) -> Self {
        let (use_history, use_insights) = name.information();
        let population = match name.population_strategy() {
            PopulationStrategy::Elite => PopulationConfig::elite(4),
            _ => PopulationConfig::single_best(),
        };
        StrategyConfig {
            name,
            use_task_context: true,
            use_history,
            use_insights,
            history_n: if use_history { 4 } else { 0 },
            insights_n: if use_insights { 3 } else { 0 },
            population,
        }
    }

    /// Checks that the switches match the named configuration.
    pub fn validate(&self) -> Result<(), String> {
        let (history, insights) = self.name.information();
        if !self.use_task_context {
            return Err(String::from("task context is required by every configuration"));
        }
        if self.use_history != history || self.use_insights != insights {
            return Err(format!(
                "configuration {} requires use_history={history} and use_insights={insights}",
                self.name
            ));
        }
        if self.population.strategy != self.name.population_strategy() {
            return Err(format!(
                "configuration {} requires the {:?} population strategy",
                self.name,
                self.name.population_strategy()
            ));
        }
        self.population.validate().map_err(|e| format!("{e}"))
    }
}

/// One historical solution shown to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub candidate_id: String,
    pub code: String,
    pub fitness: f64,
}

/// Information selected for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    /// Description, reference, code to improve and last feedback.
    pub task_section: String,
    pub history_section: Option<Vec<HistoryEntry>>,
    /// Oldest first.
    pub insight_section: Option<Vec<String>>,
    /// Candidate whose code sits in the task section, if any.
    pub incumbent_id: Option<String>,
}

impl PromptContext {
    /// Ids of the solutions the next candidate is derived from.
    pub fn parent_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.incumbent_id.iter().cloned().collect();
        for entry in self.history_section.iter().flatten() {
            if !ids.contains(&entry.candidate_id) {
                ids.push(entry.candidate_id.clone());
            }
        }
        ids
    }
}

/// Search state visible to the solution-guiding layer.
#[derive(Debug, Clone, Copy)]
pub struct SearchView<'a> {
    pub population: &'a Population,
    pub insights: &'a InsightStore,
    pub last_feedback: Option<&'a str>,
    pub trial_index: u32,
    /// Initialization trials start from the initial code and see no
    /// historical solutions, even when the configuration uses them.
    pub cold_start: bool,
}

/// Selects closed-world information for the next prompt.
pub fn build_context(cfg: &StrategyConfig, task: &Task, view: SearchView<'_>) -> PromptContext {
    let incumbent = if view.cold_start {
        None
    } else {
        view.population.incumbent()
    };

    let mut task_section = String::new();
    task_section.push_str(TASK_HEADER);
    task_section.push('\n');
    task_section.push_str(task.description.trim_end());
    task_section.push_str(&format!(
        "\n\nTask id: {} (category: {})\n",
        task.id, task.category
    ));
    if !task.reference_source.trim().is_empty() {
        task_section.push_str("\n### Reference Implementation\n```\n");
        task_section.push_str(task.reference_source.trim_end());
        task_section.push_str("\n```\n");
    }
    match incumbent {
        Some(best) => {
            task_section.push_str(&format!(
                "\n### Current Best Code (speedup {:.3}x over baseline)\n```\n",
                best.fitness
            ));
            task_section.push_str(best.candidate.code.trim_end());
        }
        None => {
            task_section.push_str("\n### Current Code (initial implementation)\n```\n");
            task_section.push_str(task.initial_code.trim_end());
        }
    }
    task_section.push_str("\n```\n");
    if let Some(feedback) = view.last_feedback {
        task_section.push_str("\n### Feedback From Previous Trial\n");
        task_section.push_str(feedback.trim_end());
        task_section.push('\n');
    }

    let history_section = cfg.use_history.then(|| {
        if view.cold_start {
            return Vec::new();
        }
        view.population
            .context_solutions(cfg.history_n, view.trial_index)
            .into_iter()
            .map(|m| HistoryEntry {
                candidate_id: m.candidate.id.clone(),
                code: m.candidate.code.clone(),
                fitness: m.fitness,
            })
            .collect()
    });

    let insight_section = cfg
        .use_insights
        .then(|| view.insights.recent(cfg.insights_n).map(|i| i.text.clone()).collect());

    PromptContext {
        task_section,
        history_section,
        insight_section,
        incumbent_id: incumbent.map(|m| m.candidate.id.clone()),
    }
}
