use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::PromptContext;

pub const TASK_HEADER: &str = "## Task";
pub const HISTORY_HEADER: &str = "## Historical Solutions";
pub const INSIGHTS_HEADER: &str = "## Optimization Insights";
pub const OUTPUT_FORMAT_HEADER: &str = "## Output Format";

/// Bundled template (version 1).
pub const DEFAULT_TEMPLATE: &str = include_str!("../../templates/prompt_v1.txt");

/// Named placeholder in a prompt template, written `{{name}}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Section {
    Task,
    History,
    Insights,
    OutputFormat,
}

impl Section {
    fn from_name(name: &str) -> Option<Section> {
        match name {
            "task" => Some(Section::Task),
            "history" => Some(Section::History),
            "insights" => Some(Section::Insights),
            "output_format" => Some(Section::OutputFormat),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateError {
    UnknownPlaceholder(String),
    Unclosed { offset: usize },
    Duplicate(String),
    /// Sections must appear as task, history, insights, output_format.
    OutOfOrder(String),
}

impl fmt::Display for TemplateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateError::UnknownPlaceholder(name) => write!(
                f,
                "unknown placeholder {{{{{name}}}}} (allowed: task, history, insights, output_format)"
            ),
            TemplateError::Unclosed { offset } => {
                write!(f, "unclosed placeholder starting at byte {offset}")
            }
            TemplateError::Duplicate(name) => write!(f, "placeholder {{{{{name}}}}} used twice"),
            TemplateError::OutOfOrder(name) => write!(
                f,
                "placeholder {{{{{name}}}}} is out of order (expected task, history, insights, output_format)"
            ),
        }
    }
}

impl core::error::Error for TemplateError {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(Section),
}

/// A parsed prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    segments: Vec<Segment>,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut last: Option<Section> = None;
        let mut rest = text;
        let mut consumed = 0;
        while let Some(open) = rest.find("{{") {
            if open > 0 {
                segments.push(Segment::Literal(String::from(&rest[..open])));
            }
            let after = &rest[open + 2..];
            let close = after.find("}}").ok_or(TemplateError::Unclosed {
                offset: consumed + open,
            })?;
            let name = after[..close].trim();
            let section = Section::from_name(name)
                .ok_or_else(|| TemplateError::UnknownPlaceholder(String::from(name)))?;
            match last {
                Some(prev) if prev == section => {
                    return Err(TemplateError::Duplicate(String::from(name)))
                }
                Some(prev) if prev > section => {
                    return Err(TemplateError::OutOfOrder(String::from(name)))
                }
                _ => {}
            }
            last = Some(section);
            segments.push(Segment::Slot(section));
            let advance = open + 2 + close + 2;
            consumed += advance;
            rest = &rest[advance..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Literal(String::from(rest)));
        }
        Ok(PromptTemplate { segments })
    }

    pub fn bundled() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("bundled template is well formed")
    }

    pub fn sections(&self) -> impl Iterator<Item = Section> + '_ {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(section) => Some(*section),
            Segment::Literal(_) => None,
        })
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::bundled()
    }
}

/// Renders `ctx` through `template`. Absent sections render as nothing.
pub fn render_prompt(ctx: &PromptContext, template: &PromptTemplate) -> String {
    let mut out = String::new();
    for segment in &template.segments {
        match segment {
            Segment::Literal(text) => out.push_str(text),
            Segment::Slot(Section::Task) => {
                out.push_str(ctx.task_section.trim_end());
                out.push_str("\n\n");
            }
            Segment::Slot(Section::History) => {
                if let Some(history) = &ctx.history_section {
                    out.push_str(HISTORY_HEADER);
                    out.push('\n');
                    if history.is_empty() {
                        out.push_str("No valid solutions have been recorded yet.\n");
                    }
                    for (i, entry) in history.iter().enumerate() {
                        out.push_str(&format!(
                            "\n### Solution {} (speedup {:.3}x over baseline)\n```\n{}\n```\n",
                            i + 1,
                            entry.fitness,
                            entry.code.trim_end()
                        ));
                    }
                    out.push('\n');
                }
            }
            Segment::Slot(Section::Insights) => {
                if let Some(insights) = &ctx.insight_section {
                    out.push_str(INSIGHTS_HEADER);
                    out.push('\n');
                    if insights.is_empty() {
                        out.push_str("No insights have been recorded yet.\n");
                    }
                    for (i, text) in insights.iter().enumerate() {
                        out.push_str(&format!("{}. {}\n", i + 1, text.trim()));
                    }
                    out.push('\n');
                }
            }
            Segment::Slot(Section::OutputFormat) => {
                out.push_str(OUTPUT_FORMAT_HEADER);
                out.push('\n');
                out.push_str(
                    "Reply with the complete new implementation inside a single fenced code block (```).\n",
                );
                if ctx.insight_section.is_some() {
                    out.push_str(
                        "After the code block, write one line that starts with `INSIGHT:` and states the key optimization idea behind this version.\n",
                    );
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traverse::HistoryEntry;
    use alloc::vec;

    fn ctx(history: Option<Vec<HistoryEntry>>, insights: Option<Vec<String>>) -> PromptContext {
        PromptContext {
            task_section: String::from("## Task\nmake it fast\n"),
            history_section: history,
            insight_section: insights,
            incumbent_id: None,
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let t = PromptTemplate::bundled();
        let c = ctx(None, Some(vec![String::from("a")]));
        assert_eq!(render_prompt(&c, &t), render_prompt(&c, &t));
    }

    #[test]
    fn absent_history_has_no_header() {
        let out = render_prompt(&ctx(None, None), &PromptTemplate::bundled());
        assert!(!out.contains(HISTORY_HEADER));
        assert!(!out.contains(INSIGHTS_HEADER));
        assert!(!out.contains("INSIGHT:"));
        assert!(out.contains("make it fast"));
        assert!(out.contains(OUTPUT_FORMAT_HEADER));
    }

    #[test]
    fn insights_render_most_recent_last() {
        let c = ctx(None, Some(vec![String::from("older idea"), String::from("newer idea")]));
        let out = render_prompt(&c, &PromptTemplate::bundled());
        let older = out.find("older idea").unwrap();
        let newer = out.find("newer idea").unwrap();
        assert!(older < newer);
        assert!(out.contains("INSIGHT:"));
    }

    #[test]
    fn sections_keep_fixed_order() {
        let c = ctx(
            Some(vec![HistoryEntry {
                candidate_id: String::from("t1"),
                code: String::from("HIST"),
                fitness: 2.0,
            }]),
            Some(vec![String::from("INS")]),
        );
        let out = render_prompt(&c, &PromptTemplate::bundled());
        let positions = [
            out.find(TASK_HEADER).unwrap(),
            out.find(HISTORY_HEADER).unwrap(),
            out.find(INSIGHTS_HEADER).unwrap(),
            out.find(OUTPUT_FORMAT_HEADER).unwrap(),
        ];
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(out.contains("speedup 2.000x"));
    }

    #[test]
    fn template_errors() {
        assert_eq!(
            PromptTemplate::parse("{{task}} {{examples}}"),
            Err(TemplateError::UnknownPlaceholder(String::from("examples")))
        );
        assert!(matches!(
            PromptTemplate::parse("{{task"),
            Err(TemplateError::Unclosed { .. })
        ));
        assert_eq!(
            PromptTemplate::parse("{{history}}{{task}}"),
            Err(TemplateError::OutOfOrder(String::from("task")))
        );
        assert_eq!(
            PromptTemplate::parse("{{task}}{{task}}"),
            Err(TemplateError::Duplicate(String::from("task")))
        );
    }

    #[test]
    fn subset_templates_are_allowed() {
        let t = PromptTemplate::parse("Improve:\n{{ task }}{{output_format}}").unwrap();
        assert_eq!(t.sections().collect::<Vec<_>>(), [Section::Task, Section::OutputFormat]);
        let out = render_prompt(&ctx(Some(Vec::new()), None), &t);
        assert!(out.starts_with("Improve:\n## Task"));
        assert!(!out.contains(HISTORY_HEADER));
    }
}
