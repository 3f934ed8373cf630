use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::{AttemptError, Completion, GenerationParams, LlmBackend, RequestMeta};
use crate::domain::TokenUsage;

/// Line that separates replies in a concatenated corpus file.
pub const RECORD_SEPARATOR: &str = "=====";

/// Canned replies indexed by trial.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScriptedCorpus {
    replies: Vec<String>,
    cycle: bool,
}

impl ScriptedCorpus {
    pub fn new(replies: Vec<String>) -> Self {
        ScriptedCorpus {
            replies,
            cycle: false,
        }
    }

    pub fn cycling(mut self, cycle: bool) -> Self {
        self.cycle = cycle;
        self
    }

    /// Splits on lines consisting solely of [`RECORD_SEPARATOR`].
    pub fn from_concatenated(text: &str) -> Self {
        let mut replies = Vec::new();
        let mut current = String::new();
        for line in text.split_inclusive('\n') {
            if line.trim_end_matches(['\n', '\r']) == RECORD_SEPARATOR {
                replies.push(finish(&mut current));
            } else {
                current.push_str(line);
            }
        }
        if !current.trim().is_empty() || replies.is_empty() && !current.is_empty() {
            replies.push(finish(&mut current));
        }
        ScriptedCorpus::new(replies)
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }

    pub fn is_cycling(&self) -> bool {
        self.cycle
    }

    pub fn replies(&self) -> &[String] {
        &self.replies
    }

    pub fn reply(&self, trial_index: u32) -> Option<&str> {
        let i = trial_index as usize;
        if self.cycle && !self.replies.is_empty() {
            return Some(&self.replies[i % self.replies.len()]);
        }
        self.replies.get(i).map(String::as_str)
    }
}

fn finish(current: &mut String) -> String {
    let reply = String::from(current.trim_end_matches(['\n', '\r']));
    current.clear();
    reply
}

/// Number of whitespace-delimited units; the scripted token approximation.
pub fn whitespace_units(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Deterministic completion for `trial_index`.
pub fn scripted_generate(
    corpus: &ScriptedCorpus,
    trial_index: u32,
    prompt: &str,
) -> Result<Completion, AttemptError> {
    let text = corpus
        .reply(trial_index)
        .ok_or(AttemptError::ScriptExhausted {
            trial_index,
            len: corpus.len(),
        })?;
    let usage = TokenUsage::new(whitespace_units(prompt), whitespace_units(text));
    if text.trim().is_empty() {
        return Err(AttemptError::Empty {
            usage,
            message: String::from("scripted reply is empty"),
        });
    }
    Ok(Completion {
        text: String::from(text),
        usage,
        latency_ms: 0.0,
        attempts: 1,
    })
}

/// Backend that replays a [`ScriptedCorpus`], keyed by trial index.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    corpus: Arc<ScriptedCorpus>,
}

impl ScriptedBackend {
    pub fn new(corpus: ScriptedCorpus) -> Self {
        ScriptedBackend {
            corpus: Arc::new(corpus),
        }
    }

    pub fn corpus(&self) -> &ScriptedCorpus {
        &self.corpus
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(
        &self,
        prompt: &str,
        _params: &GenerationParams,
        meta: RequestMeta,
    ) -> Result<Completion, AttemptError> {
        scripted_generate(&self.corpus, meta.trial_index, prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn corpus(n: usize) -> ScriptedCorpus {
        ScriptedCorpus::new((0..n).map(|i| format!("reply {i}")).collect())
    }

    #[test]
    fn indexes_by_trial() {
        let c = corpus(45);
        let out = scripted_generate(&c, 0, "a b c").unwrap();
        assert_eq!(out.text, "reply 0");
        assert_eq!(out.usage, TokenUsage::new(3, 2));
        assert_eq!(scripted_generate(&c, 3, "p").unwrap().text, "reply 3");
    }

    #[test]
    fn exhaustion_and_cycling() {
        let c = corpus(45);
        assert_eq!(
            scripted_generate(&c, 45, "p"),
            Err(AttemptError::ScriptExhausted {
                trial_index: 45,
                len: 45
            })
        );
        let c = corpus(45).cycling(true);
        assert_eq!(scripted_generate(&c, 46, "p").unwrap().text, "reply 1");
    }

    #[test]
    fn repeated_runs_identical() {
        let c = corpus(10);
        let a: Vec<_> = (0..10).map(|t| scripted_generate(&c, t, "x y").unwrap()).collect();
        let b: Vec<_> = (0..10).map(|t| scripted_generate(&c, t, "x y").unwrap()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_reply_is_empty_completion() {
        let c = ScriptedCorpus::new(alloc::vec![String::from("  \n")]);
        assert!(matches!(
            scripted_generate(&c, 0, "p"),
            Err(AttemptError::Empty { .. })
        ));
    }

    #[test]
    fn concatenated_format() {
        let text = "```\na\n```\nINSIGHT: x\n=====\n```\nb\n```\n=====\n\n=====\nlast\n";
        let c = ScriptedCorpus::from_concatenated(text);
        assert_eq!(c.len(), 4);
        assert_eq!(c.replies()[0], "```\na\n```\nINSIGHT: x");
        assert_eq!(c.replies()[1], "```\nb\n```");
        assert_eq!(c.replies()[2], "");
        assert_eq!(c.replies()[3], "last");
    }
}
