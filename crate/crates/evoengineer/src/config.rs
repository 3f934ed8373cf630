//! Run configuration and task files.
//!
//! A run config is TOML:
//!
//! ```toml
//! strategy = "full"            # free | insight | solution | full
//! tasks = "tasks.toml"         # relative to this file
//! seed = 0
//! parallel_tasks = 1
//! # template = "prompt.txt"    # defaults to the bundled template
//!
//! [search]                     # all optional
//! budget_trials = 45
//! runs_repeat = 3
//!
//! [generation]
//! model_name = "GPT-4.1"
//!
//! [backend]
//! kind = "remote"
//! base_url = "https://api.openai.com/v1"
//! api_key_env = "OPENAI_API_KEY"
//!
//! [evaluator]
//! kind = "subprocess"
//! command = "python -m pyeval --tasks-dir tasks"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use evoengineer_core::evaluator::{EvalConfig, SyntheticRules};
use evoengineer_core::hash::sha256_hex;
use evoengineer_core::llm::{GenerationParams, PriceTable};
use evoengineer_core::orchestrator::RunConfig;
use evoengineer_core::traverse::{PromptTemplate, StrategyName};
use evoengineer_core::{validate_task_set, Task};
use serde::{Deserialize, Serialize};

use crate::remote::RemoteConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchOverrides {
    pub budget_trials: Option<u32>,
    pub init_trials: Option<u32>,
    pub offspring_per_generation: Option<u32>,
    pub generations: Option<u32>,
    pub runs_repeat: Option<u32>,
    pub elite_capacity: Option<usize>,
    pub history_n: Option<usize>,
    pub insights_n: Option<usize>,
    pub insight_capacity: Option<usize>,
    pub feedback_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Scripted {
        corpus: PathBuf,
        /// Wrap around instead of aborting when the corpus runs out.
        #[serde(default)]
        cycle: bool,
    },
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EvaluatorConfig {
    Synthetic {
        #[serde(default)]
        rules: SyntheticRules,
    },
    Subprocess {
        command: String,
        #[serde(default)]
        working_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub strategy: StrategyName,
    pub tasks: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub parallel_tasks: usize,
    #[serde(default)]
    pub template: Option<PathBuf>,
    #[serde(default)]
    pub search: SearchOverrides,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub eval: EvalConfig,
    /// May instead come from `--backend`.
    #[serde(default)]
    pub backend: Option<BackendConfig>,
    /// May instead come from `--evaluator`.
    #[serde(default)]
    pub evaluator: Option<EvaluatorConfig>,
    /// Extra or overriding USD-per-million prices, keyed by model name.
    #[serde(default)]
    pub prices: PriceTable,
}

fn one() -> usize {
    1
}

/// A parsed config with its paths resolved against the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub file: FileConfig,
    pub template: PromptTemplate,
    template_text: String,
    pub prices: PriceTable,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl FileConfig {
    /// Parses a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let mut file: FileConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        file.tasks = resolve(base, &file.tasks);
        file.template = file.template.as_deref().map(|t| resolve(base, t));
        if let Some(BackendConfig::Scripted { corpus, .. }) = &mut file.backend {
            *corpus = resolve(base, corpus);
        }
        if let Some(EvaluatorConfig::Subprocess {
            working_dir: Some(dir), ..
        }) = &mut file.evaluator
        {
            *dir = resolve(base, dir);
        }
        Ok(file)
    }
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Settings::from_file(FileConfig::load(path)?)
    }

    pub fn from_file(file: FileConfig) -> Result<Self, ConfigError> {
        let template_text = match &file.template {
            Some(p) => read(p)?,
            None => evoengineer_core::traverse::DEFAULT_TEMPLATE.to_string(),
        };
        let template = PromptTemplate::parse(&template_text)
            .map_err(|e| ConfigError::Invalid(format!("prompt template: {e}")))?;
        let mut prices = PriceTable::builtin();
        prices.merge(&file.prices);
        let settings = Settings {
            file,
            template,
            template_text,
            prices,
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = self.run_config().validate().err().unwrap_or_default();
        if self.file.parallel_tasks == 0 {
            errors.push("parallel_tasks must be >= 1".into());
        }
        for (model, price) in self.file.prices.iter() {
            if !(price.input_usd_per_million >= 0.0 && price.output_usd_per_million >= 0.0) {
                errors.push(format!("prices for {model:?} must be >= 0"));
            }
        }
        match &self.file.backend {
            None => errors.push("no backend: set [backend] or pass --backend".into()),
            Some(BackendConfig::Remote(r)) if r.base_url.trim().is_empty() => {
                errors.push("backend base_url must be non-empty".into())
            }
            Some(_) => {}
        }
        match &self.file.evaluator {
            None => errors.push("no evaluator: set [evaluator] or pass --evaluator".into()),
            Some(EvaluatorConfig::Synthetic { rules }) => {
                if let Err(e) = rules.validate() {
                    errors.push(e);
                }
            }
            Some(EvaluatorConfig::Subprocess { command, .. }) => {
                if command.trim().is_empty() {
                    errors.push("evaluator command must be non-empty".into());
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors.join("; ")))
        }
    }

    /// The core configuration recorded in every archive header.
    pub fn run_config(&self) -> RunConfig {
        let f = &self.file;
        let o = &f.search;
        let mut cfg = RunConfig::new(f.strategy);
        cfg.seed = f.seed;
        cfg.generation_params = f.generation.clone();
        cfg.eval_config = f.eval.clone();
        if let Some(v) = o.budget_trials {
            cfg.budget_trials = v;
        }
        if let Some(v) = o.init_trials {
            cfg.init_trials = v;
        }
        if let Some(v) = o.offspring_per_generation {
            cfg.offspring_per_generation = v;
        }
        if let Some(v) = o.generations {
            cfg.generations = v;
        }
        if let Some(v) = o.runs_repeat {
            cfg.runs_repeat = v;
        }
        if let Some(v) = o.elite_capacity {
            cfg.strategy.population.capacity = v;
        }
        if let Some(v) = o.history_n {
            cfg.strategy.history_n = v;
        }
        if let Some(v) = o.insights_n {
            cfg.strategy.insights_n = v;
        }
        if let Some(v) = o.insight_capacity {
            cfg.insight_capacity = v;
        }
        if let Some(v) = o.feedback_limit {
            cfg.feedback_limit = v;
        }
        cfg
    }

    /// Stable identifier of one repeat: strategy, seed, and a digest of
    /// everything else that shapes the run.
    pub fn run_id(&self, cfg: &RunConfig) -> String {
        let mut material = serde_json::to_string(cfg).expect("run config serializes");
        material.push_str(&self.template_text);
        let digest = sha256_hex(material.as_bytes());
        format!("{}-s{}-{}", cfg.strategy.name, cfg.seed, &digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    tasks: Vec<Task>,
}

fn id_is_file_safe(id: &str) -> bool {
    id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !id.starts_with('.')
}

/// Reads a task set (`[[tasks]]` tables in TOML, or `{"tasks": [...]}` in
/// JSON) without validating it.
pub fn read_tasks(path: &Path) -> Result<Vec<Task>, ConfigError> {
    let text = read(path)?;
    let parse_err = |message: String| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let file: TaskFile = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    };
    Ok(file.tasks)
}

/// Every problem with a task set; empty means usable.
pub fn task_set_violations(tasks: &[Task]) -> Vec<String> {
    let mut violations = validate_task_set(tasks);
    if tasks.is_empty() {
        violations.push("task set is empty".into());
    }
    for t in tasks {
        if !t.id.is_empty() && !id_is_file_safe(&t.id) {
            violations.push(format!(
                "task {:?}: id may only contain ASCII letters, digits, '-', '_' and '.'",
                t.id
            ));
        }
    }
    violations
}

pub fn load_tasks(path: &Path) -> Result<Vec<Task>, ConfigError> {
    let tasks = read_tasks(path)?;
    let violations = task_set_violations(&tasks);
    if violations.is_empty() {
        Ok(tasks)
    } else {
        Err(ConfigError::Invalid(violations.join("; ")))
    }
}
