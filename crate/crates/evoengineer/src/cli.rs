//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 bad configuration or
//! input, 3 backend unavailable (partial archives are kept).

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evoengineer_core::evaluator::SyntheticRules;
use evoengineer_core::orchestrator::SearchError;
use evoengineer_core::Task;

use crate::config::{load_tasks, read_tasks, task_set_violations, BackendConfig, EvaluatorConfig, FileConfig, Settings};
use crate::echo;
use crate::remote::RemoteError;
use crate::report;
use crate::runner::{build_backend, execute, BackendSetupError, JobError, Mode};

#[derive(Debug, Parser)]
#[command(name = "evoengineer", version, about = "LLM-driven evolutionary kernel optimization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run searches, replacing existing archives of the same run.
    Run(RunArgs),
    /// Continue interrupted runs; complete archives are left alone.
    Resume(RunArgs),
    /// Summarize archives as CSV files or a Markdown report.
    Report(ReportArgs),
    /// Check a task file.
    ValidateTask(ValidateArgs),
    /// Serve the evaluator protocol on stdin/stdout with synthetic rules.
    EchoEval(EchoArgs),
}

/// `scripted:<path>` or `remote`.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendFlag {
    Scripted(PathBuf),
    Remote,
}

impl FromStr for BackendFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("scripted", path)) if !path.is_empty() => Ok(BackendFlag::Scripted(path.into())),
            None if s == "remote" => Ok(BackendFlag::Remote),
            _ => Err(format!("expected scripted:<path> or remote, got {s:?}")),
        }
    }
}

/// `synthetic` or `subprocess:<command>`.
#[derive(Debug, Clone, PartialEq)]
pub enum EvaluatorFlag {
    Synthetic,
    Subprocess(String),
}

impl FromStr for EvaluatorFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("subprocess", cmd)) if !cmd.trim().is_empty() => Ok(EvaluatorFlag::Subprocess(cmd.into())),
            None if s == "synthetic" => Ok(EvaluatorFlag::Synthetic),
            _ => Err(format!("expected synthetic or subprocess:<command>, got {s:?}")),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// A task id, several ids separated by commas, or `all`.
    #[arg(long, default_value = "all")]
    pub task: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub backend: Option<BackendFlag>,
    #[arg(long)]
    pub evaluator: Option<EvaluatorFlag>,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long)]
    pub parallel_tasks: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Md,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub archives: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: ReportFormat,
    /// Where to write the report; defaults to the archives directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Config whose `[prices]` supplement the built-in price table.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Task file (TOML `[[tasks]]` or JSON `{"tasks": [...]}`).
    pub tasks: PathBuf,
}

#[derive(Debug, Args)]
pub struct EchoArgs {
    #[arg(long, default_value = "VALID")]
    pub compile_token: String,
    #[arg(long, default_value = "CORRECT")]
    pub correct_token: String,
    #[arg(long, default_value = "FAST")]
    pub speed_token: String,
    #[arg(long, default_value_t = 100.0)]
    pub base_ms: f64,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn bad_input(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn internal(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

pub fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(args) => cmd_run(&args, Mode::Fresh),
        Command::Resume(args) => cmd_run(&args, Mode::Resume),
        Command::Report(args) => cmd_report(&args),
        Command::ValidateTask(args) => cmd_validate(&args),
        Command::EchoEval(args) => cmd_echo(args),
    }
}

/// Loads the config and applies command-line overrides.
pub fn settings_for(args: &RunArgs) -> Result<Settings, Failure> {
    let mut file = FileConfig::load(&args.config).map_err(|e| bad_input(e.to_string()))?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    if let Some(n) = args.parallel_tasks {
        file.parallel_tasks = n;
    }
    match &args.backend {
        Some(BackendFlag::Scripted(corpus)) => {
            let cycle = matches!(file.backend, Some(BackendConfig::Scripted { cycle: true, .. }));
            file.backend = Some(BackendConfig::Scripted {
                corpus: corpus.clone(),
                cycle,
            });
        }
        Some(BackendFlag::Remote) if !matches!(file.backend, Some(BackendConfig::Remote(_))) => {
            return Err(bad_input(
                "--backend remote needs a [backend] section with kind = \"remote\" in the config",
            ));
        }
        Some(BackendFlag::Remote) | None => {}
    }
    match &args.evaluator {
        Some(EvaluatorFlag::Synthetic) => {
            if !matches!(file.evaluator, Some(EvaluatorConfig::Synthetic { .. })) {
                file.evaluator = Some(EvaluatorConfig::Synthetic {
                    rules: SyntheticRules::default(),
                });
            }
        }
        Some(EvaluatorFlag::Subprocess(command)) => {
            let working_dir = match &file.evaluator {
                Some(EvaluatorConfig::Subprocess { working_dir, .. }) => working_dir.clone(),
                _ => None,
            };
            file.evaluator = Some(EvaluatorConfig::Subprocess {
                command: command.clone(),
                working_dir,
            });
        }
        None => {}
    }
    Settings::from_file(file).map_err(|e| bad_input(format!("{}: {e}", args.config.display())))
}

/// The tasks named by `--task`, in task-file order for `all` and in the
/// given order otherwise.
pub fn select_tasks(all: Vec<Task>, selector: &str) -> Result<Vec<Task>, Failure> {
    if selector == "all" {
        return Ok(all);
    }
    let mut picked = Vec::new();
    for id in selector.split(',').map(str::trim) {
        let task = all
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| bad_input(format!("unknown task id {id:?}")))?;
        if !picked.iter().any(|t: &Task| t.id == id) {
            picked.push(task.clone());
        }
    }
    Ok(picked)
}

fn cmd_run(args: &RunArgs, mode: Mode) -> Result<(), Failure> {
    let settings = settings_for(args)?;
    let tasks = load_tasks(&settings.file.tasks).map_err(|e| bad_input(e.to_string()))?;
    let tasks = select_tasks(tasks, &args.task)?;
    let backend = build_backend(&settings).map_err(|e| match e {
        BackendSetupError::Remote(RemoteError::MissingKey(_)) => Failure {
            code: 3,
            message: format!("backend unavailable: {e}"),
        },
        other => bad_input(other.to_string()),
    })?;

    let outcomes = execute(&settings, &tasks, &backend, &args.out, mode);
    let mut aborted = Vec::new();
    let mut failed: Option<Failure> = None;
    for o in &outcomes {
        match &o.result {
            Ok(archive) => {
                let best = archive
                    .footer
                    .as_ref()
                    .and_then(|f| f.final_population.first())
                    .map(|p| format!("{:.3}x", p.fitness))
                    .unwrap_or_else(|| "none".into());
                let state = if archive.is_aborted() { "aborted" } else { "complete" };
                println!(
                    "{}\t{}\t{}\ttrials={}\tbest={}",
                    o.path.display(),
                    o.task_id,
                    state,
                    archive.trials_used(),
                    best
                );
                if let Some(reason) = archive.footer.as_ref().and_then(|f| f.abort_reason.as_ref()) {
                    aborted.push(format!("{} ({reason})", o.path.display()));
                }
            }
            Err(e) => {
                let code = match e {
                    JobError::Search(
                        SearchError::ResumeConfigMismatch(_)
                        | SearchError::InvalidConfig(_)
                        | SearchError::InvalidTask(_)
                        | SearchError::InconsistentArchive(_),
                    )
                    | JobError::Read { .. } => 2,
                    JobError::Search(_) => 1,
                };
                println!("{}\t{}\tfailed\t{e}", o.path.display(), o.task_id);
                if failed.as_ref().is_none_or(|f| f.code < code) {
                    failed = Some(Failure {
                        code,
                        message: format!("task {} repeat {}: {e}", o.task_id, o.repeat),
                    });
                }
            }
        }
    }
    if let Some(f) = failed {
        return Err(f);
    }
    if !aborted.is_empty() {
        return Err(Failure {
            code: 3,
            message: format!(
                "backend unavailable: {} of {} runs aborted, partial archives kept: {}",
                aborted.len(),
                outcomes.len(),
                aborted.join(", ")
            ),
        });
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), Failure> {
    let prices = match &args.config {
        Some(path) => {
            let file = FileConfig::load(path).map_err(|e| bad_input(e.to_string()))?;
            let mut table = evoengineer_core::llm::PriceTable::builtin();
            table.merge(&file.prices);
            table
        }
        None => evoengineer_core::llm::PriceTable::builtin(),
    };
    if !args.archives.is_dir() {
        return Err(bad_input(format!("{} is not a directory", args.archives.display())));
    }
    let (archives, mut warnings) = report::load_archives(&args.archives).map_err(|e| match e {
        report::ReportError::NoArchives(_) => bad_input(e.to_string()),
        other => internal(other.to_string()),
    })?;
    let (methods, more) = report::summarize(&archives, &prices).map_err(|e| internal(e.to_string()))?;
    warnings.extend(more);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if methods.is_empty() {
        return Err(bad_input("no method has a task shared by all of its runs"));
    }
    let out = args.out.as_deref().unwrap_or(&args.archives);
    std::fs::create_dir_all(out).map_err(|e| internal(format!("{}: {e}", out.display())))?;
    let written = match args.format {
        ReportFormat::Csv => report::write_csv(out, &methods),
        ReportFormat::Md => report::write_markdown(out, &methods, &warnings).map(|p| vec![p]),
    }
    .map_err(|e| internal(e.to_string()))?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let tasks = read_tasks(&args.tasks).map_err(|e| bad_input(e.to_string()))?;
    let violations = task_set_violations(&tasks);
    if !violations.is_empty() {
        return Err(bad_input(format!("{}: {}", args.tasks.display(), violations.join("; "))));
    }
    println!("{}: {} task(s) ok", args.tasks.display(), tasks.len());
    Ok(())
}

fn cmd_echo(args: EchoArgs) -> Result<(), Failure> {
    let rules = SyntheticRules {
        compile_token: args.compile_token,
        correct_token: args.correct_token,
        speed_token: args.speed_token,
        base_ms: args.base_ms,
    };
    rules.validate().map_err(bad_input)?;
    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    echo::serve(stdin, stdout, &rules).map_err(|e| match e.kind() {
        io::ErrorKind::BrokenPipe => internal("output closed"),
        _ => internal(e.to_string()),
    })
}
