#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use evoengineer::archive_io::{canonical_hash, find_archives, read_archive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_evoengineer")
}

pub fn echo_command() -> String {
    format!("'{}' echo-eval", bin())
}

pub fn reply(code: &str, insight: Option<&str>) -> String {
    match insight {
        Some(text) => format!("Here is a faster version.\n```cuda\n{code}\n```\nINSIGHT: {text}\n"),
        None => format!("```cuda\n{code}\n```\n"),
    }
}

/// Replies covering every outcome: no code, empty text, compile failure,
/// wrong output, and valid kernels of several speeds.
pub fn mixed_replies(seed: u64, len: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|i| match rng.random_range(0..10) {
            0 => format!("I could not produce code for attempt {i}."),
            1 => String::new(),
            2 => reply(&format!("kernel {i} broken"), None),
            3 => reply(&format!("VALID kernel {i} wrong"), Some("try shared memory")),
            _ => {
                let fast = vec!["FAST"; rng.random_range(0..4)].join(" ");
                reply(&format!("VALID CORRECT kernel {i} {fast}"), Some(&format!("idea {i}")))
            }
        })
        .collect()
}

pub const TASKS: &str = r#"
[[tasks]]
id = "relu"
category = "activation-pooling"
description = "ReLU over a float tensor"
initial_code = "__global__ void relu(const float* x, float* y, int n) {}"
baseline_mean_ms = 100.0

[[tasks]]
id = "mse_loss"
category = "loss"
description = "Mean squared error"
initial_code = "__global__ void mse(const float* a, const float* b, float* out, int n) {}"
baseline_mean_ms = 100.0

[[tasks]]
id = "gemm"
category = "matmul"
description = "Single-precision matrix multiply"
initial_code = "__global__ void gemm(const float* a, const float* b, float* c, int n) {}"
baseline_mean_ms = 100.0
"#;

/// A scratch directory holding a task file, a corpus directory and a
/// config.
pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new(strategy: &str, extra: &str, replies: &[String]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("tasks.toml"), TASKS).unwrap();
        let f = Fixture { dir };
        f.write_corpus("corpus", replies);
        f.write_config(strategy, extra);
        f
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn write_corpus(&self, name: &str, replies: &[String]) -> PathBuf {
        let dir = self.path(name);
        fs::create_dir_all(&dir).unwrap();
        for (i, r) in replies.iter().enumerate() {
            fs::write(dir.join(format!("{i:03}.txt")), r).unwrap();
        }
        dir
    }

    /// `extra` is spliced in before the backend section, so it may hold
    /// top-level keys and a `[search]` table.
    pub fn write_config(&self, strategy: &str, extra: &str) {
        let text = format!(
            "strategy = \"{strategy}\"\ntasks = \"tasks.toml\"\n{extra}\n\n[backend]\nkind = \"scripted\"\ncorpus = \"corpus\"\n\n[evaluator]\nkind = \"synthetic\"\n"
        );
        fs::write(self.path("config.toml"), text).unwrap();
    }

    pub fn cli(&self, args: &[&str]) -> Output {
        Command::new(bin())
            .args(args)
            .current_dir(self.dir.path())
            .stdin(Stdio::null())
            .output()
            .unwrap()
    }

    pub fn run(&self, out: &str, extra_args: &[&str]) -> Output {
        let mut args = vec!["run", "--config", "config.toml", "--out", out];
        args.extend_from_slice(extra_args);
        self.cli(&args)
    }
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstdout: {}\nstderr: {}", o.status.code(), String::from_utf8_lossy(&o.stdout), stderr(o));
}

/// (relative path, canonical hash) for every archive under `dir`.
pub fn archive_hashes(dir: &Path) -> Vec<(String, String)> {
    find_archives(dir)
        .unwrap()
        .into_iter()
        .map(|p| {
            let rel = p.strip_prefix(dir).unwrap().display().to_string();
            (rel, canonical_hash(&read_archive(&p).unwrap().archive))
        })
        .collect()
}
