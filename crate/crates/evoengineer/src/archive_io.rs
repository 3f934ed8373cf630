//! JSON-lines archive files: `<out>/<run_id>/<task_id>.jsonl`, a header
//! line, one line per trial, and a footer line once the run ends.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use evoengineer_core::hash::sha256_hex;
use evoengineer_core::orchestrator::{
    ArchiveFooter, ArchiveHeader, ArchiveLine, ArchiveSink, RunArchive, SinkError, TrialRecord, ARCHIVE_FORMAT,
};
use serde_json::Value;

pub fn archive_path(out_dir: &Path, run_id: &str, task_id: &str) -> PathBuf {
    out_dir.join(run_id).join(format!("{task_id}.jsonl"))
}

pub fn encode_line(line: &ArchiveLine) -> String {
    serde_json::to_string(line).expect("archive lines serialize")
}

/// Writes each line as soon as it is produced, so a crash leaves a valid
/// prefix on disk.
pub struct JsonlSink {
    path: PathBuf,
    file: Option<BufWriter<File>>,
}

impl JsonlSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        JsonlSink {
            path: path.into(),
            file: None,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write(&mut self, line: &ArchiveLine) -> Result<(), SinkError> {
        let file = self
            .file
            .as_mut()
            .ok_or_else(|| SinkError(format!("{}: archive not started", self.path.display())))?;
        let io = |e: std::io::Error| SinkError(e.to_string());
        writeln!(file, "{}", encode_line(line)).map_err(io)?;
        file.flush().map_err(io)
    }
}

impl ArchiveSink for JsonlSink {
    /// Rewrites the file through a temporary sibling, so an interrupted
    /// restart never leaves a half-written archive behind.
    fn begin(&mut self, header: &ArchiveHeader, existing: &[TrialRecord]) -> Result<(), SinkError> {
        let err = |e: std::io::Error| SinkError(format!("{}: {e}", self.path.display()));
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir).map_err(err)?;
        }
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp).map_err(err)?);
            writeln!(w, "{}", encode_line(&ArchiveLine::Header(header.clone()))).map_err(err)?;
            for t in existing {
                writeln!(w, "{}", encode_line(&ArchiveLine::Trial(t.clone()))).map_err(err)?;
            }
            w.into_inner().map_err(|e| err(e.into_error()))?.sync_all().map_err(err)?;
        }
        fs::rename(&tmp, &self.path).map_err(err)?;
        let file = OpenOptions::new().append(true).open(&self.path).map_err(err)?;
        self.file = Some(BufWriter::new(file));
        Ok(())
    }

    fn append(&mut self, record: &TrialRecord) -> Result<(), SinkError> {
        self.write(&ArchiveLine::Trial(record.clone()))
    }

    fn finish(&mut self, footer: &ArchiveFooter) -> Result<(), SinkError> {
        self.write(&ArchiveLine::Footer(footer.clone()))?;
        if let Some(file) = self.file.take() {
            file.into_inner()
                .map_err(|e| SinkError(e.to_string()))?
                .sync_all()
                .map_err(|e| SinkError(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArchiveReadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("archive is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// A parsed archive file.
#[derive(Debug, Clone)]
pub struct LoadedArchive {
    pub archive: RunArchive,
    /// The final line was cut off mid-write and was ignored.
    pub truncated_tail: bool,
}

pub fn read_archive(path: &Path) -> Result<LoadedArchive, ArchiveReadError> {
    let text = fs::read_to_string(path).map_err(|source| ArchiveReadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_archive(&text)
}

/// Parses archive text. An unterminated, unparseable last line is treated
/// as an interrupted write and dropped; anything else malformed is an error.
pub fn parse_archive(text: &str) -> Result<LoadedArchive, ArchiveReadError> {
    let corrupt = |line: usize, message: String| ArchiveReadError::Corrupt { line, message };
    let mut lines: Vec<&str> = text.split('\n').collect();
    let mut truncated_tail = false;
    if let Some(last) = lines.pop() {
        // `last` is whatever follows the final newline: empty for a cleanly
        // terminated file.
        if !last.trim().is_empty() {
            if serde_json::from_str::<ArchiveLine>(last).is_ok() {
                lines.push(last);
            } else {
                truncated_tail = true;
            }
        }
    }

    let mut header = None;
    let mut trials = Vec::new();
    let mut footer = None;
    for (i, raw) in lines.iter().enumerate() {
        let n = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line: ArchiveLine = serde_json::from_str(raw).map_err(|e| corrupt(n, e.to_string()))?;
        if footer.is_some() {
            return Err(corrupt(n, "content after the footer".into()));
        }
        match line {
            ArchiveLine::Header(h) if header.is_none() => {
                if h.format != ARCHIVE_FORMAT {
                    return Err(corrupt(n, format!("unsupported archive format {:?}", h.format)));
                }
                header = Some(h);
            }
            ArchiveLine::Header(_) => return Err(corrupt(n, "second header".into())),
            _ if header.is_none() => return Err(corrupt(n, "first line is not a header".into())),
            ArchiveLine::Trial(t) => trials.push(t),
            ArchiveLine::Footer(f) => footer = Some(f),
        }
    }
    let header = header.ok_or(ArchiveReadError::Empty)?;
    let archive = RunArchive {
        header,
        trials,
        footer,
    };
    archive.check().map_err(|m| corrupt(0, m))?;
    Ok(LoadedArchive {
        archive,
        truncated_tail,
    })
}

const VOLATILE_KEYS: [&str; 3] = ["started_ms", "finished_ms", "latency_ms"];

fn strip_volatile(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for key in VOLATILE_KEYS {
                map.remove(key);
            }
            map.values_mut().for_each(strip_volatile);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}

/// SHA-256 over the archive lines with wall-clock fields removed. Equal for
/// runs that made the same decisions.
pub fn canonical_hash(archive: &RunArchive) -> String {
    let mut text = String::new();
    for line in archive.lines() {
        let mut value = serde_json::to_value(&line).expect("archive lines serialize");
        strip_volatile(&mut value);
        text.push_str(&value.to_string());
        text.push('\n');
    }
    sha256_hex(text.as_bytes())
}

/// Every `*.jsonl` file below `dir`, sorted.
pub fn find_archives(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "jsonl") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}
