//! Scripted reply corpora on disk: a directory of numbered files, or one
//! file with replies separated by `=====` lines.

use std::fs;
use std::io;
use std::path::Path;

use evoengineer_core::llm::ScriptedCorpus;

/// Loads a corpus. In a directory, files whose names start with digits are
/// replies, ordered by that number; other files are ignored.
pub fn load_corpus(path: &Path) -> io::Result<ScriptedCorpus> {
    if !path.is_dir() {
        return Ok(ScriptedCorpus::from_concatenated(&fs::read_to_string(path)?));
    }
    let mut numbered = Vec::new();
    for entry in fs::read_dir(path)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let digits: String = name.chars().take_while(char::is_ascii_digit).collect();
        if let Ok(n) = digits.parse::<u64>() {
            numbered.push((n, name, entry.path()));
        }
    }
    numbered.sort();
    if let Some(w) = numbered.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("corpus files {} and {} share number {}", w[0].1, w[1].1, w[0].0),
        ));
    }
    let replies = numbered
        .into_iter()
        .map(|(_, _, p)| fs::read_to_string(p))
        .collect::<io::Result<Vec<_>>>()?;
    Ok(ScriptedCorpus::new(replies))
}
