//! File formats: transcript JSON, word-vector text, checkpoints and the JSON
//! artifacts written by the commands.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use acd_core::corpus::{Meeting, WordVectors};
use acd_core::nn::checkpoint::{self, CheckpointHeader};
use acd_core::nn::ParamStore;
use acd_core::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

fn json_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn parse_meeting(value: Value, fallback_id: &str) -> Result<Meeting, Error> {
    let id = value
        .get("meeting_id")
        .and_then(Value::as_str)
        .unwrap_or(fallback_id)
        .to_string();
    serde_path_to_error::deserialize::<_, Meeting>(value).map_err(|e| Error::Schema {
        meeting: id,
        path: e.path().to_string(),
        reason: e.inner().to_string(),
    })
}

/// Reads one transcript file: a single meeting object or an array of them.
pub fn read_meetings(path: &Path, blocklist: &[String]) -> CliResult<Vec<Meeting>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("?");
    let docs = match value {
        Value::Array(items) => items,
        other => vec![other],
    };
    docs.into_iter()
        .enumerate()
        .map(|(i, doc)| {
            let m = parse_meeting(doc, &format!("{stem}[{i}]"))?;
            Ok(m.clean(blocklist)?)
        })
        .collect()
}

/// Loads a corpus from a transcript file or a directory of them (read in
/// file-name order). Meeting ids must be unique.
pub fn load_corpus(path: &Path, blocklist: &[String]) -> CliResult<Vec<Meeting>> {
    let files = if path.is_dir() {
        json_files(path)?
    } else {
        vec![path.to_path_buf()]
    };
    let mut meetings = Vec::new();
    let mut ids = BTreeSet::new();
    for f in files {
        for m in read_meetings(&f, blocklist)? {
            if !ids.insert(m.meeting_id.clone()) {
                return Err(Error::Schema {
                    meeting: m.meeting_id,
                    path: "meeting_id".into(),
                    reason: format!("duplicate meeting id (again in {})", f.display()),
                }
                .into());
            }
            meetings.push(m);
        }
    }
    Ok(meetings)
}

/// Writes one `<meeting_id>.json` per meeting into `dir`.
pub fn write_corpus(dir: &Path, meetings: &[Meeting]) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for m in meetings {
        write_json(&dir.join(format!("{}.json", m.meeting_id)), m)?;
    }
    Ok(())
}

/// Reads `word v1 ... vd` lines, with an optional `count dim` header. When
/// `keep` is given, only those words are retained.
pub fn load_word_vectors(path: &Path, keep: Option<&BTreeSet<String>>) -> CliResult<WordVectors> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut table: Option<WordVectors> = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if n == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
            if let Ok(dim) = values[0].parse::<usize>() {
                table = Some(WordVectors::new(dim));
                continue;
            }
        }
        let table = table.get_or_insert_with(|| WordVectors::new(values.len()));
        if values.len() != table.dim() {
            return Err(CliError::format(
                path,
                format!("line {}: {} values, expected {}", n + 1, values.len(), table.dim()),
            ));
        }
        if keep.is_some_and(|k| !k.contains(word) && !k.contains(&word.to_lowercase())) {
            continue;
        }
        let v = values
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::format(path, format!("line {}: {e}", n + 1)))?;
        table.insert(word, v)?;
    }
    table.ok_or_else(|| CliError::format(path, "no word vectors"))
}

pub fn write_word_vectors(path: &Path, vectors: &WordVectors) -> CliResult<()> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| CliError::io(path, e);
    writeln!(w, "{} {}", vectors.len(), vectors.dim()).map_err(io)?;
    for (word, v) in vectors.iter() {
        write!(w, "{word}").map_err(io)?;
        for x in v {
            write!(w, " {x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Token types of a corpus, for filtering large vector files.
pub fn vocabulary(meetings: &[Meeting]) -> BTreeSet<String> {
    meetings
        .iter()
        .flat_map(|m| &m.utterances)
        .flat_map(|u| u.tokens.iter().cloned())
        .collect()
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, header: CheckpointHeader) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, checkpoint::encode(store, header)).map_err(|e| CliError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> CliResult<(CheckpointHeader, ParamStore)> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    checkpoint::decode(&bytes).map_err(|e| CliError::format(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, to_json(value)).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
