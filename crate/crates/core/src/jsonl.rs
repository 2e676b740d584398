//! Line-delimited JSON helpers shared by every on-disk artifact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parses JSONL from a reader. Blank lines are skipped; line numbers are 1-based.
pub fn read_jsonl_from<T: DeserializeOwned, R: Read>(reader: R, origin: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(v) => out.push(v),
            Err(e) => return Err(classify(e, origin, line_no)),
        }
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl_from(file, path)
}

pub fn write_jsonl_to<T: Serialize, W: Write>(items: &[T], mut writer: W) -> Result<()> {
    for item in items {
        let line = serde_json::to_string(item)?;
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.write_all(b"\n"))
            .map_err(|e| Error::io("<writer>", e))?;
    }
    writer.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_jsonl_to(items, BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

fn classify(e: serde_json::Error, origin: &Path, line: usize) -> Error {
    let msg = e.to_string();
    if let Some(rest) = msg.strip_prefix("missing field `") {
        if let Some(end) = rest.find('`') {
            return Error::MissingField {
                field: rest[..end].to_string(),
                line,
            };
        }
    }
    Error::Parse {
        path: origin.to_path_buf(),
        line,
        message: msg,
    }
}
