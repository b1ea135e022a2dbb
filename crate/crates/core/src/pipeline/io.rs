//! Versioned JSONL and JSON artifacts, written by temp file and rename.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;

/// Record-format version stamped on every artifact line.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Line<T> {
    v: u32,
    #[serde(flatten)]
    record: T,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("artifact");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.flush()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        PipelineError::io(path, e)
    })
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for record in records {
        let line = serde_json::to_string(&Line {
            v: FORMAT_VERSION,
            record,
        })
        .expect("records serialize");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), PipelineError> {
    write_atomic(path, to_jsonl(records).as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |m: String| PipelineError::Artifact(format!("{}:{}: {m}", path.display(), i + 1));
        let line: Line<T> = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        if line.v != FORMAT_VERSION {
            return Err(bad(format!("unsupported record version {}", line.v)));
        }
        out.push(line.record);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Artifact(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Rec {
        id: String,
        x: f64,
    }

    #[test]
    fn round_trip_with_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b.jsonl");
        let recs = vec![
            Rec {
                id: "q".into(),
                x: 0.1,
            },
            Rec {
                id: "r".into(),
                x: -2.5,
            },
        ];
        write_jsonl(&path, &recs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"v\":1,\"id\":\"q\",\"x\":0.1}\n"));
        assert_eq!(read_jsonl::<Rec>(&path).unwrap(), recs);
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn rejects_other_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        fs::write(&path, "{\"v\":2,\"id\":\"q\",\"x\":1.0}\n").unwrap();
        let err = read_jsonl::<Rec>(&path).unwrap_err().to_string();
        assert!(err.contains("x.jsonl:1"), "{err}");
    }
}
