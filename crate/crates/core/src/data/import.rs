//! Text importer for external embedding dumps: one JSON object per line,
//!
//! ```text
//! {"id": 0, "values": [[0.1, ...], ...], "labels": [3, ...], "ignore": [false, ...]}
//! ```
//!
//! `ignore` may be omitted. Blank lines are skipped.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::Deserialize;

use super::{Dataset, DatasetMeta, EmbeddingSequence, FormatError, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonRecord {
    pub id: u64,
    pub values: Vec<Vec<f32>>,
    pub labels: Vec<u16>,
    #[serde(default)]
    pub ignore: Option<Vec<bool>>,
}

fn record_to_sequence(record: JsonRecord, line: usize) -> std::result::Result<EmbeddingSequence, String> {
    let n = record.values.len();
    let e = record.values.first().map_or(0, Vec::len);
    if n == 0 || e == 0 {
        return Err(format!("line {line}: empty values"));
    }
    if record.values.iter().any(|row| row.len() != e) {
        return Err(format!("line {line}: ragged values matrix"));
    }
    let ignore = record.ignore.unwrap_or_else(|| vec![false; n]);
    let values = Array2::from_shape_vec((n, e), record.values.into_iter().flatten().collect())
        .map_err(|err| format!("line {line}: {err}"))?;
    Ok(EmbeddingSequence {
        id: record.id,
        values,
        labels: record.labels,
        ignore,
    })
}

/// Parses a JSON-lines dump into a validated dataset.
pub fn import_jsonl(path: impl AsRef<Path>, classes: usize, kind: TaskKind, meta: DatasetMeta) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |message: String| Error::Format {
        path: path.to_path_buf(),
        source: FormatError::Corrupt { message },
    };
    let mut sequences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonRecord =
            serde_json::from_str(line).map_err(|e| corrupt(format!("line {}: {e}", i + 1)))?;
        sequences.push(record_to_sequence(record, i + 1).map_err(corrupt)?);
    }
    let embed_dim = sequences.first().map_or(0, |s| s.values.ncols());
    let dataset = Dataset {
        sequences,
        classes,
        embed_dim,
        kind,
        meta,
    };
    dataset.validate()?;
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn imports_records_and_validates() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id": 3, "values": [[1.0, 2.0], [3.0, 4.0]], "labels": [0, 1]}}"#).unwrap();
        writeln!(f).unwrap();
        writeln!(f, r#"{{"id": 4, "values": [[0.5, 0.5]], "labels": [7], "ignore": [true]}}"#).unwrap();
        let ds = import_jsonl(f.path(), 2, TaskKind::Token, DatasetMeta::default()).unwrap();
        assert_eq!(ds.sequences.len(), 2);
        assert_eq!(ds.embed_dim, 2);
        assert_eq!(ds.sequences[0].values[[1, 0]], 3.0);
        assert!(ds.sequences[1].ignore[0]);
        assert_eq!(ds.positions(), 2);
    }

    #[test]
    fn rejects_bad_records() {
        for body in [
            r#"{"id": 1, "values": [[1.0], [1.0, 2.0]], "labels": [0, 0]}"#,
            r#"{"id": 1, "values": [[1.0]], "labels": [5]}"#,
            r#"{"id": 1, "values": [[1.0]], "labels": [0, 1]}"#,
            r#"{"id": 1, "values": [], "labels": []}"#,
            r#"not json"#,
        ] {
            let mut f = tempfile::NamedTempFile::new().unwrap();
            writeln!(f, "{body}").unwrap();
            assert!(import_jsonl(f.path(), 2, TaskKind::Token, DatasetMeta::default()).is_err(), "{body}");
        }
    }
}
