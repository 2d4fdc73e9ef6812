//! File formats: the `DKSEL1` embedding container, JSONL gold files and
//! small helpers for writing CSV and JSON outputs.
//!
//! An embedding file is the 6 ASCII bytes `DKSEL1`, then `n` and `d` as
//! little-endian `u32`, then `n * d` little-endian `f32` values row-major.
//! Its size is exactly `14 + 4nd` bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_pool, EmbeddingMatrix, QueryContext};

pub const MAGIC: &[u8; 6] = b"DKSEL1";
pub const HEADER_LEN: u64 = 14;

pub fn write_embeddings(path: impl AsRef<Path>, pool: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    write_raw_embeddings(path, pool.len(), pool.dim(), pool.as_flat())
}

/// Writes a buffer as-is, without validating it. Useful for producing
/// malformed test inputs and for converters.
pub fn write_raw_embeddings(path: impl AsRef<Path>, n: usize, d: usize, data: &[f32]) -> Result<()> {
    let path = path.as_ref();
    let dims = |v: usize| {
        u32::try_from(v).map_err(|_| Error::InvalidParams(format!("dimension {v} does not fit in u32")))
    };
    let (n32, d32) = (dims(n)?, dims(d)?);
    if data.len() != n * d {
        return Err(Error::DimensionMismatch {
            expected: n * d,
            found: data.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&n32.to_le_bytes())?;
        w.write_all(&d32.to_le_bytes())?;
        for x in data {
            w.write_all(&x.to_le_bytes())?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

/// Reads and validates an embedding file; off-norm rows are rescaled and counted in the log.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let (n, d, data) = read_embeddings(BufReader::new(file), actual).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    validate_pool(n, d, data).map(|(m, _)| m)
}

/// Parses a `DKSEL1` stream of `actual` bytes into `(n, d, payload)`.
pub fn read_embeddings<R: Read>(mut r: R, actual: u64) -> Result<(usize, usize, Vec<f32>)> {
    let mut header = [0u8; HEADER_LEN as usize];
    if actual < HEADER_LEN {
        let mut magic = vec![0u8; actual as usize];
        r.read_exact(&mut magic).map_err(|e| Error::io("<stream>", e))?;
        if !MAGIC.starts_with(&magic) {
            return Err(Error::BadMagic);
        }
        return Err(Error::TruncatedFile {
            offset: actual,
            expected: HEADER_LEN,
        });
    }
    r.read_exact(&mut header).map_err(|e| Error::io("<stream>", e))?;
    if &header[..6] != MAGIC {
        return Err(Error::BadMagic);
    }
    let n = u32::from_le_bytes(header[6..10].try_into().unwrap()) as u64;
    let d = u32::from_le_bytes(header[10..14].try_into().unwrap()) as u64;
    let expected = HEADER_LEN + 4 * n * d;
    if actual < expected {
        return Err(Error::TruncatedFile {
            offset: actual,
            expected,
        });
    }
    if actual > expected {
        return Err(Error::TrailingBytes { actual, expected });
    }
    let mut bytes = vec![0u8; (4 * n * d) as usize];
    r.read_exact(&mut bytes).map_err(|e| Error::io("<stream>", e))?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok((n as usize, d as usize, data))
}

/// One line of a gold file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
    /// Row of the query pool file holding this query's embedding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<usize>,
    pub gold: Vec<usize>,
}

pub fn read_gold_records(path: impl AsRef<Path>) -> Result<Vec<GoldRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GoldRecord = serde_json::from_str(&line).map_err(|source| Error::Json {
            context: format!("{}:{}", path.display(), lineno + 1),
            source,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_gold_records(path: impl AsRef<Path>, records: &[GoldRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|source| Error::Json {
            context: format!("gold record {}", r.query_id),
            source,
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Resolves gold records into query contexts against `pool`.
///
/// Records using `embedding_ref` need `query_pool`. Query ids must be unique.
pub fn load_gold(
    path: impl AsRef<Path>,
    pool: &EmbeddingMatrix,
    query_pool: Option<&EmbeddingMatrix>,
) -> Result<Vec<QueryContext>> {
    let records = read_gold_records(path)?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        if !seen.insert(rec.query_id.clone()) {
            return Err(Error::Format(format!("duplicate query_id '{}'", rec.query_id)));
        }
        let embedding = match (rec.embedding, rec.embedding_ref) {
            (Some(e), None) => e,
            (None, Some(row)) => {
                let qp = query_pool.ok_or_else(|| {
                    Error::InvalidParams(format!(
                        "query '{}' uses embedding_ref but no query pool was given",
                        rec.query_id
                    ))
                })?;
                if row >= qp.len() {
                    return Err(Error::Format(format!(
                        "query '{}': embedding_ref {row} out of range for {} rows",
                        rec.query_id,
                        qp.len()
                    )));
                }
                qp.row(row).to_vec()
            }
            _ => {
                return Err(Error::Format(format!(
                    "query '{}' needs exactly one of embedding and embedding_ref",
                    rec.query_id
                )))
            }
        };
        out.push(QueryContext::from_query(pool, rec.query_id, embedding, Some(rec.gold))?);
    }
    Ok(out)
}

/// Serializes `value` as pretty JSON to `path`.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn write_with<F>(path: impl AsRef<Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_loads_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        write_raw_embeddings(&p, 2, 2, &[1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 14 + 16);
        let m = load_embeddings(&p).unwrap();
        assert_eq!(m.as_flat(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn header_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        std::fs::write(&p, b"NOTDKS\x01\0\0\0\x01\0\0\0\0\0\x80\x3f").unwrap();
        assert!(matches!(load_embeddings(&p), Err(Error::BadMagic)));
        std::fs::write(&p, b"DKSEL").unwrap();
        assert!(matches!(
            load_embeddings(&p),
            Err(Error::TruncatedFile { offset: 5, expected: 14 })
        ));
        assert!(matches!(load_embeddings(dir.path().join("none")), Err(Error::Io { .. })));
    }
}
