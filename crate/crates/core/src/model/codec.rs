//! Line-delimited manifest encoding.
//!
//! A manifest is UTF-8 JSON Lines: one `header` record, then one `image`
//! record per image (objects and RLE masks inline), then one `question`
//! record per question. Keys appear in a fixed order, integers are printed in
//! decimal, no whitespace is emitted inside a record and every line ends with
//! `\n`. Parsing then re-serializing a manifest in this form reproduces it
//! byte for byte.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::types::{DatasetManifest, ImageEntry, MatchingQuestion, Provenance};
use crate::hash::sha256_hex;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest has no header record")]
    MissingHeader,
    #[error("line {0}: second header record")]
    DuplicateHeader(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Header { version: String, provenance: Provenance },
    Image(ImageEntry),
    Question(MatchingQuestion),
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RecordRef<'a> {
    Header {
        version: &'a str,
        provenance: &'a Provenance,
    },
    Image(&'a ImageEntry),
    Question(&'a MatchingQuestion),
}

fn write_record<W: Write>(out: &mut W, r: &RecordRef<'_>) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, r)?;
    out.write_all(b"\n")
}

pub fn write_manifest<W: Write>(m: &DatasetManifest, mut out: W) -> std::io::Result<()> {
    write_record(
        &mut out,
        &RecordRef::Header {
            version: &m.version,
            provenance: &m.provenance,
        },
    )?;
    for e in &m.images {
        write_record(&mut out, &RecordRef::Image(e))?;
    }
    for q in &m.questions {
        write_record(&mut out, &RecordRef::Question(q))?;
    }
    Ok(())
}

/// Canonical byte encoding of a manifest.
pub fn canonical_serialize(m: &DatasetManifest) -> Vec<u8> {
    let mut buf = Vec::new();
    write_manifest(m, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn manifest_hash(m: &DatasetManifest) -> String {
    sha256_hex(&canonical_serialize(m))
}

pub fn read_manifest<R: BufRead>(input: R) -> Result<DatasetManifest, ManifestError> {
    let mut header: Option<(String, Provenance)> = None;
    let mut images = Vec::new();
    let mut questions = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| ManifestError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        match rec {
            Record::Header { version, provenance } => {
                if header.is_some() {
                    return Err(ManifestError::DuplicateHeader(lineno));
                }
                header = Some((version, provenance));
            }
            Record::Image(e) => images.push(e),
            Record::Question(q) => questions.push(q),
        }
    }
    let (version, provenance) = header.ok_or(ManifestError::MissingHeader)?;
    Ok(DatasetManifest {
        version,
        provenance,
        images,
        questions,
    })
}

pub fn parse_manifest(bytes: &[u8]) -> Result<DatasetManifest, ManifestError> {
    read_manifest(bytes)
}

pub fn load_manifest(path: &std::path::Path) -> Result<DatasetManifest, ManifestError> {
    let f = std::fs::File::open(path)?;
    read_manifest(std::io::BufReader::new(f))
}

pub fn save_manifest(m: &DatasetManifest, path: &std::path::Path) -> std::io::Result<()> {
    std::fs::write(path, canonical_serialize(m))
}
