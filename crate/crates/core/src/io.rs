//! File formats shared by the CLI stages.
//!
//! Raw events are JSON Lines, one `RawEvent` per line with fields in wire
//! order `patient_id, day, modality, code, value`. Every other artifact is
//! a JSON document wrapped in a [`Versioned`] envelope or a CSV file, and
//! each stage writes a [`Manifest`] with SHA-256 hashes of its inputs and
//! outputs.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ehr_model::RawEvent;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub fn read_events_jsonl(path: &Path) -> Result<Vec<RawEvent>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: RawEvent = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

pub fn write_events_jsonl(path: &Path, events: impl IntoIterator<Item = RawEvent>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut w, &e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// A JSON artifact tagged with its kind and schema version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    pub kind: String,
    pub data: T,
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, data: &T) -> Result<()> {
    let doc = Versioned {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        data,
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let s = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let doc: Versioned<T> = serde_json::from_str(&s)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    if doc.kind != kind {
        return Err(Error::data(format!(
            "{} holds a '{}' artifact, expected '{kind}'",
            path.display(),
            doc.kind
        )));
    }
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::data(format!(
            "{}: schema version {} is not supported",
            path.display(),
            doc.schema_version
        )));
    }
    Ok(doc.data)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Provenance record for one stage run. Contains nothing that varies
/// between reruns: no timestamps, no output directory, no thread count.
/// Volatile outputs (wall-clock logs) are listed without a hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub stage: String,
    pub parameters: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub volatile: Vec<String>,
}

pub struct ManifestBuilder {
    manifest: Manifest,
    out_dir: PathBuf,
}

impl ManifestBuilder {
    pub fn new(stage: &str, parameters: serde_json::Value, seeds: Vec<u64>, out_dir: &Path) -> Self {
        ManifestBuilder {
            manifest: Manifest {
                schema_version: SCHEMA_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                stage: stage.to_string(),
                parameters,
                seeds,
                inputs: vec![],
                outputs: vec![],
                volatile: vec![],
            },
            out_dir: out_dir.to_path_buf(),
        }
    }

    /// Records an input by file name plus content hash.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.manifest.inputs.push(FileHash {
            path: name,
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    /// Records an output that already exists in the output directory.
    pub fn output(&mut self, name: &str) -> Result<()> {
        let sha256 = sha256_file(&self.out_dir.join(name))?;
        self.manifest.outputs.push(FileHash {
            path: name.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn volatile(&mut self, name: &str) {
        self.manifest.volatile.push(name.to_string());
    }

    /// Writes `manifest.<stage>.json` and returns the manifest.
    pub fn finish(self) -> Result<Manifest> {
        let path = self.out_dir.join(format!("manifest.{}.json", self.manifest.stage));
        let mut s = serde_json::to_string_pretty(&self.manifest)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(self.manifest)
    }
}

/// Minimal CSV writer: quotes fields containing separators or quotes.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Splits one CSV line, honouring double-quoted fields.
pub fn csv_split(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

/// Header plus rows of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.is_empty());
    let header = csv_split(lines.next().ok_or_else(|| Error::data(format!("{} is empty", path.display())))?);
    let rows: Vec<Vec<String>> = lines.map(csv_split).collect();
    if let Some(bad) = rows.iter().position(|r| r.len() != header.len()) {
        return Err(Error::data(format!("{}: row {} has the wrong width", path.display(), bad + 2)));
    }
    Ok((header, rows))
}
