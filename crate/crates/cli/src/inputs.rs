//! Line-oriented input files.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use cbsdecode::{ConstraintSpec, Error, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// One decode input.
#[derive(Debug, Clone, Deserialize)]
pub struct DecodeInput {
    #[serde(default)]
    pub id: serde_json::Value,
    #[serde(default)]
    pub features: Option<Vec<f64>>,
    /// Extra constraints for this input only, added to the global spec.
    #[serde(default)]
    pub constraints: Option<ConstraintSpec>,
}

impl DecodeInput {
    pub fn default_single() -> Self {
        DecodeInput {
            id: serde_json::Value::from(0),
            features: None,
            constraints: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct LmSentence {
    pub text: String,
    #[serde(default)]
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct F1Line {
    pub generated: String,
    pub references: Vec<String>,
}

/// Parses every non-blank line of a JSONL file.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Non-blank lines, trimmed.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() {
            out.push(t.to_string());
        }
    }
    Ok(out)
}
