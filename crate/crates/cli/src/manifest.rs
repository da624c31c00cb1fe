//! Run provenance embedded in every JSON the tool writes.
//!
//! Selection experiments are comparisons; a result file that does not say
//! which inputs and parameters produced it cannot be compared with anything.
//! Every command therefore attaches a manifest: the subcommand name, sha256
//! of each input file, the full parameter map, the tool version, and a UTC
//! timestamp.
//!
//! The timestamp honors `SOURCE_DATE_EPOCH` (seconds since the Unix epoch)
//! so reruns can be made byte-identical; it is the only wall-clock-dependent
//! field anywhere in the output.

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<InputRecord>,
    /// Flag/argument map; BTreeMap keeps key order stable across runs.
    pub parameters: BTreeMap<String, String>,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_owned(),
            inputs: Vec::new(),
            parameters: BTreeMap::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            timestamp: timestamp(),
        }
    }

    /// Record an input file with its content hash.
    pub fn input(mut self, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("cannot hash input {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        let mut sha256 = String::with_capacity(64);
        for byte in digest {
            write!(sha256, "{byte:02x}").expect("writing to a String cannot fail");
        }
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256,
        });
        Ok(self)
    }

    /// Record one parameter.
    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.parameters.insert(key.to_owned(), value.to_string());
        self
    }

    /// Record an optional parameter, skipping `None`.
    pub fn param_opt(self, key: &str, value: Option<impl ToString>) -> Self {
        match value {
            Some(v) => self.param(key, v),
            None => self,
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("manifest serializes")
    }
}

/// RFC 3339 UTC timestamp; `SOURCE_DATE_EPOCH` overrides the clock for
/// reproducible outputs.
fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    now.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Attach a manifest to a JSON object under the `"manifest"` key.
pub fn embed(mut value: serde_json::Value, manifest: &RunManifest) -> serde_json::Value {
    value
        .as_object_mut()
        .expect("output documents are JSON objects")
        .insert("manifest".to_owned(), manifest.to_value());
    value
}
