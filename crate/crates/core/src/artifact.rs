//! Versioned JSON artifacts written between pipeline stages.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "1.0";

fn major(version: &str) -> Option<u32> {
    version.split('.').next()?.parse().ok()
}

pub fn check_schema_version(found: &str) -> Result<()> {
    if major(found) == major(SCHEMA_VERSION) {
        Ok(())
    } else {
        Err(Error::Schema {
            path: "schema_version".into(),
            reason: format!("unsupported version {found}, expected {SCHEMA_VERSION}"),
        })
    }
}

/// Parses a versioned artifact. Errors name the offending field path.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema {
        path: ".".into(),
        reason: e.to_string(),
    })?;
    match value.get("schema_version").and_then(|v| v.as_str()) {
        Some(v) => check_schema_version(v)?,
        None => {
            return Err(Error::Schema {
                path: "schema_version".into(),
                reason: "missing".into(),
            })
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        reason: e.inner().to_string(),
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    from_json_str(&text)
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types always serialize");
    s.push('\n');
    s
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(to_json_string(value).as_bytes())?;
    w.flush()?;
    Ok(())
}
