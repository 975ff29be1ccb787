//! Config loading and self-describing result files.
//!
//! Every file written here records the toolkit version, the SHA-256 of the
//! effective config (canonical JSON) and the master seed: JSON-lines files
//! in a leading header record, CSV files in a leading `#` comment line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parses a TOML file, or JSON when the extension is `.json`.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")))
}

pub fn parse_config<T: DeserializeOwned>(text: &str, json: bool) -> Result<T> {
    if json {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Hex SHA-256 of the config's canonical JSON form.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let json = serde_json::to_string(cfg).map_err(|e| Error::Format(e.to_string()))?;
    Ok(format!("{:x}", Sha256::digest(json.as_bytes())))
}

/// Provenance of one output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Header {
    pub fn new<T: Serialize>(command: &str, cfg: &T, seed: u64) -> Result<Self> {
        Ok(Self {
            tool: "dpvote".into(),
            version: VERSION.into(),
            command: command.into(),
            config_sha256: config_hash(cfg)?,
            seed,
        })
    }

    pub fn csv_comment(&self) -> String {
        format!(
            "# {} {} command={} config_sha256={} seed={}",
            self.tool, self.version, self.command, self.config_sha256, self.seed
        )
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Writes files under one directory, creating it on first use.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    header: Header,
}

impl OutputDir {
    pub fn new(root: impl Into<PathBuf>, header: Header) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io(&root, e))?;
        Ok(Self { root, header })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Header record followed by one JSON object per line.
    pub fn write_jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut buf = serde_json::to_string(&serde_json::json!({ "header": self.header }))
            .map_err(|e| Error::Format(e.to_string()))?;
        buf.push('\n');
        for r in records {
            buf.push_str(&serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?);
            buf.push('\n');
        }
        fs::write(&path, buf).map_err(|e| io(&path, e))?;
        Ok(path)
    }

    /// Comment line, then a header row and one row per record.
    pub fn write_csv<T: Serialize>(&self, name: &str, records: &[T]) -> Result<PathBuf> {
        let path = self.path(name);
        let mut out = Vec::new();
        writeln!(out, "{}", self.header.csv_comment()).map_err(|e| io(&path, e))?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in records {
                w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
            }
            w.flush().map_err(|e| io(&path, e))?;
        }
        fs::write(&path, out).map_err(|e| io(&path, e))?;
        Ok(path)
    }

    /// Pretty JSON document `{ "header": ..., "body": ... }`.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let path = self.path(name);
        #[derive(Serialize)]
        struct Document<'a, T> {
            header: &'a Header,
            body: &'a T,
        }
        let mut text = serde_json::to_string_pretty(&Document { header: &self.header, body })
            .map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io(&path, e))?;
        Ok(path)
    }
}
