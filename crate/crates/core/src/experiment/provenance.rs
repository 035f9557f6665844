use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SCHEMA};
use crate::error::{Error, Result};

pub const TOOL: &str = "nlk";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Identifies the config, seed and code version behind an output file.
/// Deliberately carries no timestamp so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub schema: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            schema: SCHEMA.into(),
            config_sha256: cfg.hash(),
            seed: cfg.seed,
        }
    }

    /// First line of every CSV file.
    pub fn header_line(&self) -> String {
        format!(
            "# {} {} schema={} config_sha256={} seed={}",
            self.tool, self.version, self.schema, self.config_sha256, self.seed
        )
    }
}

/// Comma-separated table preceded by a provenance comment.
#[derive(Debug, Clone)]
pub struct CsvTable {
    text: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(provenance: &Provenance, header: &[&str]) -> Self {
        let mut text = provenance.header_line();
        text.push('\n');
        text.push_str(&header.join(","));
        text.push('\n');
        Self {
            text,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[&dyn std::fmt::Display]) {
        assert_eq!(fields.len(), self.columns, "row width must match the header");
        for (k, f) in fields.iter().enumerate() {
            if k > 0 {
                self.text.push(',');
            }
            write!(self.text, "{f}").expect("writing to a String cannot fail");
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.text)
    }
}

/// Reads a provenance-headed CSV, returning the header and the records.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let bad = |e: csv::Error| Error::format(format!("{}: {e}", path.display()));
    let header = reader.headers().map_err(bad)?.iter().map(str::to_owned).collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>().map_err(bad)?;
    Ok((header, rows))
}

pub fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, k: usize, path: &Path) -> Result<T> {
    record
        .get(k)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(format!("{}: bad field {k} in row {:?}", path.display(), record)))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}
