//! Provenance headers, rendering and atomic writes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const TOOL: &str = "bdre";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: ExperimentConfig,
}

impl Provenance {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
        }
    }
}

pub enum Artifact {
    Table {
        header: Vec<&'static str>,
        rows: Vec<Vec<String>>,
    },
    Json(Value),
}

/// Shortest representation that parses back to the same f64.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// CSV gets the provenance as a leading `# {json}` line, JSON gets it as
/// the `provenance` member next to `result`.
pub fn render(prov: &Provenance, artifact: &Artifact) -> Result<Vec<u8>, CliError> {
    let header = serde_json::to_string(prov).map_err(|e| CliError::Io(e.to_string()))?;
    match artifact {
        Artifact::Table { header: cols, rows } => {
            let mut out = Vec::new();
            writeln!(out, "# {header}").map_err(|e| CliError::Io(e.to_string()))?;
            {
                let mut w = csv::Writer::from_writer(&mut out);
                let io = |e: csv::Error| CliError::Io(e.to_string());
                w.write_record(cols).map_err(io)?;
                for r in rows {
                    w.write_record(r).map_err(io)?;
                }
                w.flush().map_err(|e| CliError::Io(e.to_string()))?;
            }
            Ok(out)
        }
        Artifact::Json(v) => {
            let doc = serde_json::json!({ "provenance": prov, "result": v });
            let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

/// Temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Reads a provenance header back from CSV or JSON output.
pub fn read_provenance(text: &str) -> Result<Provenance, CliError> {
    let bad = |e: serde_json::Error| CliError::Config(format!("unreadable provenance: {e}"));
    if let Some(first) = text.lines().next().and_then(|l| l.strip_prefix("# ")) {
        return serde_json::from_str(first).map_err(bad);
    }
    let doc: Value = serde_json::from_str(text).map_err(bad)?;
    serde_json::from_value(doc.get("provenance").cloned().unwrap_or(doc)).map_err(bad)
}
