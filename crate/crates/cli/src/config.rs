//! Config files, flag overrides and the provenance hash.

use std::fmt;
use std::path::Path;

use rolecast::pipeline::RunConfig;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

/// A problem with the invocation or its inputs (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Reads the optional config file, applies `key=value` overrides (dotted
/// keys address sections, e.g. `roles.max_rank=6`) and fills in defaults.
pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> anyhow::Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<Table>().map_err(|e| usage(format!("invalid config {}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for (key, raw) in overrides {
        set_path(&mut table, key, parse_value(raw))?;
    }
    Value::Table(table).try_into::<RunConfig>().map_err(|e| usage(format!("invalid configuration: {e}")))
}

/// TOML literal if it parses as one, otherwise a plain string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> anyhow::Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(usage(format!("malformed override key {key:?}")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| usage(format!("override {key:?}: {part} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// SHA-256 of the config's canonical JSON form, leaving out `output_dir`:
/// where results are written does not change them.
pub fn hash(cfg: &RunConfig) -> String {
    let mut value = serde_json::to_value(cfg).expect("config serializes");
    if let Some(map) = value.as_object_mut() {
        map.remove("output_dir");
    }
    let canonical = value.to_string();
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string_pretty(cfg).expect("config serializes to TOML")
}
