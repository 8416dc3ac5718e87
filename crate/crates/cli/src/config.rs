//! Settings resolution: defaults, then a JSON config file, then flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

fn overlay(base: &mut Map<String, Value>, top: Map<String, Value>, origin: &str) -> Result<(), CliError> {
    for (k, v) in top {
        if v.is_null() {
            continue;
        }
        if !base.contains_key(&k) {
            return Err(CliError::usage(format!("unknown setting {k:?} in {origin}")));
        }
        base.insert(k, v);
    }
    Ok(())
}

fn as_object(v: Value, origin: &str) -> Result<Map<String, Value>, CliError> {
    match v {
        Value::Object(m) => Ok(m),
        _ => Err(CliError::usage(format!("{origin} must be a JSON object"))),
    }
}

/// Merges `S::default()`, the optional config file and the flags that were
/// given (`None` flags serialize to null and are skipped).
pub fn resolve<S, F>(flags: &F, config: Option<&Path>) -> Result<S, CliError>
where
    S: Default + Serialize + DeserializeOwned,
    F: Serialize,
{
    let to_value = |v: serde_json::Result<Value>| v.map_err(|e| CliError::usage(e.to_string()));
    let mut merged = as_object(to_value(serde_json::to_value(S::default()))?, "defaults")?;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        overlay(&mut merged, as_object(file, "config file")?, &path.display().to_string())?;
    }
    overlay(&mut merged, as_object(to_value(serde_json::to_value(flags))?, "flags")?, "flags")?;
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::usage(format!("invalid setting: {e}")))
}

pub fn write_effective<S: Serialize>(settings: &S, path: &Path) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(settings).map_err(|e| CliError::usage(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}
