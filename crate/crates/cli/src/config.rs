//! Simulation config assembly: preset or defaults, then a config file,
//! then `--set key=value` overrides. Unknown keys are rejected by name.

use std::path::Path;

use anyhow::{anyhow, Context, Result};

use crate::usage;
use hdtest::sim::{SimulationConfig, TestId};
use serde_json::{Map, Value};

/// Parses a config file: a JSON object, or `key = value` lines with `#`
/// comments.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let obj: Map<String, Value> =
            serde_json::from_str(&text).with_context(|| format!("parsing JSON config {}", path.display()))?;
        return Ok(obj.into_iter().map(|(k, v)| (k, v.to_string())).collect());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let kv = split_kv(line).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(kv);
    }
    Ok(out)
}

pub fn split_kv(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| usage(format!("expected key=value, got '{s}'")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_value(key: &str, raw: &str) -> Result<Value> {
    if key == "tests" && !raw.trim_start().starts_with('[') {
        let ids = raw
            .split(',')
            .map(|t| t.trim().parse::<TestId>().map_err(|e| anyhow!("{e}")))
            .collect::<Result<Vec<_>>>()?;
        return Ok(serde_json::to_value(ids)?);
    }
    if key == "tests" {
        let names: Vec<String> = serde_json::from_str(raw).with_context(|| format!("bad list for '{key}'"))?;
        let ids = names
            .iter()
            .map(|t| t.parse::<TestId>().map_err(|e| anyhow!("{e}")))
            .collect::<Result<Vec<_>>>()?;
        return Ok(serde_json::to_value(ids)?);
    }
    Ok(serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string())))
}

/// Applies overrides to `base`; every key must name a config field.
pub fn apply_overrides(base: &SimulationConfig, overrides: &[(String, String)]) -> Result<SimulationConfig> {
    let mut obj = match serde_json::to_value(base)? {
        Value::Object(m) => m,
        _ => unreachable!("config serializes to an object"),
    };
    for (k, raw) in overrides {
        if !obj.contains_key(k) {
            let mut known: Vec<&String> = obj.keys().collect();
            known.sort();
            return Err(usage(format!(
                "unknown config key '{k}' (known: {})",
                known.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        let v = parse_value(k, raw).map_err(usage)?;
        obj.insert(k.clone(), v);
    }
    let cfg: SimulationConfig =
        serde_json::from_value(Value::Object(obj)).map_err(|e| usage(format!("invalid config value: {e}")))?;
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}
