//! Dotted-key overrides merged into a JSON config before it is parsed, so
//! flags go through the same unknown-key validation as config files.

use serde_json::{Map, Value};

use crate::failure::{CliResult, Failure};

/// Parses `KEY=VALUE`; the value is JSON when it parses, a string otherwise.
pub fn parse_assignment(s: &str) -> CliResult<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Failure::Config(format!("override {s:?} is not KEY=VALUE")))?;
    if k.is_empty() {
        return Err(Failure::Config(format!("override {s:?} has an empty key")));
    }
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

/// Sets `a.b.c` in `root`, creating intermediate objects.
pub fn set_path(root: &mut Value, key: &str, value: Value) -> CliResult {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            return Err(Failure::Config(format!(
                "cannot set {key}: {} is not an object",
                parts[..i].join(".")
            )));
        }
        let obj = cur.as_object_mut().expect("checked");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}
