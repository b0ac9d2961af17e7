//! JSON configuration loading shared by all subcommands.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::{SubcommandKind, SCHEMA_VERSION, TOOL_NAME};

/// Byte offset of a 1-based `(line, column)` position in `text`.
pub fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub fn parse_json(text: &str) -> CliResult<Value> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })
}

/// Reads the config for `kind`, unwrapping a run manifest if one is given,
/// and applies the `--seed` override.
pub fn load_config(path: &Path, kind: SubcommandKind, seed: Option<u64>) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value = parse_json(&text)?;
    let mut config = unwrap_manifest(value, kind)?;
    let Value::Object(map) = &mut config else {
        return Err(CliError::Config("top level must be a JSON object".into()));
    };
    if let Some(v) = map.remove("schema_version") {
        if v.as_u64() != Some(SCHEMA_VERSION) {
            return Err(CliError::Field {
                path: "schema_version".into(),
                message: format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
            });
        }
    }
    if let Some(s) = seed {
        if kind.is_seeded() {
            map.insert("seed".into(), Value::from(s));
        }
    }
    Ok(config)
}

fn unwrap_manifest(value: Value, kind: SubcommandKind) -> CliResult<Value> {
    let is_manifest = value.get("tool").and_then(Value::as_str) == Some(TOOL_NAME)
        && value.get("config").is_some();
    if !is_manifest {
        return Ok(value);
    }
    let recorded = value
        .get("subcommand")
        .and_then(Value::as_str)
        .unwrap_or_default();
    if recorded != kind.name() {
        return Err(CliError::Config(format!(
            "manifest was written by `{recorded}`, not `{}`",
            kind.name()
        )));
    }
    Ok(value["config"].clone())
}

/// Deserializes `value`, naming the offending field on failure.
pub fn typed<T: DeserializeOwned>(value: Value) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| CliError::Field {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_follow_lines() {
        let text = "{\n  \"a\": 1,\n  oops\n}";
        assert_eq!(byte_offset(text, 1, 1), 0);
        assert_eq!(byte_offset(text, 3, 3), 14);
        assert_eq!(&text[14..18], "oops");
        assert_eq!(byte_offset(text, 9, 9), text.len());
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let text = "{\"n\": 3,, }";
        match parse_json(text) {
            Err(CliError::Parse { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("unexpected {other:?}"),
        }
    }
}
