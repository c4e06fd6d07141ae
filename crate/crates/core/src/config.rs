//! Shared configuration error type and JSON helpers.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("bad override `{key}`: {message}")]
    Override { key: String, message: String },
}

impl ConfigError {
    pub fn violations(&self) -> Vec<String> {
        match self {
            ConfigError::Invalid(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }
}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

/// Collects violations so validation can report all of them at once.
#[derive(Debug, Default)]
pub struct Violations(Vec<String>);

impl Violations {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    pub fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    pub fn positive(&mut self, field: &str, value: f64) {
        self.check(value.is_finite() && value > 0.0, || {
            format!("{field} must be positive and finite (got {value})")
        });
    }

    pub fn non_negative(&mut self, field: &str, value: f64) {
        self.check(value.is_finite() && value >= 0.0, || {
            format!("{field} must be non-negative and finite (got {value})")
        });
    }

    pub fn finite(&mut self, field: &str, value: f64) {
        self.check(value.is_finite(), || {
            format!("{field} must be finite (got {value})")
        });
    }

    pub fn extend(&mut self, other: Violations) {
        self.0.extend(other.0);
    }

    pub fn extend_prefixed(&mut self, prefix: &str, other: Vec<String>) {
        self.0
            .extend(other.into_iter().map(|m| format!("{prefix}.{m}")));
    }

    pub fn into_messages(self) -> Vec<String> {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_result(self) -> Result<(), ConfigError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(self.0))
        }
    }
}

/// Applies a `dotted.key=value` override to a JSON document in place.
///
/// The value is parsed as JSON when possible (`3`, `true`, `[1,2]`) and falls
/// back to a bare string. Intermediate objects are created as needed.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override {
            key: assignment.to_string(),
            message: "expected key=value".into(),
        })?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::Override {
            key: key.to_string(),
            message: "empty key segment".into(),
        });
    }
    let value: Value =
        serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));

    let mut cursor = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| ConfigError::Override {
                key: key.to_string(),
                message: format!("`{}` is not an object", parts[..i].join(".")),
            })?;
        if last {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cursor = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last segment")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_sets_nested_values() {
        let mut doc = json!({"controller": {"rate_inner_hz": 1000}});
        apply_override(&mut doc, "controller.rate_inner_hz=0").unwrap();
        apply_override(&mut doc, "airframe.mass=0.9").unwrap();
        apply_override(&mut doc, "name=abc").unwrap();
        assert_eq!(doc["controller"]["rate_inner_hz"], json!(0));
        assert_eq!(doc["airframe"]["mass"], json!(0.9));
        assert_eq!(doc["name"], json!("abc"));
    }

    #[test]
    fn override_rejects_bad_syntax() {
        let mut doc = json!({"a": 1});
        assert!(apply_override(&mut doc, "novalue").is_err());
        assert!(apply_override(&mut doc, "a..b=1").is_err());
        assert!(apply_override(&mut doc, "a.b=1").is_err());
    }

    #[test]
    fn parse_error_carries_position() {
        let err: ConfigError = serde_json::from_str::<Value>("{\n  \"a\": ,\n}")
            .unwrap_err()
            .into();
        match err {
            ConfigError::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
