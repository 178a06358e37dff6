//! Run reports. A report is an ordered JSON object; `--json` prints it as
//! is, otherwise it is rendered as indented `key: value` lines where every
//! number is shown rounded and again with 17 significant digits.

use std::io::Write;

use serde_json::{Map, Value};

/// `v` with 17 significant digits, enough to round-trip any double.
pub fn full(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn short(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-3..1e6).contains(&a) {
        format!("{v:.6}")
    } else {
        format!("{v:.6e}")
    }
}

/// JSON has no NaN or infinities; those become strings.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(v.to_string()), Value::Number)
}

pub fn nums(vs: &[f64]) -> Value {
    Value::Array(vs.iter().map(|v| num(*v)).collect())
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    fields: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut r = Self::default();
        r.set("command", command);
        r
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.fields.insert(key.to_string(), value.into());
        self
    }

    pub fn set_num(&mut self, key: &str, v: f64) -> &mut Self {
        self.set(key, num(v))
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.get(key)
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.fields)
    }

    pub fn write(&self, out: &mut dyn Write, json: bool) -> std::io::Result<()> {
        if json {
            let text = serde_json::to_string_pretty(&self.fields).expect("report values serialise");
            writeln!(out, "{text}")
        } else {
            for (k, v) in &self.fields {
                write_text(out, k, v, 0)?;
            }
            Ok(())
        }
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{}  [{}]", short(f), full(f)),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Null => "-".into(),
        _ => unreachable!("containers are handled by the caller"),
    }
}

fn write_text(out: &mut dyn Write, key: &str, v: &Value, depth: usize) -> std::io::Result<()> {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(m) => {
            writeln!(out, "{pad}{key}:")?;
            for (k, v) in m {
                write_text(out, k, v, depth + 1)?;
            }
            Ok(())
        }
        Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => {
            let parts: Vec<String> = items
                .iter()
                .map(|i| match i {
                    Value::Number(n) if n.is_f64() => full(n.as_f64().unwrap_or(f64::NAN)),
                    other => scalar_text(other),
                })
                .collect();
            writeln!(out, "{pad}{key}: [{}]", parts.join(", "))
        }
        Value::Array(items) => {
            writeln!(out, "{pad}{key}:")?;
            for (i, item) in items.iter().enumerate() {
                write_text(out, &format!("[{i}]"), item, depth + 1)?;
            }
            Ok(())
        }
        other => writeln!(out, "{pad}{key}: {}", scalar_text(other)),
    }
}
