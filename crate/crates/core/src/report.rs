//! Deterministic text and JSON emitters.
//!
//! Numbers are written with 17 significant digits in scientific notation and
//! every line ends in `\n`, so identical inputs give byte-identical files.

use serde_json::{Map, Number, Value};

/// 17 significant digits, round-trip exact.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Num(x) => fmt_num(*x),
            Field::Int(k) => k.to_string(),
            Field::Bool(b) => b.to_string(),
            Field::Text(s) => s.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Field::Num(x) => Number::from_f64(*x).map(Value::Number).unwrap_or_else(|| Value::String(fmt_num(*x))),
            Field::Int(k) => Value::from(*k),
            Field::Bool(b) => Value::Bool(*b),
            Field::Text(s) => Value::String(s.clone()),
        }
    }
}

/// Ordered `key: value` record with `#` comment lines on top.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueReport {
    header: Vec<String>,
    entries: Vec<(String, Field)>,
}

impl KeyValueReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.header.push(line.into());
        self
    }

    pub fn num(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.entries.push((key.into(), Field::Num(value)));
        self
    }

    pub fn int(&mut self, key: impl Into<String>, value: i64) -> &mut Self {
        self.entries.push((key.into(), Field::Int(value)));
        self
    }

    pub fn flag(&mut self, key: impl Into<String>, value: bool) -> &mut Self {
        self.entries.push((key.into(), Field::Bool(value)));
        self
    }

    pub fn text(&mut self, key: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.entries.push((key.into(), Field::Text(value.into())));
        self
    }

    pub fn get(&self, key: &str) -> Option<&Field> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn entries(&self) -> &[(String, Field)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in &self.header {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(": ");
            out.push_str(&v.render());
            out.push('\n');
        }
        out
    }

    /// Flat JSON object with keys in sorted order.
    pub fn to_json(&self) -> String {
        let map: Map<String, Value> = self.entries.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
        let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("flat map serializes");
        s.push('\n');
        s
    }
}
