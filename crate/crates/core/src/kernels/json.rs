use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Consumes fields from a JSON object and rejects whatever is left over.
pub struct ObjectReader {
    what: &'static str,
    fields: Map<String, Value>,
}

impl ObjectReader {
    pub fn new(value: &Value, what: &'static str) -> Result<Self> {
        match value {
            Value::Object(map) => Ok(ObjectReader { what, fields: map.clone() }),
            other => Err(Error::InvalidSpec(format!("{what} must be a JSON object, got {other}"))),
        }
    }

    pub fn take(&mut self, key: &str) -> Option<Value> {
        self.fields.remove(key)
    }

    pub fn take_required(&mut self, key: &str) -> Result<Value> {
        self.take(key).ok_or_else(|| Error::InvalidSpec(format!("{} needs `{key}`", self.what)))
    }

    pub fn take_string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(Error::InvalidSpec(format!("{}: `{key}` must be a string, got {other}", self.what))),
        }
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(other) => Err(Error::InvalidSpec(format!("{}: `{key}` must be a number, got {other}", self.what))),
        }
    }

    pub fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Number(n)) if n.as_u64().is_some() => Ok(n.as_u64().map(|v| v as usize)),
            Some(other) => Err(Error::InvalidSpec(format!(
                "{}: `{key}` must be a non-negative integer, got {other}",
                self.what
            ))),
        }
    }

    pub fn take_f64_vec(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| Error::InvalidSpec(format!("{}: `{key}` entries must be numbers", self.what)))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(other) => Err(Error::InvalidSpec(format!("{}: `{key}` must be an array, got {other}", self.what))),
        }
    }

    pub fn finish(self) -> Result<()> {
        match self.fields.keys().next() {
            None => Ok(()),
            Some(key) => Err(Error::InvalidSpec(format!("{}: unknown field `{key}`", self.what))),
        }
    }
}
