//! Line-oriented JSON reading with typed field access.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use super::CorpusError;

/// One parsed JSONL line and its 1-based line number.
pub(crate) struct Line {
    pub no: usize,
    pub obj: Map<String, Value>,
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<Line>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, text) in raw.lines().enumerate() {
        let no = i + 1;
        let value: Value = serde_json::from_str(text).map_err(|e| CorpusError::MalformedLine {
            line: no,
            reason: e.to_string(),
        })?;
        match value {
            Value::Object(obj) => out.push(Line { no, obj }),
            _ => {
                return Err(CorpusError::MalformedLine {
                    line: no,
                    reason: "expected a JSON object".into(),
                })
            }
        }
    }
    Ok(out)
}

impl Line {
    fn field(&self, name: &'static str) -> Result<&Value, CorpusError> {
        self.obj.get(name).ok_or(CorpusError::MissingField {
            line: self.no,
            field: name,
        })
    }

    fn invalid(&self, field: &'static str, reason: impl Into<String>) -> CorpusError {
        CorpusError::InvalidValue {
            line: self.no,
            field,
            reason: reason.into(),
        }
    }

    pub fn str(&self, name: &'static str) -> Result<&str, CorpusError> {
        self.field(name)?
            .as_str()
            .ok_or_else(|| self.invalid(name, "expected a string"))
    }

    pub fn case_id(&self) -> Result<String, CorpusError> {
        let id = self.str("case_id")?;
        if id.trim().is_empty() {
            return Err(self.invalid("case_id", "must be nonempty"));
        }
        Ok(id.to_string())
    }

    pub fn uint(&self, name: &'static str) -> Result<u64, CorpusError> {
        self.field(name)?
            .as_u64()
            .ok_or_else(|| self.invalid(name, "expected a nonnegative integer"))
    }

    /// Present-and-null and absent both read as `None`.
    pub fn opt_uint(&self, name: &'static str) -> Result<Option<u64>, CorpusError> {
        match self.obj.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| self.invalid(name, "expected a nonnegative integer or null")),
        }
    }

    pub fn sample_index(&self) -> Result<usize, CorpusError> {
        let t = self.uint("sample_index")?;
        if t == 0 {
            return Err(self.invalid("sample_index", "sample indices are 1-based"));
        }
        Ok(t as usize)
    }

    pub fn opt_sample_index(&self) -> Result<Option<usize>, CorpusError> {
        match self.opt_uint("sample_index")? {
            Some(0) => Err(self.invalid("sample_index", "sample indices are 1-based")),
            other => Ok(other.map(|t| t as usize)),
        }
    }

    pub fn finite(&self, name: &'static str) -> Result<f64, CorpusError> {
        let v = self
            .field(name)?
            .as_f64()
            .ok_or_else(|| self.invalid(name, "expected a number"))?;
        if !v.is_finite() {
            return Err(self.invalid(name, "must be finite"));
        }
        Ok(v)
    }

    pub fn array(&self, name: &'static str) -> Result<&Vec<Value>, CorpusError> {
        self.field(name)?
            .as_array()
            .ok_or_else(|| self.invalid(name, "expected an array"))
    }

    pub fn error(&self, field: &'static str, reason: impl Into<String>) -> CorpusError {
        self.invalid(field, reason)
    }
}

/// Writes one compact JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
