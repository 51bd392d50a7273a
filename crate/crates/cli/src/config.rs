//! `key = value` configuration with `[section]` headers, resolved against a
//! per-command schema: defaults, then the file, then command-line flags.

use std::fmt;
use std::path::Path;

use toml::Value;

/// Input that fails validation (exit code 2).
#[derive(Debug)]
pub struct ValidationError(pub String);

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ValidationError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Flag,
}

impl Source {
    fn as_str(self) -> &'static str {
        match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Flag => "flag",
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    section: &'static str,
    key: &'static str,
    value: Value,
    source: Source,
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug)]
pub struct Config {
    command: &'static str,
    entries: Vec<Entry>,
}

fn same_kind(a: &Value, b: &Value) -> bool {
    matches!(
        (a, b),
        (Value::String(_), Value::String(_))
            | (Value::Integer(_), Value::Integer(_))
            | (Value::Float(_), Value::Float(_) | Value::Integer(_))
            | (Value::Boolean(_), Value::Boolean(_))
            | (Value::Array(_), Value::Array(_))
    )
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a number",
        Value::Boolean(_) => "a boolean",
        Value::Array(_) => "an array",
        _ => "a scalar",
    }
}

fn section_label(section: &str) -> String {
    if section.is_empty() {
        "top level".to_string()
    } else {
        format!("section [{section}]")
    }
}

impl Config {
    /// Defaults for `command`; every key a file or flag may set must appear.
    pub fn new(command: &'static str, schema: &[(&'static str, &'static str, Value)]) -> Self {
        let entries = schema
            .iter()
            .map(|(section, key, value)| Entry { section, key, value: value.clone(), source: Source::Default })
            .collect();
        Self { command, entries }
    }

    fn slot(&mut self, section: &str, key: &str) -> Option<&mut Entry> {
        self.entries.iter_mut().find(|e| e.section == section && e.key == key)
    }

    fn assign(&mut self, section: &str, key: &str, value: Value, source: Source) -> anyhow::Result<()> {
        let Some(entry) = self.slot(section, key) else {
            return Err(invalid(format!("unknown key `{key}` in {}", section_label(section))));
        };
        if !same_kind(&entry.value, &value) {
            return Err(invalid(format!(
                "key `{key}` in {} must be {}",
                section_label(section),
                kind_name(&entry.value)
            )));
        }
        entry.value = match (&entry.value, value) {
            (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
            (_, v) => v,
        };
        entry.source = source;
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        self.load_str(&text).map_err(|e| match e.downcast::<ValidationError>() {
            Ok(v) => invalid(format!("{}: {}", path.display(), v.0)),
            Err(e) => e,
        })
    }

    pub fn load_str(&mut self, text: &str) -> anyhow::Result<()> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid(format!("config: {e}")))?;
        for (key, value) in table {
            match value {
                Value::Table(inner) => {
                    if !self.entries.iter().any(|e| e.section == key) {
                        return Err(invalid(format!("unknown section [{key}]")));
                    }
                    let section = self.entries.iter().find(|e| e.section == key).map(|e| e.section).unwrap();
                    for (k, v) in inner {
                        self.assign(section, &k, v, Source::File)?;
                    }
                }
                v => self.assign("", &key, v, Source::File)?,
            }
        }
        Ok(())
    }

    /// Applies a flag value when present.
    pub fn flag(&mut self, section: &str, key: &str, value: Option<Value>) -> anyhow::Result<()> {
        match value {
            Some(v) => self.assign(section, key, v, Source::Flag),
            None => Ok(()),
        }
    }

    fn get(&self, section: &str, key: &str) -> &Value {
        &self
            .entries
            .iter()
            .find(|e| e.section == section && e.key == key)
            .unwrap_or_else(|| panic!("schema lacks [{section}] {key}"))
            .value
    }

    pub fn f64(&self, section: &str, key: &str) -> f64 {
        match self.get(section, key) {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            v => panic!("[{section}] {key} is not numeric: {v}"),
        }
    }

    pub fn i64(&self, section: &str, key: &str) -> i64 {
        self.get(section, key).as_integer().unwrap_or_else(|| panic!("[{section}] {key} is not an integer"))
    }

    pub fn bool(&self, section: &str, key: &str) -> bool {
        self.get(section, key).as_bool().unwrap_or_else(|| panic!("[{section}] {key} is not a boolean"))
    }

    pub fn str(&self, section: &str, key: &str) -> &str {
        self.get(section, key).as_str().unwrap_or_else(|| panic!("[{section}] {key} is not a string"))
    }

    pub fn f64_list(&self, section: &str, key: &str) -> anyhow::Result<Vec<f64>> {
        let Value::Array(items) = self.get(section, key) else {
            panic!("[{section}] {key} is not an array")
        };
        items
            .iter()
            .map(|v| match v {
                Value::Float(x) => Ok(*x),
                Value::Integer(i) => Ok(*i as f64),
                _ => Err(invalid(format!("key `{key}` in {} must hold numbers", section_label(section)))),
            })
            .collect()
    }

    pub fn i64_list(&self, section: &str, key: &str) -> anyhow::Result<Vec<i64>> {
        let Value::Array(items) = self.get(section, key) else {
            panic!("[{section}] {key} is not an array")
        };
        items
            .iter()
            .map(|v| {
                v.as_integer()
                    .ok_or_else(|| invalid(format!("key `{key}` in {} must hold integers", section_label(section))))
            })
            .collect()
    }

    /// Flag overrides, for the progress log.
    pub fn overrides(&self) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.source == Source::Flag)
            .map(|e| format!("{}{} = {} (flag)", prefix(e.section), e.key, e.value))
            .collect()
    }

    /// `# `-prefixed header lines recording every resolved value.
    pub fn header(&self) -> String {
        let mut out = format!("# voidlattice {}\n# command = {}\n", env!("CARGO_PKG_VERSION"), self.command);
        for e in &self.entries {
            out.push_str(&format!("# {}{} = {}  ({})\n", prefix(e.section), e.key, e.value, e.source.as_str()));
        }
        out
    }
}

fn prefix(section: &str) -> String {
    if section.is_empty() {
        String::new()
    } else {
        format!("[{section}] ")
    }
}

pub fn float(x: f64) -> Value {
    Value::Float(x)
}

pub fn int(x: i64) -> Value {
    Value::Integer(x)
}

pub fn string(s: &str) -> Value {
    Value::String(s.to_string())
}

pub fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

pub fn ints(v: &[i64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Integer(x)).collect())
}
