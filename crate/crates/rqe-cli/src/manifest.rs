//! Run manifests and file plumbing shared by all subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use rqe_core::{Error, Result};
use serde_json::Value;

/// Everything a run depends on besides the input file's contents: which
/// command ran, where data came from and goes, the seed, and any config
/// overrides. Identical manifests with identical inputs produce
/// byte-identical outputs.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: &'static str,
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub overrides: Vec<(String, String)>,
}

impl RunManifest {
    pub fn validate(&self) -> Result<()> {
        if !self.input.exists() {
            return Err(Error::Config(format!(
                "input file {} does not exist",
                self.input.display()
            )));
        }
        if let Some(out) = &self.output {
            let parent = out.parent().unwrap_or_else(|| Path::new("."));
            if !(parent.as_os_str().is_empty() || parent.exists()) {
                return Err(Error::Config(format!(
                    "output directory {} does not exist",
                    parent.display()
                )));
            }
        }
        Ok(())
    }

    /// Reads the input as JSON and applies `key=value` overrides to dotted
    /// paths (e.g. `config.player1.epsilon=0.5`, `gamma=0.0`).
    pub fn load_value(&self) -> Result<Value> {
        let text = fs::read_to_string(&self.input).map_err(|e| {
            Error::Config(format!(
                "{}: cannot read {}: {e}",
                self.command,
                self.input.display()
            ))
        })?;
        let mut value: Value = rqe_core::schema::from_json_str(&text)?;
        for (key, raw) in &self.overrides {
            apply_override(&mut value, key, raw)?;
        }
        Ok(value)
    }
}

/// Splits a `--override` argument at its first `=`.
pub fn parse_override(spec: &str) -> Result<(String, String)> {
    match spec.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(Error::Config(format!(
            "override '{spec}' is not of the form key=value"
        ))),
    }
}

fn apply_override(value: &mut Value, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (leaf, path) = parts.split_last().expect("override keys are nonempty");
    let mut cursor = value;
    for (depth, part) in path.iter().enumerate() {
        let map = match cursor {
            Value::Object(map) => map,
            _ => {
                return Err(Error::Config(format!(
                    "override '{key}': '{}' is not an object",
                    parts[..depth].join(".")
                )))
            }
        };
        cursor = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let map = cursor.as_object_mut().ok_or_else(|| {
        Error::Config(format!("override '{key}': '{}' is not an object", path.join(".")))
    })?;
    // Interpret the value as JSON when possible, else as a string (so kind
    // names don't need shell-level quoting).
    let parsed =
        serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    map.insert(leaf.to_string(), parsed);
    Ok(())
}

/// Deserializes an override-patched JSON value into a typed record.
pub fn from_value<T: serde::de::DeserializeOwned>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::Config(format!("invalid input: {e}")))
}

/// Writes to the path, or to stdout when no path was given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// CSV with floats pinned to 17 significant digits, matching the JSON
/// formatting so reruns stay byte-identical.
pub struct CsvTable {
    text: String,
}

impl CsvTable {
    pub fn new(header: &str) -> Self {
        CsvTable {
            text: format!("{header}\n"),
        }
    }

    pub fn row(&mut self, cells: &[CsvCell]) {
        let rendered: Vec<String> = cells
            .iter()
            .map(|c| match c {
                CsvCell::Int(v) => v.to_string(),
                CsvCell::Float(v) => format!("{v:.16e}"),
                CsvCell::Empty => String::new(),
            })
            .collect();
        self.text.push_str(&rendered.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub enum CsvCell {
    Int(usize),
    Float(f64),
    Empty,
}
