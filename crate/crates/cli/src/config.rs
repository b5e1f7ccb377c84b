//! Optional TOML configuration file. Keys mirror flag names with dashes
//! replaced by underscores; a flag given on the command line wins.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{CliError, CliResult};

/// Every key the configuration file may contain.
pub const KNOWN_KEYS: &[&str] = &[
    "base_url",
    "csv",
    "embeddings",
    "input",
    "jobs",
    "llm_model",
    "max_retries",
    "mode",
    "model",
    "out",
    "out_dir",
    "output",
    "prompt",
    "q_n",
    "qn_grid",
    "retry_backoff_ms",
    "seeds",
    "sigma",
    "sigma_grid",
    "steps",
    "temperature",
    "timeout_secs",
    "trajectory",
    "verbose",
];

#[derive(Debug, Default)]
pub struct Config {
    table: Table,
}

fn type_error(key: &str, expected: &str, got: &Value) -> CliError {
    CliError::precondition(format!(
        "config key `{key}` must be {expected}, found {}",
        got.type_str()
    ))
}

fn as_f64(key: &str, v: &Value) -> CliResult<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(type_error(key, "a number", other)),
    }
}

fn as_u64(key: &str, v: &Value) -> CliResult<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        other => Err(type_error(key, "a nonnegative integer", other)),
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::from(e).context(format!("reading {}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(format!("in {}", path.display())))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::precondition(format!("invalid TOML: {}", e.message())))?;
        let mut unknown: Vec<&str> = table
            .keys()
            .map(String::as_str)
            .filter(|k| !KNOWN_KEYS.contains(k))
            .collect();
        if !unknown.is_empty() {
            unknown.sort_unstable();
            return Err(CliError::precondition(format!(
                "unknown config key(s): {}",
                unknown.join(", ")
            )));
        }
        Ok(Self { table })
    }

    pub fn f64(&self, key: &str, flag: Option<f64>) -> CliResult<Option<f64>> {
        match (flag, self.table.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(v)) => as_f64(key, v).map(Some),
            (None, None) => Ok(None),
        }
    }

    pub fn u64(&self, key: &str, flag: Option<u64>) -> CliResult<Option<u64>> {
        match (flag, self.table.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(v)) => as_u64(key, v).map(Some),
            (None, None) => Ok(None),
        }
    }

    pub fn usize(&self, key: &str, flag: Option<usize>) -> CliResult<Option<usize>> {
        Ok(self.u64(key, flag.map(|v| v as u64))?.map(|v| v as usize))
    }

    pub fn string(&self, key: &str, flag: Option<String>) -> CliResult<Option<String>> {
        match (flag, self.table.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(Value::String(s))) => Ok(Some(s.clone())),
            (None, Some(other)) => Err(type_error(key, "a string", other)),
            (None, None) => Ok(None),
        }
    }

    pub fn path(&self, key: &str, flag: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
        match flag {
            Some(p) => Ok(Some(p)),
            None => Ok(self.string(key, None)?.map(PathBuf::from)),
        }
    }

    /// Like [`Config::path`] but the value must be present somewhere.
    pub fn required_path(&self, key: &str, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        self.path(key, flag)?.ok_or_else(|| missing(key))
    }

    pub fn flag(&self, key: &str, flag: bool) -> CliResult<bool> {
        if flag {
            return Ok(true);
        }
        match self.table.get(key) {
            None => Ok(false),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(other) => Err(type_error(key, "a boolean", other)),
        }
    }

    pub fn f64_list(&self, key: &str, flag: Option<Vec<f64>>) -> CliResult<Option<Vec<f64>>> {
        match (flag, self.table.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(Value::Array(items))) => items.iter().map(|v| as_f64(key, v)).collect::<CliResult<_>>().map(Some),
            (None, Some(other)) => Err(type_error(key, "an array of numbers", other)),
            (None, None) => Ok(None),
        }
    }

    pub fn u64_list(&self, key: &str, flag: Option<Vec<u64>>) -> CliResult<Option<Vec<u64>>> {
        match (flag, self.table.get(key)) {
            (Some(v), _) => Ok(Some(v)),
            (None, Some(Value::Array(items))) => items.iter().map(|v| as_u64(key, v)).collect::<CliResult<_>>().map(Some),
            (None, Some(other)) => Err(type_error(key, "an array of integers", other)),
            (None, None) => Ok(None),
        }
    }
}

/// Error for a value that is neither given as a flag nor in the config.
pub fn missing(key: &str) -> CliError {
    CliError::precondition(format!(
        "--{} is required (or set `{key}` in the config file)",
        key.replace('_', "-")
    ))
}
