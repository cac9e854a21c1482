//! Plain `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys use the long
//! flag names without dashes (`gibbs-samples = 300`). A flag given on the
//! command line wins over the file, which wins over the built-in default.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, (String, u64)>,
    path: std::path::PathBuf,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = k as u64 + 1;
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    message: format!("expected `key = value`, found `{line}`"),
                });
            };
            let key = key.trim().trim_start_matches("--").replace('_', "-");
            entries.insert(key, (value.trim().to_string(), lineno));
        }
        Ok(ConfigFile {
            entries,
            path: path.to_path_buf(),
        })
    }

    /// Parsed value of `key`, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some((value, line)) = self.entries.get(key) else {
            return Ok(None);
        };
        value.parse().map(Some).map_err(|_| Error::Parse {
            path: self.path.clone(),
            line: *line,
            message: format!("invalid value `{value}` for `{key}`"),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// `cli`, else the file's `key`, else `default`.
pub fn resolve<T: FromStr>(
    cli: Option<T>,
    file: Option<&ConfigFile>,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = cli {
        return Ok(v);
    }
    if let Some(f) = file {
        if let Some(v) = f.get(key)? {
            return Ok(v);
        }
    }
    Ok(default)
}
