//! Flat `key = value` text files: one pair per line, `#` starts a comment.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    /// 1-based column of the value.
    pub column: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str, path: &Path) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                column: 1,
                message: "expected `key = value`".into(),
            });
        };
        let key = line[..eq].trim();
        let value = line[eq + 1..].trim();
        if key.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                column: 1,
                message: "missing key".into(),
            });
        }
        let column = eq + 2 + (line[eq + 1..].len() - line[eq + 1..].trim_start().len());
        out.push(Entry {
            line: i + 1,
            column,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(out)
}

pub fn read(path: impl AsRef<Path>) -> Result<(PathBuf, Vec<Entry>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok((path.to_path_buf(), parse(&text, path)?))
}

impl Entry {
    pub fn error(&self, path: &Path, message: impl Into<String>) -> Error {
        Error::Parse {
            path: path.to_path_buf(),
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    pub fn parse<T: std::str::FromStr>(&self, path: &Path) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| self.error(path, format!("invalid value `{}` for `{}`", self.value, self.key)))
    }

    /// Comma-separated list of numbers.
    pub fn parse_list(&self, path: &Path) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| self.error(path, format!("invalid number `{}` in `{}`", s.trim(), self.key)))
            })
            .collect()
    }
}
