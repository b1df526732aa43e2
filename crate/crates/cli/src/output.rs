use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// A float with 17 significant digits; empty for a missing value.
pub fn num(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v:.16e}"),
        None => String::new(),
    }
}

/// CSV quoting for free text.
fn text(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\"").replace(['\n', '\r'], " "))
    } else {
        s.to_string()
    }
}

/// Comma-separated table with a header row and LF line endings.
#[derive(Debug, Clone)]
pub struct Csv {
    columns: usize,
    body: String,
}

pub enum Cell {
    Num(Option<f64>),
    Int(usize),
    Text(String),
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut body = header.iter().map(|h| text(h.as_ref())).collect::<Vec<_>>().join(",");
        body.push('\n');
        Csv { columns: header.len(), body }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns);
        let line = cells
            .iter()
            .map(|c| match c {
                Cell::Num(x) => num(*x),
                Cell::Int(n) => n.to_string(),
                Cell::Text(s) => text(s),
            })
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(self.body, "{line}");
    }

    pub fn as_str(&self) -> &str {
        &self.body
    }
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::config(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| CliError::failure(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        self.write(name, &json(value)?)
    }
}

/// Pretty JSON in field declaration order, newline-terminated.
pub fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::failure(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
