//! Output directory handling. Every file carries the config hash; files
//! written by a run that fails are removed again.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

pub const SUMMARY: &str = "summary.json";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} holds results for config hash {found}, this run has {expected}")]
    HashMismatch { path: PathBuf, found: String, expected: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

/// Returns the `config_hash` recorded in an existing `summary.json`, if any.
pub fn recorded_hash(dir: &Path) -> Result<Option<String>, OutputError> {
    let path = dir.join(SUMMARY);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(&path)(e)),
    };
    let v: Value = serde_json::from_str(&text).map_err(|e| io_err(&path)(e.into()))?;
    Ok(v.get("config_hash").and_then(Value::as_str).map(String::from))
}

pub struct OutputDir {
    root: PathBuf,
    hash: String,
    created_root: bool,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    /// Creates `root` if needed. An existing summary for a different config is an error.
    pub fn open(root: &Path, hash: &str) -> Result<Self, OutputError> {
        if let Some(found) = recorded_hash(root)? {
            if found != hash {
                return Err(OutputError::HashMismatch {
                    path: root.join(SUMMARY),
                    found,
                    expected: hash.to_string(),
                });
            }
        }
        let created_root = !root.exists();
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self { root: root.to_path_buf(), hash: hash.to_string(), created_root, written: Vec::new(), committed: false })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&mut self, name: &str, body: &[u8]) -> Result<PathBuf, OutputError> {
        let path = self.path(name);
        self.written.push(path.clone());
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(body).map_err(io_err(&path))?;
        Ok(path)
    }

    /// Writes `# config_hash: ...`, the header row, then `rows`.
    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf, OutputError>
    where
        I: IntoIterator<Item = String>,
    {
        let mut body = format!("# config_hash: {}\n{}\n", self.hash, header.join(","));
        for row in rows {
            body.push_str(&row);
            body.push('\n');
        }
        self.write(name, body.as_bytes())
    }

    /// Writes pretty JSON with `config_hash` inserted at the top level.
    pub fn write_json(&mut self, name: &str, mut value: Value) -> Result<PathBuf, OutputError> {
        if let Value::Object(map) = &mut value {
            map.insert("config_hash".into(), Value::String(self.hash.clone()));
        }
        let mut body = serde_json::to_string_pretty(&value).expect("JSON values serialize");
        body.push('\n');
        self.write(name, body.as_bytes())
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_root {
            // Only succeeds if nothing else ended up inside.
            let _ = fs::remove_dir(&self.root);
        }
    }
}

/// Formats a CSV row from already-rendered fields.
pub fn row(fields: &[String]) -> String {
    fields.join(",")
}
