//! Artifact writing: JSON and CSV files stamped with the config hash, and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub struct Output {
    dir: PathBuf,
    hash: String,
    artifacts: Vec<String>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

impl Output {
    pub fn new(dir: &Path, hash: &str) -> Result<Output, CliError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        Ok(Output { dir: dir.to_path_buf(), hash: hash.to_string(), artifacts: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(&path, text).map_err(io(&path))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    /// JSON object with a `config_hash` key; non-object values go under `data`.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let v = serde_json::to_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        let mut obj = serde_json::Map::new();
        obj.insert("config_hash".into(), self.hash.clone().into());
        match v {
            serde_json::Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(obj)).expect("json");
        self.write(name, &(text + "\n"))
    }

    /// CSV with a leading `# config_hash=` comment line.
    pub fn csv<I>(&mut self, name: &str, columns: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        self.csv_cells(name, columns, rows.into_iter().map(|row| row.iter().map(f64::to_string).collect()))
    }

    /// CSV of preformatted cells.
    pub fn csv_cells<I>(&mut self, name: &str, columns: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut text = format!("# config_hash={}\n{}\n", self.hash, columns.join(","));
        for row in rows {
            let _ = writeln!(text, "{}", row.join(","));
        }
        self.write(name, &text)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    /// The effective config after command-line overrides.
    pub config: serde_json::Value,
    pub versions: Versions,
    pub threads: usize,
    pub wall_clock_s: f64,
    pub jobs: Vec<JobTiming>,
    pub artifacts: Vec<String>,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub geqhom: String,
    pub format: u32,
}

impl Versions {
    pub fn current() -> Versions {
        Versions { geqhom: env!("CARGO_PKG_VERSION").to_string(), format: 1 }
    }
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("json") + "\n";
    fs::write(&path, text).map_err(io(&path))
}
