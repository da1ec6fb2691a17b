//! Run directories: every subcommand writes its outputs below `--out` and
//! lists them, relative to that directory, in `run.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Dataset manifest the run read, as given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub files: Vec<PathBuf>,
}

pub struct RunDir {
    root: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    pub fn create(root: &Path, command: &str, data: Option<&Path>, seed: Option<u64>) -> Result<RunDir> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            manifest: RunManifest {
                command: command.into(),
                data: data.map(Path::to_path_buf),
                seed,
                files: Vec::new(),
            },
        })
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(rel);
        write_json(&path, value)?;
        Ok(path)
    }

    /// Lists every file now under the run directory and writes `run.json`.
    pub fn finish(mut self) -> Result<RunManifest> {
        let mut files = Vec::new();
        walk(&self.root, &self.root, &mut files)?;
        files.retain(|f| f != Path::new(RUN_FILE));
        files.sort();
        self.manifest.files = files;
        write_json(&self.root.join(RUN_FILE), &self.manifest)?;
        Ok(self.manifest)
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).unwrap_or(&path).to_path_buf());
        }
    }
    Ok(())
}

/// Files below `dir` accepted by `matches`, skipping anything under `exclude`.
pub fn find_files(dir: &Path, exclude: &Path, matches: &dyn Fn(&Path) -> bool) -> Result<Vec<PathBuf>> {
    let mut all = Vec::new();
    walk(dir, dir, &mut all)?;
    let mut found: Vec<PathBuf> = all
        .into_iter()
        .map(|rel| dir.join(rel))
        .filter(|p| !p.starts_with(exclude) && matches(p))
        .collect();
    found.sort();
    Ok(found)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.into(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.into(),
        source,
    })
}

/// Config file contents, or the type's defaults when no file is given.
pub fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => read_json(p),
        None => Ok(T::default()),
    }
}

/// The dataset manifest a previous run recorded.
pub fn recorded_data(run: &Path) -> Result<PathBuf> {
    let manifest: RunManifest = read_json(&run.join(RUN_FILE))?;
    manifest.data.ok_or_else(|| {
        CliError::Usage(format!(
            "{} records no dataset; pass --data",
            run.join(RUN_FILE).display()
        ))
    })
}
