//! Errors, input loading and output documents shared by the commands.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rlscale::ingest::{self, ManifestDoc, RunSet, TaskMeta};
use rlscale::preprocess::{self, EfficiencyPoint};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => m,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn prefixed(self, context: &str) -> Self {
        match self {
            CliError::Input(m) => CliError::Input(format!("{context}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{context}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl From<rlscale::Error> for CliError {
    fn from(e: rlscale::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn with_path<E: fmt::Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub rng_seed: Option<u64>,
}

/// Every JSON artifact is a result plus the inputs it was computed from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document<T> {
    pub provenance: Provenance,
    pub result: T,
}

/// Reads input files and remembers their digests for provenance.
#[derive(Debug, Default)]
pub struct Inputs {
    digests: Vec<InputDigest>,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> CliResult<String> {
        let text = fs::read_to_string(path).map_err(with_path(path))?;
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        let entry = InputDigest {
            path: path.display().to_string(),
            sha256: digest,
        };
        if !self.digests.contains(&entry) {
            self.digests.push(entry);
        }
        Ok(text)
    }

    pub fn read_doc<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<Document<T>> {
        let text = self.read(path)?;
        serde_json::from_str(&text).map_err(with_path(path))
    }

    pub fn provenance(&self, command: &str, rng_seed: Option<u64>) -> Provenance {
        Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs: self.digests.clone(),
            rng_seed,
        }
    }

    pub fn manifest(&mut self, path: Option<&PathBuf>) -> CliResult<Vec<TaskMeta>> {
        let path = path.ok_or_else(|| CliError::input("--manifest is required"))?;
        let text = self.read(path)?;
        let doc = ManifestDoc::parse(&text).map_err(with_path(path))?;
        ingest::validate_manifest(&doc).map_err(with_path(path))
    }

    /// Parses run logs, splitting files that hold several tasks and merging
    /// curves of the same task across files.
    pub fn run_sets(&mut self, metas: &[TaskMeta], paths: &[PathBuf]) -> CliResult<Vec<RunSet>> {
        require_inputs(paths)?;
        let mut merged: BTreeMap<String, RunSet> = BTreeMap::new();
        for path in paths {
            let text = self.read(path)?;
            for (task, body) in split_by_task(&text) {
                let meta = match metas.first() {
                    Some(m) if task.is_empty() => m,
                    _ => ingest::find_task(metas, &task).map_err(with_path(path))?,
                };
                let rs = ingest::parse_run_log(body.as_bytes(), meta).map_err(with_path(path))?;
                match merged.remove(&task) {
                    None => {
                        merged.insert(task, rs);
                    }
                    Some(prev) => {
                        let curves = prev.curves.into_values().chain(rs.curves.into_values()).collect();
                        let joined = RunSet::new(meta.clone(), curves).map_err(with_path(path))?;
                        merged.insert(task, joined);
                    }
                }
            }
        }
        Ok(merged.into_values().collect())
    }

    pub fn efficiency(&mut self, paths: &[PathBuf]) -> CliResult<Vec<EfficiencyPoint>> {
        require_inputs(paths)?;
        let mut out = Vec::new();
        for path in paths {
            let text = self.read(path)?;
            out.extend(preprocess::read_efficiency_csv(text.as_bytes()).map_err(with_path(path))?);
        }
        Ok(out)
    }
}

pub fn require_inputs(paths: &[PathBuf]) -> CliResult<()> {
    if paths.is_empty() {
        return Err(CliError::input("at least one --input is required"));
    }
    Ok(())
}

/// Splits a run log into one header-prefixed body per task, in first-seen order.
/// Malformed files come back whole so the parser reports the error.
fn split_by_task(text: &str) -> Vec<(String, String)> {
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return vec![(String::new(), text.to_string())];
    };
    let mut order: Vec<String> = Vec::new();
    let mut bodies: BTreeMap<String, String> = BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let task = line.split(',').next().unwrap_or("").trim().to_string();
        let body = bodies.entry(task.clone()).or_insert_with(|| {
            order.push(task.clone());
            format!("{header}\n")
        });
        body.push_str(line);
        body.push('\n');
    }
    if order.is_empty() {
        return vec![(String::new(), text.to_string())];
    }
    order
        .into_iter()
        .map(|t| {
            let body = bodies.remove(&t).unwrap();
            (t, body)
        })
        .collect()
}

/// Writes `name` under `dir` and echoes the path on stdout.
pub fn write_output(dir: &Path, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(with_path(dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(with_path(&path))?;
    println!("{}", path.display());
    Ok(path)
}

pub fn write_doc<T: Serialize>(dir: &Path, name: &str, doc: &Document<T>) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| CliError::input(e.to_string()))?;
    text.push('\n');
    write_output(dir, name, text.as_bytes())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::input(e.to_string()))?;
    text.push('\n');
    write_output(dir, name, text.as_bytes())
}

/// Renders rows as CSV with the given header.
pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::input(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::input(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_keeps_header_per_task() {
        let text = "task,utd,model_size,batch_size,seed,env_step,return\n\
                    a,1,1,1,0,1,1\nb,1,1,1,0,1,1\na,1,1,1,0,2,1\n";
        let parts = split_by_task(text);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].0, "a");
        assert_eq!(parts[0].1.lines().count(), 3);
        assert!(parts[1].1.starts_with("task,"));
    }

    #[test]
    fn header_only_file_is_passed_through() {
        let parts = split_by_task("task,utd\n");
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].1, "task,utd\n");
    }

    #[test]
    fn numerical_errors_map_to_exit_three() {
        let e: CliError = rlscale::Error::Infeasible("x".into()).into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = rlscale::Error::EmptyInput.into();
        assert_eq!(e.exit_code(), 2);
    }
}
