use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

/// Echo of one run, written beside its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub seed_generated: bool,
    pub threads: usize,
    pub inputs: BTreeMap<&'static str, String>,
    pub output: String,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &'static str, seed: Seed, output: &Path) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: seed.value,
            seed_generated: seed.generated,
            threads: rayon::current_num_threads(),
            inputs: BTreeMap::new(),
            output: output.display().to_string(),
            config: serde_json::Value::Null,
        }
    }

    pub fn input(mut self, name: &'static str, path: &Path) -> Self {
        self.inputs.insert(name, path.display().to_string());
        self
    }

    pub fn config(mut self, config: impl Serialize) -> Self {
        self.config = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Seed {
    pub value: u64,
    pub generated: bool,
}

impl Seed {
    pub fn resolve(given: Option<u64>) -> Self {
        match given {
            Some(value) => Seed { value, generated: false },
            None => Seed {
                value: rand::random(),
                generated: true,
            },
        }
    }
}

pub fn out_dir(path: &Path) -> Result<PathBuf, Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::io(path, e))?;
    Ok(path.to_path_buf())
}

/// `trials.csv` → `trials.csv.<suffix>`
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".{suffix}"));
    path.with_file_name(name)
}

pub fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Other(e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| Failure::Other(e.into()))?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}
