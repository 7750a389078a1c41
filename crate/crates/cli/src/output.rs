use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV file; every row starts with the config hash.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write(&self, dir: &Path, config_hash: &str) -> Result<()> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut header = vec!["config_hash"];
        header.extend(&self.header);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![config_hash];
            rec.extend(row.iter().map(String::as_str));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything an experiment produces besides timing.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub json: Vec<(String, serde_json::Value)>,
    pub stages: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub tool_version: String,
    pub rng_seed: u64,
    pub workers: usize,
    /// Wall-clock seconds per stage.
    pub timing: BTreeMap<String, f64>,
    /// Data rows per CSV file.
    pub row_counts: BTreeMap<String, usize>,
    pub json_files: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.json";

/// Writes the artifacts, then the manifest via a rename so that a manifest
/// only exists for completed runs.
pub fn write_run(dir: &Path, config_json: &serde_json::Value, out: &RunOutput, mut manifest: RunManifest) -> Result<RunManifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stale = dir.join(MANIFEST);
    if stale.exists() {
        fs::remove_file(&stale).with_context(|| format!("removing {}", stale.display()))?;
    }
    write_json(&dir.join(CONFIG_COPY), config_json)?;
    for t in &out.tables {
        t.write(dir, &manifest.config_hash)?;
        manifest.row_counts.insert(format!("{}.csv", t.name), t.rows.len());
    }
    for (name, value) in &out.json {
        let file = format!("{name}.json");
        write_json(&dir.join(&file), value)?;
        manifest.json_files.push(file);
    }
    for (stage, secs) in &out.stages {
        manifest.timing.insert(stage.clone(), *secs);
    }
    let tmp = dir.join(format!("{MANIFEST}.tmp"));
    write_json(&tmp, &serde_json::to_value(&manifest)?)?;
    fs::rename(&tmp, dir.join(MANIFEST)).with_context(|| format!("finalizing manifest in {}", dir.display()))?;
    Ok(manifest)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
