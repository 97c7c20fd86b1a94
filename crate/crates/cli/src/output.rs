//! Result files. Every CSV opens with `#` comment lines carrying the library
//! version and config hash (gnuplot skips them); every JSON summary embeds
//! the same plus the full config. Nothing time-dependent is written, so
//! reruns produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Artifacts {
    dir: PathBuf,
    config_text: String,
    config_hash: String,
}

/// Hex SHA-256 of the canonical config text.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(cfg.serialize().as_bytes()))
}

impl Artifacts {
    pub fn new(dir: &Path, cfg: &ExperimentConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Failure(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            config_text: cfg.serialize(),
            config_hash: config_hash(cfg),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::Failure(format!("cannot write {}: {e}", p.display())))
    }

    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::Failure(format!("csv: {e}"));
        w.write_record(header).map_err(fail)?;
        for r in rows {
            w.write_record(r).map_err(fail)?;
        }
        let body = w.into_inner().map_err(|e| CliError::Failure(format!("csv: {e}")))?;
        let mut text = format!("# coset {VERSION}\n# config_sha256 {}\n", self.config_hash);
        text.push_str(&String::from_utf8(body).expect("csv of utf-8 fields"));
        self.write_text(name, &text)
    }

    pub fn write_json(&self, name: &str, result: Value) -> Result<(), CliError> {
        let config: serde_json::Map<String, Value> = self
            .config_text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
            .collect();
        let doc = json!({
            "version": VERSION,
            "config_sha256": self.config_hash,
            "config": config,
            "result": result,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
        text.push('\n');
        self.write_text(name, &text)
    }
}
