//! Result files. Every file starts with the build version and the SHA-256
//! of the canonical config; CSV carries them in a leading `#` comment line,
//! JSON under a top-level `meta` object.

use crate::error::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// `v<crate version>-g<commit>`, or a tag-based `git describe` when tagged.
pub const VERSION: &str = env!("MLAB_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
}

impl Provenance {
    pub fn of(canonical_config: &str) -> Self {
        Provenance { version: VERSION.to_string(), config_sha256: hex::encode(Sha256::digest(canonical_config.as_bytes())) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&'static str]) -> Self {
        CsvTable { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, prov: &Provenance) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# mlab {} config_sha256={}", prov.version, prov.config_sha256);
        let _ = writeln!(s, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join(","));
        }
        s
    }
}

/// Pretty JSON with a `meta` object next to the body's keys.
pub fn render_json(prov: &Provenance, study: &str, body: Value) -> String {
    let mut doc = serde_json::Map::new();
    doc.insert("meta".into(), json!({ "version": prov.version, "config_sha256": prov.config_sha256, "study": study }));
    match body {
        Value::Object(m) => doc.extend(m),
        other => {
            doc.insert("result".into(), other);
        }
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(doc)).expect("json renders");
    s.push('\n');
    s
}

/// A named file's full contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

/// Everything a study produces; `summary` is also what the CLI prints.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    pub summary: Value,
    pub artifacts: Vec<Artifact>,
}

impl StudyOutput {
    pub fn artifact(&self, name: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.name == name).map(|a| a.contents.as_str())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| Error::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        for a in &self.artifacts {
            let p = dir.join(&a.name);
            std::fs::write(&p, &a.contents).map_err(io(&p))?;
        }
        Ok(())
    }
}
