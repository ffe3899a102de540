//! Per-run records and aggregation.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Answering method. Serialized tags are `direct`, `iterative`, `autopasta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "direct")]
    Direct,
    #[serde(rename = "iterative")]
    Iterative,
    #[serde(rename = "autopasta")]
    Steered,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Direct, Method::Iterative, Method::Steered];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Iterative => "iterative",
            Method::Steered => "autopasta",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Direct => "Direct Prompting",
            Method::Iterative => "Iterative Prompting",
            Method::Steered => "Identify + steer",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected direct, iterative or autopasta)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub id: String,
    pub prediction: String,
    pub em: f64,
    pub f1: f64,
    /// Indices of the context sentences used as key sentences.
    #[serde(default)]
    pub matched_sentences: Vec<usize>,
    #[serde(default)]
    pub steering_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub config_hash: String,
    pub num_instances: usize,
    /// Mean EM x 100.
    pub em: f64,
    /// Mean token F1 x 100.
    pub token_f1: f64,
    pub instances: Vec<InstanceScore>,
}

fn mean_percent(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        100.0 * sum / n as f64
    }
}

pub fn aggregate_run(method: Method, config_hash: impl Into<String>, instances: Vec<InstanceScore>) -> RunRecord {
    RunRecord {
        method,
        config_hash: config_hash.into(),
        num_instances: instances.len(),
        em: mean_percent(instances.iter().map(|r| r.em)),
        token_f1: mean_percent(instances.iter().map(|r| r.f1)),
        instances,
    }
}

/// Writes `contents` through a temporary file in the same directory, so an
/// interrupted write never replaces an existing complete file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl RunRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run record serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
