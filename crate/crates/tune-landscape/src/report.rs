//! Run manifests and analysis report envelopes. Every CLI run writes a
//! manifest capturing the exact invocation, seeds, and input digests so
//! results can be reproduced byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// SHA-256 of a file, hex-encoded.
pub fn file_digest(path: &Path) -> Result<String, ReportError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Record of one tool invocation. The timestamp is opt-in: identical
/// invocations must produce identical manifests by default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// argv as invoked, program name first.
    pub command: Vec<String>,
    /// Resolved flag values, including defaults that applied.
    pub flags: BTreeMap<String, String>,
    pub seed: u64,
    /// input path -> sha256 hex digest
    pub inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl RunManifest {
    pub fn new(command: Vec<String>, seed: u64) -> Self {
        RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            command,
            flags: BTreeMap::new(),
            seed,
            inputs: BTreeMap::new(),
            timestamp: None,
        }
    }

    pub fn flag(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.flags.insert(name.to_string(), value.to_string());
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self, ReportError> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(self)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, ReportError> {
        let path = dir.join("manifest.json");
        write_json_pretty(&path, self)?;
        Ok(path)
    }
}

/// Envelope around one analysis result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub benchmark: String,
    /// Devices the analysis covered, in input order.
    pub devices: Vec<String>,
    pub analysis: String,
    /// Analysis-specific parameters (p, threshold, neighborhood, ...).
    pub params: BTreeMap<String, serde_json::Value>,
    pub seed: u64,
    pub tool_version: String,
    /// Analysis-specific payload.
    pub data: serde_json::Value,
}

impl AnalysisReport {
    pub fn new(
        benchmark: impl Into<String>,
        devices: Vec<String>,
        analysis: impl Into<String>,
        seed: u64,
        data: serde_json::Value,
    ) -> Self {
        AnalysisReport {
            benchmark: benchmark.into(),
            devices,
            analysis: analysis.into(),
            params: BTreeMap::new(),
            seed,
            tool_version: TOOL_VERSION.to_string(),
            data,
        }
    }

    pub fn param(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        self.params.insert(
            name.to_string(),
            serde_json::to_value(value).expect("serializable param"),
        );
        self
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, ReportError> {
        let path = dir.join("report.json");
        write_json_pretty(&path, self)?;
        Ok(path)
    }
}

/// Serializes to pretty JSON with a trailing newline, creating parent
/// directories as needed.
pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        fs::write(&p, b"hello\n").unwrap();
        let d = file_digest(&p).unwrap();
        assert_eq!(
            d,
            "5891b5b522d5df086d0ff0b110fbd9d21bb4fc7163af34d08286a2e846f6be03"
        );
    }

    #[test]
    fn manifest_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("data.csv");
        fs::write(&input, b"a,b\n1,2\n").unwrap();

        let build = || {
            let mut m = RunManifest::new(vec!["tool".into(), "analyze".into()], 42);
            m.flag("p", "0.05").flag("neighborhood", "adjacent1");
            m.input(&input).unwrap();
            m
        };
        let m1 = build();
        let m2 = build();
        assert_eq!(
            serde_json::to_string(&m1).unwrap(),
            serde_json::to_string(&m2).unwrap()
        );

        let path = m1.write(dir.path()).unwrap();
        let loaded: RunManifest =
            serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(loaded.seed, 42);
        assert_eq!(loaded.flags["p"], "0.05");
        assert_eq!(loaded.timestamp, None);
        assert!(!serde_json::to_string(&m1).unwrap().contains("timestamp"));
    }

    #[test]
    fn report_envelope_fields() {
        let mut r = AnalysisReport::new(
            "gemm",
            vec!["a100".into()],
            "centrality",
            7,
            serde_json::json!({"proportion": 0.9}),
        );
        r.param("p", 0.05);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["benchmark"], "gemm");
        assert_eq!(v["analysis"], "centrality");
        assert_eq!(v["params"]["p"], 0.05);
        assert_eq!(v["data"]["proportion"], 0.9);
        assert_eq!(v["tool_version"], TOOL_VERSION);
    }
}
