//! Run manifests: everything needed to repeat a run, nothing that varies
//! between repeats (no timestamps, no output directory).

use std::ffi::OsString;
use std::path::Path;

use eyf_core::Error;
use serde::{Deserialize, Serialize};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, with `--out` removed.
    pub args: Vec<String>,
    pub inputs: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// File names inside the output directory, in write order.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(argv: &[OsString], inputs: &[&Path], config: serde_json::Value, seed: Option<u64>) -> Self {
        let args = strip_out(argv);
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: args.first().cloned().unwrap_or_default(),
            args,
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            config,
            seed,
            outputs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            message: e.to_string(),
        })
    }
}

/// Drops the program name and any `--out DIR` / `--out=DIR`.
fn strip_out(argv: &[OsString]) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in argv.iter().skip(1) {
        let a = a.to_string_lossy().into_owned();
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--out=") {
            continue;
        }
        out.push(a);
    }
    out
}
