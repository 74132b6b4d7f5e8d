//! JSON config files merged under command-line flags, run manifests and
//! content hashing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Overlays every flag that was given onto the config file's values.
///
/// Both sides go through the same serde representation, so a file holding a
/// previously echoed resolved config (or a whole manifest, whose
/// `resolved_config` is used) reproduces that run.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> CliResult<T> {
    let Some(path) = config else {
        return from_value(serde_json::to_value(flags)?);
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut base: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: invalid JSON config: {e}", path.display())))?;
    if let Some(inner) = base.get("resolved_config") {
        base = inner.clone();
    }
    let Value::Object(mut base) = base else {
        return Err(CliError::usage(format!(
            "{}: config must be a JSON object",
            path.display()
        )));
    };
    if let Value::Object(over) = serde_json::to_value(flags)? {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    from_value(Value::Object(base)).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn from_value<T: DeserializeOwned>(v: Value) -> CliResult<T> {
    serde_json::from_value(v).map_err(|e| CliError::usage(e.to_string()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Command line as invoked, program name excluded.
    pub args: Vec<String>,
    pub resolved_config: Value,
    pub seed: Option<u64>,
    /// File name -> SHA-256 of every input read and output written.
    pub content_hashes: BTreeMap<String, String>,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Value>,
}

impl Manifest {
    pub fn new(resolved: &impl Serialize, seed: Option<u64>) -> CliResult<Self> {
        Ok(Self {
            args: std::env::args().skip(1).collect(),
            resolved_config: serde_json::to_value(resolved)?,
            seed,
            content_hashes: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            outcome: None,
        })
    }

    pub fn hash(&mut self, path: &Path) -> CliResult<()> {
        self.hash_as(path.display().to_string(), path)
    }

    /// Records `path`'s hash under a caller-chosen key, e.g. a name relative
    /// to the run directory.
    pub fn hash_as(&mut self, key: impl Into<String>, path: &Path) -> CliResult<()> {
        let h = sha256_file(path)?;
        self.content_hashes.insert(key.into(), h);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }
}

/// `<out>.manifest.json` next to a single-file output.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn open(path: &Path) -> CliResult<std::io::BufReader<fs::File>> {
    fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
pub fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

pub fn required<T: Clone>(value: &Option<T>, flag: &str) -> CliResult<T> {
    value
        .clone()
        .ok_or_else(|| CliError::usage(format!("missing required option --{flag}")))
}
