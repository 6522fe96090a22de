//! Artifact files: atomic writes and config-hash envelopes.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// JSON artifact tagged with the configuration that produced it.
#[derive(Debug, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub config_hash: String,
    pub kind: String,
    pub payload: T,
}

/// Writes through a sibling temporary file and renames it into place, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("artifact");
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_artifact<T: Serialize>(path: &Path, hash: &str, kind: &str, payload: &T) -> Result<()> {
    let a = Artifact {
        config_hash: hash.to_string(),
        kind: kind.to_string(),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&a)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Reads an artifact, rejecting files produced under another configuration.
pub fn read_artifact<T: DeserializeOwned>(path: &Path, hash: &str, producer: &str) -> Result<T> {
    if !path.is_file() {
        bail!("missing {}: run `grr {producer}` first", path.display());
    }
    let text = std::fs::read_to_string(path)?;
    let a: Artifact<T> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if a.config_hash != hash {
        bail!(
            "{} was produced under configuration {} but the current one is {}: rerun `grr {producer}`",
            path.display(),
            a.config_hash,
            hash
        );
    }
    Ok(a.payload)
}

/// Appends a `config_hash` column to a CSV document.
pub fn with_hash_column(csv: &str, hash: &str) -> String {
    let mut out = String::with_capacity(csv.len() + 20 * csv.lines().count());
    for (i, line) in csv.lines().enumerate() {
        out.push_str(line);
        out.push(',');
        out.push_str(if i == 0 { "config_hash" } else { hash });
        out.push('\n');
    }
    out
}
