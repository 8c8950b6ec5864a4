//! Output files. CSV files open with a `# config_checksum:` line, JSONL files
//! with a header object, and JSON files carry a `config_checksum` key.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vasamp_core::eval::config_checksum;
use vasamp_core::value::{AnyEstimator, Checkpoint};

use crate::error::{io_err, CliError, CliResult};

pub fn write(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn jsonl<T: Serialize>(
    kind: &str,
    checksum: &str,
    rows: impl IntoIterator<Item = T>,
) -> String {
    let mut out = serde_json::json!({ "kind": kind, "config_checksum": checksum }).to_string();
    out.push('\n');
    for r in rows {
        out.push_str(&serde_json::to_string(&r).expect("row serializes"));
        out.push('\n');
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    config_checksum: String,
    estimator: Checkpoint,
}

pub fn checkpoint_json(est: &AnyEstimator, checksum: &str) -> String {
    let f = CheckpointFile {
        config_checksum: checksum.to_string(),
        estimator: est.to_checkpoint(),
    };
    let mut s = serde_json::to_string_pretty(&f).expect("checkpoint serializes");
    s.push('\n');
    s
}

/// A loaded estimator plus the SHA-256 of its file.
pub struct LoadedEstimator {
    pub estimator: AnyEstimator,
    pub checksum: String,
    pub path: PathBuf,
}

pub fn load_checkpoint(path: &Path) -> CliResult<LoadedEstimator> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let f: CheckpointFile = serde_json::from_str(&text).map_err(|e| {
        CliError::MissingArtifact(format!("{}: not a checkpoint ({e})", path.display()))
    })?;
    Ok(LoadedEstimator {
        estimator: AnyEstimator::from_checkpoint(&f.estimator)?,
        checksum: config_checksum(text.as_bytes()),
        path: path.to_path_buf(),
    })
}
