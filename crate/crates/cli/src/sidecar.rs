//! JSON sidecars: the resolved configuration of a run plus digests of its
//! inputs and output, enough to re-run it and check the result.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::commands::{execute, Command, Failure, RunOutput};

#[derive(Debug, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: Option<u64>,
    pub resolved: Value,
    pub inputs: Vec<FileDigest>,
    pub output: FileDigest,
    /// Digest of the serialized command; identical configurations share it.
    pub config_id: String,
    pub threads: usize,
    pub created_unix: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn digest_file(path: &Path) -> Result<FileDigest, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

/// `results/conv.csv` → `results/conv.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.meta.json"))
}

pub fn write(command: &Command, run: &RunOutput) -> Result<PathBuf, Failure> {
    let out = command.out_path().expect("artifact commands have an output");
    let sidecar = Sidecar {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.clone(),
        seed: command.seed(),
        resolved: run.resolved.clone(),
        inputs: run.inputs.iter().map(|p| digest_file(p)).collect::<Result<_, _>>()?,
        output: FileDigest {
            path: out.to_path_buf(),
            sha256: sha256_hex(&run.bytes),
        },
        config_id: sha256_hex(&serde_json::to_vec(command)?),
        threads: rayon::current_num_threads(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    let path = sidecar_path(out);
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Re-runs a recorded command without touching its output file. Returns
/// 0 when the new output digest matches the recorded one and 1 otherwise.
pub fn replay(path: &Path) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    for input in &sidecar.inputs {
        let now = digest_file(&input.path)?;
        if now.sha256 != input.sha256 {
            return Err(Failure::config(format!("input {} changed since the recorded run", input.path.display())));
        }
    }
    let run = execute(&sidecar.command)?;
    let digest = sha256_hex(&run.bytes);
    if digest == sidecar.output.sha256 {
        println!("replay of {} reproduced {} (sha256 {digest})", path.display(), sidecar.output.path.display());
        Ok(0)
    } else {
        eprintln!(
            "replay of {} differs: recorded sha256 {}, got {digest}",
            path.display(),
            sidecar.output.sha256
        );
        Ok(1)
    }
}
