//! Run manifest: resolved config, per-stage artifact hashes, and timings.
//! Rerunning a stage with identical config and inputs reproduces identical
//! hashes.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::workspace::{AppError, Workspace};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    /// Resolved config of the most recent stage invocation.
    pub config: serde_json::Value,
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub artifacts: BTreeMap<String, ArtifactRecord>,
    pub elapsed_ms: u128,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub sha256: String,
    pub bytes: u64,
}

fn sha256_hex(path: &Path) -> Result<(String, u64), AppError> {
    let bytes = std::fs::read(path)
        .map_err(|e| AppError::Pctx(pctx::Error::io(path.display().to_string(), e)))?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok((hex, bytes.len() as u64))
}

/// Record a completed stage: hash its artifacts and update the manifest.
pub fn record_stage(
    ws: &Workspace,
    stage: &str,
    artifacts: &[&str],
    started: Instant,
) -> Result<(), AppError> {
    let path = ws.path(MANIFEST);
    let mut manifest: Manifest = if path.exists() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| AppError::Pctx(pctx::Error::io(path.display().to_string(), e)))?;
        serde_json::from_str(&text).unwrap_or_default()
    } else {
        Manifest::default()
    };

    manifest.config = serde_json::to_value(&ws.cfg)
        .map_err(|e| AppError::Pctx(pctx::Error::Format(e.to_string())))?;
    let mut records = BTreeMap::new();
    for name in artifacts {
        let (sha256, bytes) = sha256_hex(&ws.path(name))?;
        records.insert(name.to_string(), ArtifactRecord { sha256, bytes });
    }
    manifest.stages.insert(
        stage.to_string(),
        StageRecord {
            artifacts: records,
            elapsed_ms: started.elapsed().as_millis(),
        },
    );

    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| AppError::Pctx(pctx::Error::Format(e.to_string())))?;
    std::fs::write(&path, text)
        .map_err(|e| AppError::Pctx(pctx::Error::io(path.display().to_string(), e)))?;
    log::info!(
        "stage {stage} finished in {} ms",
        started.elapsed().as_millis()
    );
    Ok(())
}
