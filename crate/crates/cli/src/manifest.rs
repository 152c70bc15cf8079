//! `manifest.json`: resolved configuration, command, seeds and hashes of
//! every input and output, enough to re-run the command bit-exactly.

use std::collections::BTreeMap;
use std::path::Path;

use camreward::io::RunConfig;
use serde::{Deserialize, Serialize};

use crate::cli::Command;
use crate::commands::{execute, Seeds};
use crate::error::{CliError, CliResult};
use crate::output::{sha256_file, to_json_bytes, Outputs};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    /// The output directory is left out; it does not affect any artifact.
    pub config: RunConfig,
    pub seeds: Seeds,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

fn input_hashes(command: &Command, cfg: &RunConfig) -> CliResult<BTreeMap<String, String>> {
    let mut paths = command.input_files();
    paths.extend(cfg.scene_path.clone());
    paths.extend(cfg.trajectory_path.clone());
    paths
        .into_iter()
        .map(|p| Ok((p.display().to_string(), sha256_file(&p)?)))
        .collect()
}

/// Runs `command` into `out_dir` and records the manifest there.
pub fn run_recorded(command: &Command, cfg: &RunConfig, out_dir: &Path) -> CliResult<Manifest> {
    let inputs = input_hashes(command, cfg)?;
    let mut out = Outputs::create(out_dir)?;
    let seeds = execute(command, cfg, &mut out)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.clone(),
        config: RunConfig {
            output_dir: None,
            ..cfg.clone()
        },
        seeds,
        inputs,
        outputs: out.hashes().clone(),
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), to_json_bytes(&manifest)?)?;
    Ok(manifest)
}

/// Re-runs the recorded command into `out_dir` and lists every input or
/// output whose hash differs.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> CliResult<serde_json::Value> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| camreward::Error::file(manifest_path, e))?;
    let recorded: Manifest = serde_json::from_str(&text)?;
    if recorded.tool != env!("CARGO_PKG_NAME") {
        return Err(CliError::Usage(format!(
            "{} was not written by this tool",
            manifest_path.display()
        )));
    }
    let mut mismatches = Vec::new();
    for (path, hash) in &recorded.inputs {
        match sha256_file(Path::new(path)) {
            Ok(h) if &h == hash => {}
            _ => mismatches.push(format!("input {path}")),
        }
    }
    let fresh = run_recorded(&recorded.command, &recorded.config, out_dir)?;
    for (name, hash) in &recorded.outputs {
        if fresh.outputs.get(name) != Some(hash) {
            mismatches.push(name.clone());
        }
    }
    for name in fresh.outputs.keys() {
        if !recorded.outputs.contains_key(name) {
            mismatches.push(format!("unexpected {name}"));
        }
    }
    if !mismatches.is_empty() {
        return Err(CliError::ReplayMismatch(mismatches));
    }
    Ok(serde_json::json!({
        "replayed": recorded.command.name(),
        "outputs_matched": recorded.outputs.len(),
    }))
}
