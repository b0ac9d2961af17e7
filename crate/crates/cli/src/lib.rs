//! Experiment runner behind the `mixdyn` binary.
//!
//! Every subcommand reads a JSON config, writes CSV files into an output
//! directory and records a [`RunManifest`] next to them. Passing that
//! manifest back as `--config` replays the run.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use error::{CliError, CliResult};
use output::OutputDir;

pub const SCHEMA_VERSION: u64 = 1;
pub const TOOL_NAME: &str = "mixdyn";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SubcommandKind {
    TeacherStudent,
    Flow,
    Noise,
    Spectrum,
    Lossbound,
    Render,
}

impl SubcommandKind {
    pub const ALL: [SubcommandKind; 6] = [
        SubcommandKind::TeacherStudent,
        SubcommandKind::Flow,
        SubcommandKind::Noise,
        SubcommandKind::Spectrum,
        SubcommandKind::Lossbound,
        SubcommandKind::Render,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SubcommandKind::TeacherStudent => "teacher-student",
            SubcommandKind::Flow => "flow",
            SubcommandKind::Noise => "noise",
            SubcommandKind::Spectrum => "spectrum",
            SubcommandKind::Lossbound => "lossbound",
            SubcommandKind::Render => "render",
        }
    }

    /// Whether the config has a `seed` that `--seed` overrides.
    pub fn is_seeded(self) -> bool {
        !matches!(self, SubcommandKind::Render)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u64,
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_path: String,
    pub seed: Option<u64>,
    /// The config after defaults are filled in.
    pub config: Value,
    pub outputs: Vec<String>,
}

/// Runs `kind` with the config at `config_path`, writing into `out`.
pub fn execute(
    kind: SubcommandKind,
    config_path: &Path,
    seed: Option<u64>,
    out: &Path,
) -> CliResult<RunManifest> {
    let value = config::load_config(config_path, kind, seed)?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let mut dir = OutputDir::create(out)?;
    let resolved = commands::dispatch(kind, value, base_dir, &mut dir)?;
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: kind.name().into(),
        config_path: config_path.display().to_string(),
        seed: resolved.get("seed").and_then(Value::as_u64),
        config: resolved,
        outputs: dir.written().to_vec(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    dir.write_text(MANIFEST_FILE, &text)?;
    Ok(manifest)
}

/// Reads a manifest written by [`execute`].
pub fn read_manifest(path: &Path) -> CliResult<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    config::typed(config::parse_json(&text)?)
}
