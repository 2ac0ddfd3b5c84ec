use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;
use crate::GlobalArgs;

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    artifact: String,
    args: &'a GlobalArgs,
    config: &'a C,
}

/// `<artifact>.manifest.json` beside `artifact`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

/// Records the resolved configuration that produced `artifact`.
pub fn write<C: Serialize>(
    artifact: &Path,
    subcommand: &str,
    args: &GlobalArgs,
    config: &C,
) -> Result<(), CliError> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        artifact: artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        args,
        config,
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(format!("manifest: {e}")))?;
    text.push('\n');
    let path = manifest_path(artifact);
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
