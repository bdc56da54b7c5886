use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Sidecar describing one run: the command line and every resolved parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Arguments after the binary name, enough to re-run the command.
    pub args: Vec<String>,
    pub params: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, args: &[String]) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            args: args.to_vec(),
            params: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn write(&self, path: &Path, force: bool) -> Result<(), CliError> {
        ensure_writable(path, force)?;
        let text = toml::to_string(self).map_err(|e| CliError::Usage(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad manifest {}: {e}", path.display())))
    }
}

/// `<file>.manifest.toml` next to a single-file output.
pub fn sidecar_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.toml");
    output.with_file_name(name)
}

pub fn ensure_writable(path: &Path, force: bool) -> Result<(), CliError> {
    if !force && path.exists() {
        return Err(CliError::Usage(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}
