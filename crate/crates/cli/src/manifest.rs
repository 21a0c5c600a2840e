//! Run manifests written next to every artifact as `<artifact>.manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub options: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_clock_ms: u128,
    #[serde(skip)]
    started: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.into(),
            inputs: Vec::new(),
            options: BTreeMap::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_ms: 0,
            started: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn option(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.options.insert(key.into(), v);
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Sidecar path for an artifact.
    pub fn path_for(artifact: &Path) -> PathBuf {
        let mut name = artifact.as_os_str().to_os_string();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    /// Writes one sidecar per registered output.
    pub fn finish(mut self) -> Result<(), CliError> {
        if let Some(t) = self.started {
            self.wall_clock_ms = t.elapsed().as_millis();
        }
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Input(e.to_string()))?;
        for out in &self.outputs {
            fs::write(Self::path_for(Path::new(out)), format!("{text}\n"))?;
        }
        Ok(())
    }
}
