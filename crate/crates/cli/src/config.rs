//! JSON run configuration. Every section is optional and falls back to its
//! defaults; flags are applied on top and the merged result is written
//! next to the outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dgm_dte::data::{GeneratorSpec, ShotSpec, SplitSpec};
use dgm_dte::model::DgmConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorSpec,
    pub split: SplitSpec,
    pub shots: ShotSpec,
    /// Desk-scale defaults (batch 256, 30 epochs).
    pub model: DgmConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| dgm_dte::Error::io(path, e))?;
        let rc = serde_json::from_str(&text).map_err(|e| dgm_dte::Error::Config(format!("{}: {e}", path.display())))?;
        Ok(rc)
    }

    /// `path` if given, else defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.shots.validate()?;
        self.model.validate()?;
        Ok(())
    }

    pub fn write_next_to(&self, output: &Path) -> Result<PathBuf> {
        let path = sibling(output, ".config.json");
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `output` with `suffix` appended to its file name.
pub fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
