use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{CliError, Job};

/// Record of one run: enough to repeat it with `replay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub job: Job,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    /// Files written, relative to the output location.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(job: Job, seed: u64, outputs: Vec<String>) -> Self {
        let versions = BTreeMap::from([
            ("spherefit".to_string(), spherefit::VERSION.to_string()),
            (
                "spherefit-cli".to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            ),
            ("manifest".to_string(), "1".to_string()),
        ]);
        Self {
            job,
            seed,
            versions,
            outputs,
        }
    }

    /// `<out>/manifest.json` for directory outputs, `<stem>.manifest.json` beside file outputs.
    pub fn path_for(job: &Job, out: &Path) -> PathBuf {
        if job.writes_file() {
            let stem = out
                .file_stem()
                .map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned());
            out.with_file_name(format!("{stem}.manifest.json"))
        } else {
            out.join("manifest.json")
        }
    }

    pub fn write(&self, out: &Path) -> Result<(), CliError> {
        let path = Self::path_for(&self.job, out);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::io(e.to_string()))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
    }
}
