//! Run manifests: which workload, machine and inputs a run uses, and where
//! its results go.
//!
//! Relative paths resolve against the manifest's directory, then the
//! current directory, then `$SIGDLA_FIXTURES`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sigdla_core::engine::{MachineConfig, Tensors};
use sigdla_core::mapper::TensorPlan;
use sigdla_core::Workload;

use crate::formats::{self, FormatError};

pub const FIXTURES_ENV: &str = "SIGDLA_FIXTURES";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub workload: Option<PathBuf>,
    pub machine: Option<PathBuf>,
    /// Signal for the `x` input.
    pub input: Option<PathBuf>,
    /// Signals for any other named inputs (e.g. `weights`).
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
    pub out: Option<PathBuf>,
    pub format: Option<ReportFormat>,
    #[serde(skip)]
    pub base: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("file not found: {0}")]
    NotFound(String),
    #[error("no workload given")]
    NoWorkload,
    #[error("missing input `{0}`")]
    MissingInput(String),
}

/// Locate `p` using the manifest base, the working directory and the
/// fixture directory, in that order.
pub fn resolve(p: &Path, base: Option<&Path>) -> Result<PathBuf, ManifestError> {
    if p.is_absolute() {
        return if p.exists() {
            Ok(p.to_path_buf())
        } else {
            Err(ManifestError::NotFound(p.display().to_string()))
        };
    }
    let fixtures = std::env::var_os(FIXTURES_ENV).map(PathBuf::from);
    base.map(|b| b.join(p))
        .into_iter()
        .chain([p.to_path_buf()])
        .chain(fixtures.map(|f| f.join(p)))
        .find(|c| c.exists())
        .ok_or_else(|| ManifestError::NotFound(p.display().to_string()))
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ManifestError> {
    let text = formats::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| ManifestError::Json {
        path: path.display().to_string(),
        source,
    })
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let path = resolve(path, None)?;
        let mut m: RunManifest = load_json(&path)?;
        m.base = path.parent().map(Path::to_path_buf);
        Ok(m)
    }

    fn find(&self, p: &Path) -> Result<PathBuf, ManifestError> {
        resolve(p, self.base.as_deref())
    }

    pub fn load_workload(&self) -> Result<Workload, ManifestError> {
        let p = self.workload.as_deref().ok_or(ManifestError::NoWorkload)?;
        load_json(&self.find(p)?)
    }

    pub fn load_machine(&self) -> Result<MachineConfig, ManifestError> {
        match &self.machine {
            Some(p) => load_json(&self.find(p)?),
            None => Ok(MachineConfig::default()),
        }
    }

    /// Output directory, resolved against the manifest base.
    pub fn out_dir(&self) -> Option<PathBuf> {
        self.out.as_ref().map(|o| match &self.base {
            Some(b) if o.is_relative() => b.join(o),
            _ => o.clone(),
        })
    }

    /// Read every input the plan declares from the manifest's files.
    /// Returns the tensors and the total number of saturated samples.
    pub fn load_inputs(&self, plan: &TensorPlan) -> Result<(Tensors, usize), ManifestError> {
        let (tensors, saturated) = self.load_inputs_partial(plan)?;
        match plan.inputs().find(|t| !tensors.contains_key(&t.name)) {
            Some(t) => Err(ManifestError::MissingInput(t.name.clone())),
            None => Ok((tensors, saturated)),
        }
    }

    /// Like [`load_inputs`](Self::load_inputs), skipping inputs that have
    /// no file.
    pub fn load_inputs_partial(&self, plan: &TensorPlan) -> Result<(Tensors, usize), ManifestError> {
        let mut tensors = Tensors::new();
        let mut saturated = 0;
        for t in plan.inputs() {
            let file = if t.name == "x" {
                self.input.as_ref()
            } else {
                self.inputs.get(&t.name)
            };
            let Some(file) = file else { continue };
            let s = formats::read_signal(&self.find(file)?, t.bits)?;
            saturated += s.saturated;
            tensors.insert(t.name.clone(), s.values);
        }
        Ok((tensors, saturated))
    }
}
