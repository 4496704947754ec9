//! Benchmark suites: cycle counts and speedups against the 16x16 baseline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sigdla_core::engine::{run, zero_inputs, CycleReport, MachineConfig};
use sigdla_core::mac_array::Width;
use sigdla_core::{BitwidthConfig, Workload};

use crate::manifest::{load_json, resolve, ManifestError};

/// A workload given inline or as a path to a workload file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkloadRef {
    Path(PathBuf),
    Inline(Workload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    pub name: String,
    pub workload: WorkloadRef,
    /// Configurations such as `"8x8"`.
    pub configs: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub machine: Option<MachineConfig>,
    #[serde(default)]
    pub entries: Vec<SuiteEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub index: usize,
    pub name: String,
    pub config: String,
    #[serde(flatten)]
    pub report: CycleReport,
    /// Baseline cycles over this configuration's cycles.
    pub speedup: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("entry `{entry}`: bad configuration `{config}`")]
    Config { entry: String, config: String },
    #[error("entry `{entry}` at {config}: {msg}")]
    Map { entry: String, config: String, msg: String },
    #[error("entry `{entry}` at {config}: {source}")]
    Engine {
        entry: String,
        config: String,
        #[source]
        source: sigdla_core::engine::EngineError,
    },
}

pub const BASELINE: BitwidthConfig = BitwidthConfig::square(Width::W16);

fn cycles(entry: &str, w: &Workload, cfg: BitwidthConfig, machine: &MachineConfig) -> Result<CycleReport, BenchError> {
    let w = w.with_bitwidth(cfg);
    let (program, plan) = w.map().map_err(|e| BenchError::Map {
        entry: entry.to_string(),
        config: cfg.to_string(),
        msg: e.to_string(),
    })?;
    let (_, report) = run(&program, &plan, &zero_inputs(&plan), machine).map_err(|source| BenchError::Engine {
        entry: entry.to_string(),
        config: cfg.to_string(),
        source,
    })?;
    Ok(report)
}

fn run_entry(
    index: usize,
    e: &SuiteEntry,
    base: Option<&Path>,
    machine: &MachineConfig,
) -> Result<Vec<BenchRow>, BenchError> {
    let w: Workload = match &e.workload {
        WorkloadRef::Inline(w) => w.clone(),
        WorkloadRef::Path(p) => load_json(&resolve(p, base)?)?,
    };
    let configs = e
        .configs
        .iter()
        .map(|c| {
            c.parse::<BitwidthConfig>().map_err(|_| BenchError::Config {
                entry: e.name.clone(),
                config: c.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let base_report = cycles(&e.name, &w, BASELINE, machine)?;
    let baseline = base_report.total_cycles;
    configs
        .into_iter()
        .map(|cfg| {
            let report = if cfg == BASELINE {
                base_report
            } else {
                cycles(&e.name, &w, cfg, machine)?
            };
            Ok(BenchRow {
                index,
                name: e.name.clone(),
                config: cfg.to_string(),
                speedup: baseline as f64 / report.total_cycles as f64,
                report,
            })
        })
        .collect()
}

/// Run every entry, in parallel, and return rows in suite order. An
/// explicit `machine` takes precedence over the suite's own.
pub fn run_suite(
    suite: &Suite,
    base: Option<&Path>,
    machine: Option<&MachineConfig>,
) -> Result<Vec<BenchRow>, BenchError> {
    let default = MachineConfig::default();
    let machine = machine.or(suite.machine.as_ref()).unwrap_or(&default);
    let results: Vec<Result<Vec<BenchRow>, BenchError>> = std::thread::scope(|s| {
        let handles: Vec<_> = suite
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| s.spawn(move || run_entry(i, e, base, machine)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("bench worker panicked"))
            .collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut s = format!("index,name,config,{},speedup\n", CycleReport::FIELDS.join(","));
    for r in rows {
        let values: Vec<String> = r.report.values().iter().map(u64::to_string).collect();
        s += &format!(
            "{},{},{},{},{:.4}\n",
            r.index,
            r.name,
            r.config,
            values.join(","),
            r.speedup
        );
    }
    s
}

pub fn rows_json(rows: &[BenchRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize") + "\n"
}
