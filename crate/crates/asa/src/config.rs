//! Run configuration: one TOML file plus `key.path=value` overrides.

use std::path::{Path, PathBuf};

use asa_core::eval::{EvalConfig, SweepConfig};
use asa_core::pipeline::PipelineConfig;
use asa_core::policies::PolicyId;
use asa_core::workloads::{MachineProfile, WorkloadCatalog};
use serde::{Deserialize, Serialize};

use crate::catalog::{load_catalog, load_profiles};
use crate::error::{io, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub out_dir: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub catalog: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub prototypes: Vec<String>,
    /// Machines for adaptation and evaluation.
    pub targets: Vec<String>,
    /// Fine-tune the model during adaptation.
    pub adapt_fine_tune: bool,
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub fixture: PhaseFixture,
    pub sim: SimRun,
}

/// Scripted phase changes for the window sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseFixture {
    pub profile: String,
    pub seed: u64,
    pub policy: PolicyId,
    pub phase_ticks: u64,
    pub phases: Vec<String>,
}

impl Default for PhaseFixture {
    fn default() -> Self {
        Self {
            profile: "vm124".into(),
            seed: 11,
            policy: PolicyId::BASELINE,
            phase_ticks: 300_000,
            phases: ["S1", "S9", "S16", "S24", "S5", "S12"].map(String::from).to_vec(),
        }
    }
}

/// A single simulation for `sim run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimRun {
    pub profile: String,
    pub scenario: String,
    pub seed: u64,
    pub policy: PolicyId,
}

impl Default for SimRun {
    fn default() -> Self {
        Self {
            profile: "vm120".into(),
            scenario: "S1".into(),
            seed: 1,
            policy: PolicyId::BASELINE,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            out_dir: "out".into(),
            threads: 0,
            catalog: None,
            profiles: None,
            prototypes: ["vm120", "vm121", "vm125", "vm128"].map(String::from).to_vec(),
            targets: ["vm122", "vm123", "vm124", "vm126", "vm127", "vm129"].map(String::from).to_vec(),
            adapt_fine_tune: true,
            pipeline: PipelineConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
            fixture: PhaseFixture::default(),
            sim: SimRun::default(),
        }
    }
}

/// Parse an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Set `a.b.c = value` inside `table`, creating tables on the way.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Error::Override(spec.into()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Override(spec.into()));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let next = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next.as_table_mut().ok_or_else(|| Error::Override(spec.into()))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl Config {
    pub fn from_toml(text: &str, origin: &Path, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|source| Error::TomlRead {
            path: origin.into(),
            source,
        })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: Config = table.try_into().map_err(|source| Error::TomlRead {
            path: origin.into(),
            source,
        })?;
        // Relative paths inside the file are relative to the file.
        if let Some(dir) = origin.parent() {
            for p in [&mut cfg.catalog, &mut cfg.profiles].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.pipeline.validate()?;
        cfg.eval.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        Self::from_toml(&text, path, overrides)
    }

    pub fn catalog(&self) -> Result<WorkloadCatalog> {
        load_catalog(self.catalog.as_deref())
    }

    pub fn all_profiles(&self) -> Result<Vec<MachineProfile>> {
        load_profiles(self.profiles.as_deref())
    }

    pub fn select(&self, ids: &[String]) -> Result<Vec<MachineProfile>> {
        let all = self.all_profiles()?;
        ids.iter()
            .map(|id| Ok(asa_core::workloads::find_profile(&all, id)?.clone()))
            .collect()
    }
}
