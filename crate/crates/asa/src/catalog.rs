//! Workload catalog and machine profiles as TOML files. The files shipped in
//! `catalog/` are the built-in defaults.

use std::path::Path;

use asa_core::workloads::{MachineProfile, WorkloadCatalog};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::{read_toml, write_text};

pub const WORKLOADS_TOML: &str = include_str!("../catalog/workloads.toml");
pub const PROFILES_TOML: &str = include_str!("../catalog/profiles.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFile {
    pub profile: Vec<MachineProfile>,
}

fn parse<T: serde::de::DeserializeOwned>(name: &str, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|source| Error::TomlRead {
        path: name.into(),
        source,
    })
}

pub fn builtin_catalog() -> Result<WorkloadCatalog> {
    let c: WorkloadCatalog = parse("catalog/workloads.toml", WORKLOADS_TOML)?;
    c.validate()?;
    Ok(c)
}

pub fn builtin_profiles() -> Result<Vec<MachineProfile>> {
    Ok(parse::<ProfileFile>("catalog/profiles.toml", PROFILES_TOML)?.profile)
}

pub fn load_catalog(path: Option<&Path>) -> Result<WorkloadCatalog> {
    match path {
        Some(p) => {
            let c: WorkloadCatalog = read_toml(p)?;
            c.validate()?;
            Ok(c)
        }
        None => builtin_catalog(),
    }
}

pub fn load_profiles(path: Option<&Path>) -> Result<Vec<MachineProfile>> {
    let ps = match path {
        Some(p) => read_toml::<ProfileFile>(p)?.profile,
        None => builtin_profiles()?,
    };
    for p in &ps {
        p.validate()?;
    }
    Ok(ps)
}

/// Write the in-code defaults as TOML.
pub fn dump_defaults(dir: &Path) -> Result<()> {
    write_text(&dir.join("workloads.toml"), &toml::to_string(&WorkloadCatalog::default())?)?;
    let profiles = ProfileFile {
        profile: asa_core::workloads::default_profiles(),
    };
    write_text(&dir.join("profiles.toml"), &toml::to_string(&profiles)?)
}
