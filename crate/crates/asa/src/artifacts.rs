//! On-disk layout of pipeline outputs.
//!
//! ```text
//! <out>/stage1/{report.json, model.json, mappings.json, train.csv, holdout.csv}
//! <out>/stage2/...
//! <out>/stage3/...
//! <out>/adapt/<profile>/{report.json, mapping.json, model.json?}
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use asa_core::agent::MappingTable;
use asa_core::classify::ForestModel;
use asa_core::eval::Deployment;
use asa_core::pipeline::{Adaptation, StageOutput, StageReport, GENERAL};

use crate::error::Result;
use crate::files::{read_dataset, read_json, write_dataset, write_json};

pub fn stage_dir(out: &Path, stage: u8) -> PathBuf {
    out.join(format!("stage{stage}"))
}

pub fn adapt_dir(out: &Path, profile: &str) -> PathBuf {
    out.join("adapt").join(profile)
}

pub fn save_stage(dir: &Path, s: &StageOutput) -> Result<()> {
    write_json(&dir.join("report.json"), &s.report)?;
    write_json(&dir.join("model.json"), &s.model)?;
    write_json(&dir.join("mappings.json"), &s.mappings)?;
    write_dataset(&dir.join("train.csv"), &s.train)?;
    write_dataset(&dir.join("holdout.csv"), &s.holdout)
}

pub fn load_stage(dir: &Path) -> Result<StageOutput> {
    let model: ForestModel = read_json(&dir.join("model.json"))?;
    model.validate()?;
    Ok(StageOutput {
        report: read_json::<StageReport>(&dir.join("report.json"))?,
        train: read_dataset(&dir.join("train.csv"))?,
        holdout: read_dataset(&dir.join("holdout.csv"))?,
        model,
        mappings: read_json(&dir.join("mappings.json"))?,
    })
}

pub fn save_adaptation(dir: &Path, a: &Adaptation) -> Result<()> {
    write_json(&dir.join("report.json"), &a.report)?;
    write_json(&dir.join("mapping.json"), &a.mapping)?;
    if let Some(m) = &a.model {
        write_json(&dir.join("model.json"), m)?;
    }
    Ok(())
}

/// What each machine runs: its adaptation output when present, else the
/// stage-3 mapping for it (or the general one) with the stage-3 model.
pub fn deployments(out: &Path, stage3: &StageOutput, profiles: &[String]) -> Result<BTreeMap<String, Deployment>> {
    let mut d = BTreeMap::new();
    d.insert(
        GENERAL.to_string(),
        Deployment {
            model: stage3.model.clone(),
            mapping: stage3.mapping_for(GENERAL)?.clone(),
        },
    );
    for p in profiles {
        let dir = adapt_dir(out, p);
        let dep = if dir.join("mapping.json").exists() {
            let model_path = dir.join("model.json");
            Deployment {
                mapping: read_json::<MappingTable>(&dir.join("mapping.json"))?,
                model: if model_path.exists() {
                    read_json(&model_path)?
                } else {
                    stage3.model.clone()
                },
            }
        } else {
            Deployment {
                model: stage3.model.clone(),
                mapping: stage3.mapping_for(p)?.clone(),
            }
        };
        d.insert(p.clone(), dep);
    }
    Ok(d)
}
