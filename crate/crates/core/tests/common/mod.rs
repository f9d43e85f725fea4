#![allow(dead_code)]

use asa_core::agent::{MappingTable, Provenance, MAPPING_VERSION};
use asa_core::classify::{train, ForestModel, Hyperparams, LabeledRow};
use asa_core::metrics::run_features;
use asa_core::policies::PolicyId;
use asa_core::sim::{run_simulation, StaticController};
use asa_core::workloads::{build_scenario, default_profiles, MachineProfile, WorkloadCatalog};

pub fn short_catalog(ticks: u64) -> WorkloadCatalog {
    WorkloadCatalog {
        horizon_ticks: ticks,
        ..WorkloadCatalog::default()
    }
}

pub fn profile(id: &str) -> MachineProfile {
    default_profiles().into_iter().find(|p| p.profile_id == id).unwrap()
}

/// A forest trained on static runs of `scenarios` under the baseline.
pub fn small_model(cat: &WorkloadCatalog, prof: &MachineProfile, scenarios: &[&str]) -> ForestModel {
    let mut rows = Vec::new();
    for &s in scenarios {
        for seed in [1, 2] {
            let sc = build_scenario(cat, s, prof, seed).unwrap();
            for p in [PolicyId::BASELINE, PolicyId::Fifo] {
                let run = run_simulation(&prof.sim_config(seed), &sc, &mut StaticController(p)).unwrap();
                for (w, fv) in run_features(&run).unwrap().into_iter().enumerate() {
                    rows.push(LabeledRow {
                        label: s.to_string(),
                        profile_id: prof.profile_id.clone(),
                        scenario_id: s.to_string(),
                        policy: p.as_str().into(),
                        seed,
                        window: w as u32,
                        values: fv.values,
                    });
                }
            }
        }
    }
    train(&rows, &Hyperparams { n_trees: 16, ..Hyperparams::default() }).unwrap()
}

pub fn mapping(entries: &[(&str, PolicyId)]) -> MappingTable {
    MappingTable {
        version: MAPPING_VERSION,
        entries: entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        provenance: Provenance {
            stage: "fixture".into(),
            profile_id: "*".into(),
            dataset_checksum: String::new(),
            score_table_checksum: String::new(),
        },
    }
}
