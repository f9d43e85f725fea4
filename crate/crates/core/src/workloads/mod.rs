//! Synthetic scenario catalog and machine profiles.
//!
//! Four interactive application analogs are paired with seven background
//! loads for 28 canonical scenarios, numbered S1 to S28. Task parameters per
//! kind live in a [`WorkloadCatalog`]; machine differences come from a
//! [`MachineProfile`].

mod kinds;
mod params;
mod profiles;
mod scenario;

pub use kinds::{
    catalog, descriptor, label_for, scenario_id_of, BackgroundKind, InteractiveKind, LabelMode,
    ResourceGroup, ScenarioDescriptor,
};
pub use params::{TaskTemplate, WorkloadCatalog};
pub use profiles::{default_profiles, find_profile, MachineProfile, REFERENCE_IO_LATENCY};
pub use scenario::{build_phased, build_scenario, Phase, Scenario};
