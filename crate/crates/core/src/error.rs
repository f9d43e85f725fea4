use alloc::boxed::Box;
use alloc::string::String;

use crate::policies::PolicyId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid task {task_id}: {reason}")]
    InvalidTask { task_id: u32, reason: String },
    #[error("scenario has no tasks")]
    EmptyScenario,
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("policy `{0}` is registered twice")]
    DuplicatePolicy(PolicyId),
    #[error("policy `{0}` is not in the registered portfolio")]
    PolicyNotInPortfolio(PolicyId),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("unknown machine profile `{0}`")]
    UnknownProfile(String),
    #[error("trace window spans {got} ticks, expected {expected}")]
    WindowLength { expected: u64, got: u64 },
    #[error("event at tick {tick} lies outside window [{start}, {end})")]
    EventOutsideWindow { tick: u64, start: u64, end: u64 },
    #[error("feature schema mismatch: expected version {expected}, found {found}")]
    SchemaMismatch { expected: u32, found: u32 },
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("voting window is empty")]
    EmptyWindow,
    #[error("invalid voting parameters: {0}")]
    InvalidVotingParams(String),
    #[error("probability distribution has {got} classes, expected {expected}")]
    ClassCountMismatch { expected: usize, got: usize },
    #[error("invalid score parameters: {0}")]
    InvalidScoreParams(String),
    #[error("metric `{0}` cannot be extracted from the run")]
    MissingMetric(String),
    #[error("class `{0}` has no mapping-table entry")]
    UnmappedClass(String),
    #[error("run failed (profile {profile}, scenario {scenario}, policy {policy}): {source}")]
    RunFailed {
        profile: String,
        scenario: String,
        policy: String,
        source: Box<Error>,
    },
    #[error("no latency records")]
    NoRecords,
    #[error("window sweep needs at least one window length")]
    EmptySweep,
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
}
