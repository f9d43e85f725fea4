use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}")]
    TomlRead {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("toml encoding: {0}")]
    TomlWrite(#[from] toml::ser::Error),
    #[error("{path}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: line {line}: {reason}")]
    Format { path: PathBuf, line: usize, reason: String },
    #[error("bad override `{0}`: expected key.path=value")]
    Override(String),
    #[error(transparent)]
    Core(#[from] asa_core::Error),
}

pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}
