use std::io;
use std::path::Path;

use thiserror::Error;

use crate::registry::RevertReason;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed public key")]
    MalformedKey,
    #[error("no gas entry for operation `{0}`")]
    UnknownOp(String),
    #[error("malformed record: {0}")]
    Format(String),
    #[error("chain is corrupt at block {0}")]
    Corrupt(u64),
    #[error("unknown contract {0}")]
    UnknownContract(crate::primitives::Address),
    #[error("call reverted: {0}")]
    CallFailed(RevertReason),
}

impl LedgerError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        LedgerError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
