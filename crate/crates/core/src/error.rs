use alloc::boxed::Box;
use alloc::string::String;

use crate::transport::ProtocolError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("mixing weight {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("parameter vector contains a non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("parameter vector must have at least one entry")]
    EmptyVector,
    #[error("local training diverged at iteration {iteration}")]
    Diverged { iteration: u64 },
    #[error("update timestamp {tau} is ahead of server epoch {epoch}")]
    FutureTimestamp { tau: u64, epoch: u64 },
    #[error("update rejected: staleness {staleness} exceeds bound {max}")]
    StaleUpdate { staleness: u64, max: u64 },
    #[error("no model in history for epoch {0}")]
    HistoryUnderflow(u64),
    #[error("shard is empty")]
    EmptyShard,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("at simulated time {time}: {source}")]
    Simulation { time: f64, source: Box<Error> },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}
