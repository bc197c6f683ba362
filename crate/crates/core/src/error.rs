use thiserror::Error;

use crate::sim::SimTime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("event scheduled at {at} but clock is already at {now}")]
    PastEvent { at: SimTime, now: SimTime },

    #[error("jitter fraction must be in [0, 1), got {0}")]
    InvalidJitter(f64),

    #[error("packet of kind {0:?} offered to the credit queue")]
    NotACredit(crate::net::PacketKind),

    #[error("routing: {0}")]
    Routing(String),

    #[error("config: {0}")]
    Config(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
