use crate::model::Channel;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("cannot normalize a zero vector")]
    ZeroNorm,

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("time step too large: jump probability {probability:.4} per step exceeds {limit}")]
    StepTooLarge { probability: f64, limit: f64 },

    #[error("dark-state collapse on channel {channel}: jump norm squared {norm_sqr:.3e}")]
    DarkStateCollapse { channel: Channel, norm_sqr: f64 },

    #[error("non-unique steady state: null space has dimension {dimension}")]
    NonUniqueSteadyState { dimension: usize },

    #[error("channel {channel} is dark (flux {flux:.3e})")]
    DarkChannel { channel: Channel, flux: f64 },

    #[error("histogram geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("bin width {bin_width} is below the engine time step {dt}")]
    BinTooNarrow { bin_width: f64, dt: f64 },

    #[error("trajectory {id}: {source}")]
    Trajectory {
        id: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn in_trajectory(self, id: u64) -> Self {
        match self {
            e @ Error::Trajectory { .. } => e,
            e => Error::Trajectory { id, source: Box::new(e) },
        }
    }
}
