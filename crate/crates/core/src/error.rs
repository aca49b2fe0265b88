use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("path delay {delay:.3e} s exceeds the cyclic-prefix span {limit:.3e} s")]
    DelayBeyondCyclicPrefix { delay: f64, limit: f64 },

    #[error("normalized frequency offset {xi:.4} of path {path} is outside (-0.5, 0.5)")]
    AliasedDoppler { path: usize, xi: f64 },

    #[error("data symbol {subcarrier} of OFDM symbol {symbol} has magnitude {magnitude:.3e}")]
    VanishingData {
        symbol: usize,
        subcarrier: usize,
        magnitude: f64,
    },

    #[error("found {found} spectral peaks above the floor, expected {expected}")]
    InsufficientPeaks { found: usize, expected: usize },

    #[error("requested {requested} sources from a {antennas}-element array")]
    TooManySources { requested: usize, antennas: usize },

    #[error("spatial covariance has rank {rank}, need at least {needed}")]
    RankDeficient { rank: usize, needed: usize },

    #[error("strongest spectrum row is only {ratio_db:.2} dB above the median row")]
    NoStaticRidge { ratio_db: f64 },

    #[error("Fisher information matrix is singular")]
    SingularFisher,

    #[error("correlation covariance is not positive definite")]
    NonPsdCovariance,

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
