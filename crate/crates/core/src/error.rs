use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("epsilon must be positive and finite, got {0}")]
    InvalidEpsilon(f64),

    #[error("grid would have {cells} cells, above the limit of {limit}; use a larger epsilon")]
    GridTooLarge { cells: u128, limit: u128 },

    #[error("non-finite value in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("malformed network file: {0}")]
    MalformedNetworkFile(String),

    #[error("unsupported network file version {0}")]
    UnsupportedVersion(u32),

    #[error("barrier margin eta must be positive, got {0}")]
    NonPositiveEta(f64),

    #[error("missing Lipschitz constant: {0}")]
    MissingLipschitz(&'static str),

    #[error("non-finite value at {context}: state {state:?}")]
    NonFiniteState { context: String, state: Vec<f64> },

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("source closed loop fails the barrier grid check at {violations} point(s)")]
    SourceNotCertified { violations: usize },

    #[error("grid does not cover the system state box")]
    GridMismatch,

    #[error("systems do not share a state box")]
    StateBoxMismatch,

    #[error("unknown benchmark '{0}'")]
    UnknownBenchmark(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("a 2-D slice is required for a {0}-dimensional state space")]
    SliceRequired(usize),

    /// The message already includes the inner error, so it is not exposed as a `source`.
    #[error("{stage}: {inner}")]
    Stage {
        stage: &'static str,
        inner: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            inner: Box::new(self),
        }
    }
}
