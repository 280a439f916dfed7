use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("malformed scene: {0}")]
    MalformedScene(String),

    #[error("degenerate scene: {0}")]
    DegenerateScene(String),

    #[error("invalid cost matrix: {0}")]
    InvalidCost(String),

    #[error(
        "more ground truths ({gt}) than predictions ({pred}); background augmentation needs predictions >= ground truths"
    )]
    UnsupportedDirection { pred: usize, gt: usize },

    #[error(
        "cost matrix is {rows}x{cols}; square input required, use background_augmented_cost first"
    )]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid marginals: {0}")]
    InvalidMarginals(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kappa1 + kappa2 must equal 1 (complementary weights), got {kappa1} + {kappa2} = {}", kappa1 + kappa2)]
    KappaNotComplementary { kappa1: f64, kappa2: f64 },

    #[error("Gibbs kernel underflow at {0}: exp(-C/eps) vanished; use the log-domain solver")]
    KernelUnderflow(String),

    #[error("brute-force assignment refused for n = {0} (limit 8)")]
    TooLargeForBruteForce(usize),

    #[error("scene file {path}: {msg}")]
    SceneFile { path: String, msg: String },

    #[error(
        "matrix of {rows}x{cols} is too large for a heatmap (limit 64x64); write it as CSV instead"
    )]
    HeatmapTooLarge { rows: usize, cols: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
