use thiserror::Error;

/// Errors shared by every module of the laboratory.
#[derive(Debug, Error)]
pub enum FockError {
    #[error("weight is not subharmonic: discrete Laplacian = {value:.3e} at z = {re}+{im}i")]
    NotSubharmonic { re: f64, im: f64, value: f64 },

    #[error("disk D({center_re}+{center_im}i, {radius}) escapes the grid box; need half-width >= {needed}")]
    DiskOutsideBox {
        center_re: f64,
        center_im: f64,
        radius: f64,
        needed: f64,
    },

    #[error("mass never reaches 1 inside the box around {re}+{im}i (total {total:.3e}); use a larger box")]
    InsufficientMass { re: f64, im: f64, total: f64 },

    #[error("grid mismatch: expected {expected} nodes per side with L={expected_l}, got {got} with L={got_l}")]
    GridMismatch {
        expected: usize,
        expected_l: f64,
        got: usize,
        got_l: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {re}+{im}i is outside the interior of the metric graph")]
    OutsideGraph { re: f64, im: f64 },

    #[error("insufficient samples: {got} provided, {needed} required")]
    InsufficientSamples { got: usize, needed: usize },

    #[error("integrand has not decayed at the box boundary (max {value:.3e} > {tol:.1e}); use a larger box")]
    InsufficientDecay { value: f64, tol: f64 },

    #[error("basis truncation check failed: e^(-2 phi)|z|^(2N) at |z|=L is {ratio:.3e} of its max; enlarge L or reduce N")]
    TruncationCheck { ratio: f64 },

    #[error("normalized kernel k_{{z_i}} vanishes on supp chi_i (min |k| = {min_abs:.3e} at center {re}+{im}i); try a smaller covering multiplier")]
    KernelVanishes { re: f64, im: f64, min_abs: f64 },

    #[error("unknown suite '{0}'")]
    UnknownSuite(String),

    #[error("unknown table '{0}'")]
    UnknownTable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FockError>;
