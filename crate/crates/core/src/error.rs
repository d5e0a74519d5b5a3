use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid dimension must be even and at least 2, got {0}")]
    InvalidDimension(usize),

    #[error("state length {found} does not match grid dimension {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("states live on different grids (N={left} vs N={right})")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid coherent-state parameters: {0}")]
    InvalidCoherentParams(String),

    #[error("kicking strength must be finite and non-negative, got {0}")]
    InvalidKick(f64),

    #[error("dense Floquet matrix requested for N={0}, limit is {max}", max = crate::floquet::DENSE_MAX_DIM)]
    DenseTooLarge(usize),

    #[error(
        "spatial dimension d={0} is not supported (only d=1 and d=2 have closed-form g-functions)"
    )]
    UnsupportedDimension(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fit window [{start}, {end}] is invalid for a series of length {len}")]
    InvalidWindow {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("non-positive echo value {value} at n={n} cannot be fitted on a log scale")]
    NonPositiveEcho { n: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
