//! Error taxonomy shared by the whole crate.
//!
//! Input and configuration problems (`Io`, `Format`, `UnsupportedDatatype`,
//! `LabelDomain`, `FiniteValue`, `Config`) are distinguished from failures
//! that arise during an otherwise well-posed computation (`DegenerateInput`,
//! `Shape`, `RegionNesting`, `EmptyMask`). The CLI maps the former to exit
//! code 2 and the latter to exit code 1.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Underlying read/write failure. The message carries the path.
    #[error("i/o error: {0}")]
    Io(String),

    /// Malformed or truncated file contents.
    #[error("format error: {0}")]
    Format(String),

    /// A well-formed file using a datatype this crate does not decode.
    #[error("unsupported datatype: {0}")]
    UnsupportedDatatype(String),

    /// A label image containing values outside {0, 1, 2, 3}.
    #[error("label domain error: {0}")]
    LabelDomain(String),

    /// NaN or infinity where finite values are required.
    #[error("non-finite value: {0}")]
    FiniteValue(String),

    /// Invalid parameter or configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Input that makes the requested computation meaningless,
    /// e.g. z-scoring a constant image.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Operands whose grid shapes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Region masks violating the required nesting et ⊆ tc ⊆ wt.
    #[error("region nesting violation: {0}")]
    RegionNesting(String),

    /// An empty mask where a non-empty one is required (e.g. HD95).
    #[error("empty mask: {0}")]
    EmptyMask(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad inputs or configuration rather than
    /// by the computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Format(_)
                | Error::UnsupportedDatatype(_)
                | Error::LabelDomain(_)
                | Error::FiniteValue(_)
                | Error::Config(_)
        )
    }
}
