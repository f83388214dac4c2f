use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("bit width {0} outside the supported range 2..=8")]
    UnsupportedBits(u32),
    #[error("packed storage supports 2, 4 or 8 bits, got {0}")]
    UnsupportedStorageBits(u32),
    #[error("logarithmic base {0} must lie strictly between 0 and 1")]
    InvalidBase(f64),
    #[error("invalid scheme combination: {0}")]
    InvalidScheme(&'static str),
    #[error("empty input")]
    Empty,
    #[error("quantile {0} must lie strictly between 0 and 1")]
    InvalidQuantile(f64),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("code {code} out of range for {bits}-bit table")]
    CodeOutOfRange { code: u32, bits: u32 },
    #[error("negative value {0} given to an unsigned state")]
    SignViolation(f64),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("block holds {len} values but block size is {block_size}")]
    BlockTooLarge { len: usize, block_size: usize },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("inconsistent state: {0}")]
    Inconsistent(&'static str),
    #[error("unknown preset `{0}`")]
    UnknownPreset(alloc::string::String),
}
