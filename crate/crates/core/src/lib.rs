//! Quantized optimizer state at 2/3/4/8 bits.
//!
//! The crate is `no_std` and only needs `alloc`. It covers the numerical
//! core: quantization level tables and their radii, block-wise quantizers
//! with nearest, stochastic and log-dither rounding, bit-packed code storage,
//! the quantize/EMA/dequantize cycle, and Adam-family optimizers whose moment
//! estimates live in low-bit form.
//!
//! IO, file formats, experiments and the command-line front end live in the
//! companion `lowbit` crate.
#![no_std]
#![deny(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ema;
pub mod error;
pub mod levels;
pub mod optim;
pub mod packed;
pub mod quant;

pub use ema::{EmaConfig, EmaState, StateFormat};
pub use error::{Error, Result};
pub use levels::{LevelTable, RadiusStats, SchemeKind};
pub use optim::{Family, OptimizerSpec, ParamSlot, Preset};
pub use packed::{BlockQuantizedTensor, PackedCodes};
pub use quant::{BlockQuantization, RoundingMode};
