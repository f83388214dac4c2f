//! The quantized EMA cycle: dequantize, blend with the new signal, requantize.
//!
//! Also hosts the signal-swamping predicates, which tell when nearest
//! rounding is guaranteed to absorb an update completely.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::levels::{level_radius, LevelTable, RadiusStats};
use crate::packed::BlockQuantizedTensor;
use crate::quant::BlockQuantization;

/// How a state tensor is held between steps.
#[derive(Debug, Clone, PartialEq)]
pub enum StateFormat {
    /// Plain `f64` buffer; the reference path for differential tests.
    FullPrecision,
    Quantized(BlockQuantization),
}

impl StateFormat {
    pub fn quantization(&self) -> Option<&BlockQuantization> {
        match self {
            StateFormat::FullPrecision => None,
            StateFormat::Quantized(q) => Some(q),
        }
    }

    /// Whether values must be non-negative.
    pub fn is_unsigned(&self) -> bool {
        self.quantization().is_some_and(|q| !q.is_signed())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmaConfig {
    beta: f64,
    format: StateFormat,
}

impl EmaConfig {
    pub fn new(beta: f64, format: StateFormat) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "momentum must lie in [0, 1)",
            });
        }
        Ok(EmaConfig { beta, format })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn format(&self) -> &StateFormat {
        &self.format
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmaStorage {
    Full(Vec<f64>),
    Quantized(BlockQuantizedTensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    storage: EmaStorage,
    step: u64,
}

fn check_values(values: &[f64], format: &StateFormat) -> Result<()> {
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if format.is_unsigned() {
        if let Some(&x) = values.iter().find(|&&x| x < 0.0) {
            return Err(Error::SignViolation(x));
        }
    }
    Ok(())
}

fn encode<R: Rng + ?Sized>(values: Vec<f64>, format: &StateFormat, rng: &mut R) -> Result<EmaStorage> {
    Ok(match format {
        StateFormat::FullPrecision => EmaStorage::Full(values),
        StateFormat::Quantized(q) => {
            EmaStorage::Quantized(BlockQuantizedTensor::quantize(&values, q, rng)?)
        }
    })
}

impl EmaState {
    /// State holding `values` in the configured format, at step 0.
    pub fn init<R: Rng + ?Sized>(values: &[f64], cfg: &EmaConfig, rng: &mut R) -> Result<Self> {
        check_values(values, &cfg.format)?;
        Ok(EmaState {
            storage: encode(values.to_vec(), &cfg.format, rng)?,
            step: 0,
        })
    }

    pub fn zeros(len: usize, cfg: &EmaConfig) -> Result<Self> {
        Self::zeros_with(len, &cfg.format)
    }

    pub(crate) fn zeros_with(len: usize, format: &StateFormat) -> Result<Self> {
        // an all-zero tensor consumes no random draws in any mode
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        Ok(EmaState {
            storage: encode(alloc::vec![0.0; len], format, &mut rng)?,
            step: 0,
        })
    }

    /// One update: `x̂ = β·x̃ + (1-β)·z`, then requantize. Block scales, the
    /// tensor quantile and the log bases are all recomputed from `x̂`.
    pub fn step<R: Rng + ?Sized>(&mut self, signals: &[f64], cfg: &EmaConfig, rng: &mut R) -> Result<()> {
        self.step_with(signals, cfg.beta, &cfg.format, rng)
    }

    pub(crate) fn step_with<R: Rng + ?Sized>(
        &mut self,
        signals: &[f64],
        beta: f64,
        format: &StateFormat,
        rng: &mut R,
    ) -> Result<()> {
        if signals.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: signals.len(),
            });
        }
        check_values(signals, format)?;
        let mut blended = self.read_with(format)?;
        for (x, &z) in blended.iter_mut().zip(signals) {
            *x = beta * *x + (1.0 - beta) * z;
        }
        if format.is_unsigned() {
            // roundoff must not push a non-negative blend below zero
            blended.iter_mut().for_each(|x| *x = x.max(0.0));
        }
        self.storage = encode(blended, format, rng)?;
        self.step += 1;
        Ok(())
    }

    /// Dequantized values.
    pub fn read(&self, cfg: &EmaConfig) -> Result<Vec<f64>> {
        self.read_with(&cfg.format)
    }

    pub(crate) fn read_with(&self, format: &StateFormat) -> Result<Vec<f64>> {
        match (&self.storage, format) {
            (EmaStorage::Full(v), StateFormat::FullPrecision) => Ok(v.clone()),
            (EmaStorage::Quantized(t), StateFormat::Quantized(q)) => t.dequantize(q),
            _ => Err(Error::Inconsistent("state storage does not match its config")),
        }
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            EmaStorage::Full(v) => v.len(),
            EmaStorage::Quantized(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn storage(&self) -> &EmaStorage {
        &self.storage
    }
}

/// Sufficient condition for nearest rounding to leave `code` unchanged:
/// `r >= (1-β)·|z/Δ_new - y_code| + |Δ_old/Δ_new - 1|`, with `r` the radius of
/// the code's level. A `false` result does not imply the code moves.
pub fn swamping_holds(
    code: usize,
    table: &LevelTable,
    beta: f64,
    z_over_delta_new: f64,
    delta_ratio: f64,
) -> bool {
    let (Some(y), Some(r)) = (table.level(code), level_radius(table, code)) else {
        return false;
    };
    r >= (1.0 - beta) * (z_over_delta_new - y).abs() + (delta_ratio - 1.0).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusChoice {
    /// Every level swamps.
    Min,
    /// At least half of the levels swamp.
    Median,
}

/// Momentum above which signals bounded by the scale are swamped:
/// `1 - r` for unsigned states, `1 - r/2` for signed ones.
pub fn swamping_beta_threshold(stats: &RadiusStats, signed: bool, choice: RadiusChoice) -> f64 {
    let r = match choice {
        RadiusChoice::Min => stats.r_min,
        RadiusChoice::Median => stats.r_median,
    };
    if signed {
        1.0 - r / 2.0
    } else {
        1.0 - r
    }
}
