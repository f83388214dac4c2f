//! Value-to-code mapping under nearest, stochastic and log-dither rounding.
//!
//! Every random choice is driven by an explicit draw (`u` or `xi`) or by a
//! caller-owned generator, so any run can be replayed exactly.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::levels::{build_log_levels, check_bits, LevelTable, SchemeKind};

pub const DEFAULT_BLOCK_SIZE: usize = 128;
pub const DEFAULT_P_QUANTILE: f64 = 0.1;

/// Bounds applied to `x_p / Δ` before taking the root that gives the base.
pub const LOG_RATIO_MIN: f64 = 1e-8;
pub const LOG_RATIO_MAX: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoundingMode {
    Nearest,
    /// Unbiased linear-interpolation rounding between the bracketing levels.
    Stochastic,
    /// Uniform dither in the log-index domain followed by round-half-even.
    LogDither,
}

impl RoundingMode {
    pub fn name(self) -> &'static str {
        match self {
            RoundingMode::Nearest => "nearest",
            RoundingMode::Stochastic => "stochastic",
            RoundingMode::LogDither => "log-dither",
        }
    }
}

/// Block-wise quantization settings for one state tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockQuantization {
    scheme: SchemeKind,
    bits: u32,
    mode: RoundingMode,
    block_size: usize,
    p_quantile: f64,
    // None for log schemes, whose table depends on the per-block base
    table: Option<LevelTable>,
}

impl BlockQuantization {
    pub fn new(scheme: SchemeKind, bits: u32, mode: RoundingMode) -> Result<Self> {
        check_bits(bits)?;
        if mode == RoundingMode::LogDither && !scheme.is_log() {
            return Err(Error::InvalidScheme(
                "log-dither rounding needs a logarithmic table",
            ));
        }
        let table = if scheme.is_log() {
            None
        } else {
            Some(LevelTable::new(scheme, bits)?)
        };
        Ok(BlockQuantization {
            scheme,
            bits,
            mode,
            block_size: DEFAULT_BLOCK_SIZE,
            p_quantile: DEFAULT_P_QUANTILE,
            table,
        })
    }

    pub fn with_block_size(mut self, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidParameter {
                name: "block_size",
                reason: "must be at least 1",
            });
        }
        self.block_size = block_size;
        Ok(self)
    }

    pub fn with_p_quantile(mut self, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidQuantile(p));
        }
        self.p_quantile = p;
        Ok(self)
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn mode(&self) -> RoundingMode {
        self.mode
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn p_quantile(&self) -> f64 {
        self.p_quantile
    }

    pub fn is_signed(&self) -> bool {
        self.scheme.is_signed()
    }

    /// Fixed level table; `None` for log schemes.
    pub fn table(&self) -> Option<&LevelTable> {
        self.table.as_ref()
    }

    /// Table in effect for a block whose base is `base` (ignored unless log).
    pub fn block_table(&self, base: Option<f64>) -> Result<Cow<'_, LevelTable>> {
        match (&self.table, base) {
            (Some(t), _) => Ok(Cow::Borrowed(t)),
            (None, Some(b)) => Ok(Cow::Owned(build_log_levels(self.bits, b)?)),
            (None, None) => Err(Error::InvalidScheme("log block without a base")),
        }
    }
}

/// Round half to even.
#[inline]
pub fn round_half_even(x: f64) -> f64 {
    libm::rint(x)
}

/// `Δ = max |x|` over a block. An all-zero block gives `Δ = 0`.
pub fn compute_scale(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    Ok(values.iter().fold(0.0f64, |m, &x| m.max(libm::fabs(x))))
}

/// Per-block log base `(x_p / Δ)^(1/(2^b - 1))`, with the ratio clamped to
/// `[LOG_RATIO_MIN, LOG_RATIO_MAX]` so the base stays strictly inside (0, 1).
pub fn compute_log_base(x_p: f64, delta: f64, bits: u32) -> Result<f64> {
    check_bits(bits)?;
    if !(delta > 0.0) {
        return Err(Error::NonPositiveScale(delta));
    }
    if !(x_p >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "x_p",
            reason: "quantile must be non-negative",
        });
    }
    let ratio = (x_p / delta).clamp(LOG_RATIO_MIN, LOG_RATIO_MAX);
    let steps = ((1u32 << bits) - 1) as f64;
    Ok(libm::pow(ratio, 1.0 / steps))
}

/// Nearest-rank `p`-quantile of `|values|` (zeros included).
pub fn tensor_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidQuantile(p));
    }
    let mut abs: Vec<f64> = values.iter().map(|x| libm::fabs(*x)).collect();
    let n = abs.len();
    // guard against p*n landing a hair above an integer
    let rank = libm::ceil(p * n as f64 - 1e-9).max(1.0) as usize;
    let idx = rank.min(n) - 1;
    let (_, v, _) = abs.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    Ok(*v)
}

/// First ascending position whose level is `>= v`.
fn lower_bound(table: &LevelTable, v: f64) -> usize {
    let (mut lo, mut hi) = (0usize, table.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if table.ascending(mid) < v {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `argmin_k |x/Δ - y_k|`, ties to the smaller code. `Δ` must be positive;
/// values beyond the table clamp to the extreme level.
pub fn quantize_nearest(x: f64, delta: f64, table: &LevelTable) -> u8 {
    debug_assert!(delta > 0.0);
    let v = x / delta;
    let n = table.len();
    let j = lower_bound(table, v);
    let code = if j == 0 {
        table.code_at_ascending(0)
    } else if j == n {
        table.code_at_ascending(n - 1)
    } else {
        let (lo, hi) = (j - 1, j);
        // compare against the midpoint so exact ties survive rounding
        let mid = 0.5 * (table.ascending(lo) + table.ascending(hi));
        let (c_lo, c_hi) = (table.code_at_ascending(lo), table.code_at_ascending(hi));
        if v < mid {
            c_lo
        } else if v > mid {
            c_hi
        } else {
            c_lo.min(c_hi)
        }
    };
    table.canonical_code(code) as u8
}

/// Stochastic rounding between the bracketing levels `y_lo <= x/Δ <= y_hi`:
/// the lower code is returned when `u < (y_hi - x/Δ)/(y_hi - y_lo)`.
/// `u` is a uniform draw on `[0, 1)`.
pub fn quantize_stochastic(x: f64, delta: f64, table: &LevelTable, u: f64) -> u8 {
    debug_assert!(delta > 0.0);
    let v = x / delta;
    let n = table.len();
    if v <= table.ascending(0) {
        return table.canonical_code(table.code_at_ascending(0)) as u8;
    }
    if v >= table.ascending(n - 1) {
        return table.canonical_code(table.code_at_ascending(n - 1)) as u8;
    }
    let j = lower_bound(table, v);
    let y_hi = table.ascending(j);
    if y_hi == v {
        return table.canonical_code(table.code_at_ascending(j)) as u8;
    }
    let y_lo = table.ascending(j - 1);
    let p_lo = (y_hi - v) / (y_hi - y_lo);
    let pos = if u < p_lo { j - 1 } else { j };
    table.canonical_code(table.code_at_ascending(pos)) as u8
}

/// `Clip(round_half_even(log_base(x/Δ) + xi), 0, 2^b - 1)`, `xi` in
/// `[-0.5, 0.5]`. Zero maps to the last code.
pub fn quantize_log_dither(x: f64, delta: f64, base: f64, bits: u32, xi: f64) -> Result<u8> {
    check_bits(bits)?;
    if x < 0.0 {
        return Err(Error::SignViolation(x));
    }
    if !(delta > 0.0) {
        return Err(Error::NonPositiveScale(delta));
    }
    if !(base > 0.0 && base < 1.0) {
        return Err(Error::InvalidBase(base));
    }
    let last = ((1u32 << bits) - 1) as f64;
    if x == 0.0 {
        return Ok(last as u8);
    }
    let index = libm::log(x / delta) / libm::log(base);
    let code = round_half_even(index + xi).clamp(0.0, last);
    Ok(code as u8)
}

/// `y_code · Δ`; exact zero when `Δ = 0`.
pub fn dequantize(code: u32, delta: f64, table: &LevelTable) -> Result<f64> {
    let y = table.level(code as usize).ok_or(Error::CodeOutOfRange {
        code,
        bits: table.bits(),
    })?;
    if delta == 0.0 {
        return Ok(0.0);
    }
    Ok(y * delta)
}

/// Codes and metadata of one quantized block.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedBlock {
    pub codes: Vec<u8>,
    pub scale: f32,
    pub base: Option<f32>,
}

/// Base stored for all-zero log blocks, where no ratio is defined.
pub fn zero_block_base(bits: u32) -> f32 {
    let steps = ((1u32 << bits) - 1) as f64;
    libm::pow(LOG_RATIO_MAX, 1.0 / steps) as f32
}

/// Quantizes one block. `x_p` is the tensor-wide quantile used for log
/// schemes; when absent the block's own quantile is used.
///
/// Scales and bases are rounded to `f32` before the codes are chosen so that
/// decoding with the stored metadata reproduces the values rounding aimed at.
pub fn quantize_block<R: Rng + ?Sized>(
    values: &[f64],
    cfg: &BlockQuantization,
    x_p: Option<f64>,
    rng: &mut R,
) -> Result<QuantizedBlock> {
    if values.len() > cfg.block_size {
        return Err(Error::BlockTooLarge {
            len: values.len(),
            block_size: cfg.block_size,
        });
    }
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    if !cfg.is_signed() {
        if let Some(&x) = values.iter().find(|&&x| x < 0.0) {
            return Err(Error::SignViolation(x));
        }
    }
    let delta = if values.is_empty() { 0.0 } else { compute_scale(values)? };
    let scale = delta as f32;
    let delta = scale as f64;

    if delta == 0.0 {
        return Ok(QuantizedBlock {
            codes: alloc::vec![0; values.len()],
            scale: 0.0,
            base: cfg.scheme.is_log().then(|| zero_block_base(cfg.bits)),
        });
    }

    let base = if cfg.scheme.is_log() {
        let x_p = match x_p {
            Some(q) => q,
            None => tensor_quantile(values, cfg.p_quantile)?,
        };
        Some(compute_log_base(x_p, delta, cfg.bits)? as f32)
    } else {
        None
    };
    let base64 = base.map(f64::from);
    let table = cfg.block_table(base64)?;

    let mut codes = Vec::with_capacity(values.len());
    for &x in values {
        let code = match cfg.mode {
            RoundingMode::Nearest => quantize_nearest(x, delta, &table),
            RoundingMode::Stochastic => quantize_stochastic(x, delta, &table, rng.gen::<f64>()),
            RoundingMode::LogDither => {
                let xi = rng.gen::<f64>() - 0.5;
                quantize_log_dither(x, delta, base64.unwrap_or(0.5), cfg.bits, xi)?
            }
        };
        codes.push(code);
    }
    Ok(QuantizedBlock { codes, scale, base })
}

/// Element-wise inverse of [`quantize_block`].
pub fn dequantize_block(
    codes: &[u8],
    scale: f32,
    base: Option<f32>,
    cfg: &BlockQuantization,
) -> Result<Vec<f64>> {
    let delta = scale as f64;
    if delta == 0.0 {
        return Ok(alloc::vec![0.0; codes.len()]);
    }
    let table = cfg.block_table(base.map(f64::from))?;
    codes
        .iter()
        .map(|&c| dequantize(c as u32, delta, &table))
        .collect()
}
