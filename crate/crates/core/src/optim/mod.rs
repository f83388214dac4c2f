//! Adam, AdamW and AdaBelief with pluggable state quantization.

mod momentum;
mod preset;

pub use momentum::{
    adaptive_lr_variance, beta_prime, beta_prime_for_bits, beta_prime_for_tables,
    gradient_variance_bound,
};
pub use preset::Preset;

use alloc::vec::Vec;

use rand::Rng;

use crate::ema::{EmaState, StateFormat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Adam,
    /// Adam with decoupled weight decay.
    AdamW,
    AdaBelief,
}

/// Full optimizer configuration.
///
/// The first moment uses `signed_state`, the second `unsigned_state`.
/// Weight decay is an L2 term on the gradient for Adam and AdaBelief, and
/// decoupled for AdamW. `epsilon` is added after the square root of the
/// bias-corrected second moment.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub family: Family,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub signed_state: StateFormat,
    pub unsigned_state: StateFormat,
    pub bias_correction: bool,
}

impl OptimizerSpec {
    /// Full-precision spec with the usual Adam defaults.
    pub fn new(family: Family, lr: f64) -> Self {
        OptimizerSpec {
            family,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            signed_state: StateFormat::FullPrecision,
            unsigned_state: StateFormat::FullPrecision,
            bias_correction: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", "must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon", "must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay", "must be non-negative");
        }
        if let Some(q) = self.signed_state.quantization() {
            if !q.is_signed() {
                return Err(Error::InvalidScheme("first moment needs a signed scheme"));
            }
        }
        if let Some(q) = self.unsigned_state.quantization() {
            if q.is_signed() {
                return Err(Error::InvalidScheme("second moment needs an unsigned scheme"));
            }
        }
        Ok(())
    }
}

/// Weights of one parameter tensor with its two moment states.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSlot {
    pub weights: Vec<f64>,
    m: EmaState,
    v: EmaState,
    step: u64,
}

impl ParamSlot {
    pub fn new(weights: Vec<f64>, spec: &OptimizerSpec) -> Result<Self> {
        spec.validate()?;
        let n = weights.len();
        Ok(ParamSlot {
            m: EmaState::zeros_with(n, &spec.signed_state)?,
            v: EmaState::zeros_with(n, &spec.unsigned_state)?,
            weights,
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &EmaState {
        &self.m
    }

    pub fn second_moment(&self) -> &EmaState {
        &self.v
    }

    pub fn read_first_moment(&self, spec: &OptimizerSpec) -> Result<Vec<f64>> {
        self.m.read_with(&spec.signed_state)
    }

    pub fn read_second_moment(&self, spec: &OptimizerSpec) -> Result<Vec<f64>> {
        self.v.read_with(&spec.unsigned_state)
    }
}

/// One optimizer update of `slot` with gradient `grad`.
///
/// The second-moment signal is `g²` for Adam/AdamW and `(g - m)² + ε/(1-β₂)`
/// for AdaBelief, where `m` is the freshly updated (dequantized) first moment;
/// the extra term reproduces AdaBelief's `+ε` inside the second-moment EMA.
/// Bias correction uses the configured `β₁`, whatever value it was reduced to.
pub fn adam_step<R: Rng + ?Sized>(
    slot: &mut ParamSlot,
    grad: &[f64],
    spec: &OptimizerSpec,
    rng: &mut R,
) -> Result<()> {
    if grad.len() != slot.weights.len() {
        return Err(Error::LengthMismatch {
            expected: slot.weights.len(),
            actual: grad.len(),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(i));
    }

    let coupled_decay = spec.family != Family::AdamW && spec.weight_decay > 0.0;
    let g: Vec<f64> = if coupled_decay {
        grad.iter()
            .zip(&slot.weights)
            .map(|(g, w)| g + spec.weight_decay * w)
            .collect()
    } else {
        grad.to_vec()
    };

    slot.m.step_with(&g, spec.beta1, &spec.signed_state, rng)?;
    let m = slot.m.read_with(&spec.signed_state)?;

    let second: Vec<f64> = match spec.family {
        Family::Adam | Family::AdamW => g.iter().map(|g| g * g).collect(),
        Family::AdaBelief => {
            let floor = spec.epsilon / (1.0 - spec.beta2);
            g.iter()
                .zip(&m)
                .map(|(g, m)| (g - m) * (g - m) + floor)
                .collect()
        }
    };
    slot.v.step_with(&second, spec.beta2, &spec.unsigned_state, rng)?;
    let v = slot.v.read_with(&spec.unsigned_state)?;

    slot.step += 1;
    let t = slot.step as i32;
    let (c1, c2) = if spec.bias_correction {
        (1.0 - libm::pow(spec.beta1, t as f64), 1.0 - libm::pow(spec.beta2, t as f64))
    } else {
        (1.0, 1.0)
    };

    let decay = if spec.family == Family::AdamW {
        spec.lr * spec.weight_decay
    } else {
        0.0
    };
    for ((w, m), v) in slot.weights.iter_mut().zip(&m).zip(&v) {
        let m_hat = m / c1;
        let v_hat = (v / c2).max(0.0);
        *w -= decay * *w;
        *w -= spec.lr * m_hat / (libm::sqrt(v_hat) + spec.epsilon);
    }
    Ok(())
}
