//! Named low-bit Adam(W) configurations.

use core::fmt;
use core::str::FromStr;

use crate::ema::StateFormat;
use crate::error::{Error, Result};
use crate::levels::SchemeKind;
use crate::optim::OptimizerSpec;
use crate::quant::{BlockQuantization, RoundingMode, DEFAULT_BLOCK_SIZE, DEFAULT_P_QUANTILE};

/// 4/2-bit presets keep a 4-bit signed DE first moment; 2-bit presets drop it
/// to 2 bits. Both store the second moment as 2-bit log codes with dithered
/// rounding. Fine-tuning and from-scratch variants differ only in `β₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Solo42Finetune,
    Solo42Scratch,
    Solo2Finetune,
    Solo2Scratch,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Solo42Finetune,
        Preset::Solo42Scratch,
        Preset::Solo2Finetune,
        Preset::Solo2Scratch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Solo42Finetune => "solo_4_2_finetune",
            Preset::Solo42Scratch => "solo_4_2_scratch",
            Preset::Solo2Finetune => "solo_2_finetune",
            Preset::Solo2Scratch => "solo_2_scratch",
        }
    }

    pub fn signed_bits(self) -> u32 {
        match self {
            Preset::Solo42Finetune | Preset::Solo42Scratch => 4,
            Preset::Solo2Finetune | Preset::Solo2Scratch => 2,
        }
    }

    pub fn beta1(self) -> f64 {
        match self {
            Preset::Solo42Finetune => 0.8,
            Preset::Solo42Scratch => 0.3,
            Preset::Solo2Finetune => 0.5,
            Preset::Solo2Scratch => 0.1,
        }
    }

    /// `base` with this preset's states and first-moment momentum; every other
    /// field is inherited.
    pub fn apply(self, base: &OptimizerSpec) -> Result<OptimizerSpec> {
        base.validate()?;
        let signed = BlockQuantization::new(
            SchemeKind::DynamicExponentSigned,
            self.signed_bits(),
            RoundingMode::Stochastic,
        )?
        .with_block_size(DEFAULT_BLOCK_SIZE)?;
        let unsigned = BlockQuantization::new(SchemeKind::LogUnsigned, 2, RoundingMode::LogDither)?
            .with_block_size(DEFAULT_BLOCK_SIZE)?
            .with_p_quantile(DEFAULT_P_QUANTILE)?;
        Ok(OptimizerSpec {
            beta1: self.beta1(),
            signed_state: StateFormat::Quantized(signed),
            unsigned_state: StateFormat::Quantized(unsigned),
            ..base.clone()
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Family;

    #[test]
    fn parameter_tuples() {
        let mut base = OptimizerSpec::new(Family::AdamW, 1e-3);
        base.beta2 = 0.95;
        base.weight_decay = 0.01;
        for (p, bits, beta1) in [
            (Preset::Solo42Finetune, 4, 0.8),
            (Preset::Solo42Scratch, 4, 0.3),
            (Preset::Solo2Finetune, 2, 0.5),
            (Preset::Solo2Scratch, 2, 0.1),
        ] {
            let s = p.apply(&base).unwrap();
            assert_eq!(s.beta1, beta1);
            assert_eq!(s.beta2, 0.95);
            assert_eq!(s.weight_decay, 0.01);
            assert_eq!(s.family, Family::AdamW);
            let m = s.signed_state.quantization().unwrap();
            assert_eq!(m.scheme(), SchemeKind::DynamicExponentSigned);
            assert_eq!(m.bits(), bits);
            assert_eq!(m.mode(), RoundingMode::Stochastic);
            assert_eq!(m.block_size(), 128);
            let v = s.unsigned_state.quantization().unwrap();
            assert_eq!(v.scheme(), SchemeKind::LogUnsigned);
            assert_eq!(v.bits(), 2);
            assert_eq!(v.mode(), RoundingMode::LogDither);
            assert_eq!(v.block_size(), 128);
            assert_eq!(v.p_quantile(), 0.1);
        }
    }

    #[test]
    fn idempotent() {
        let base = OptimizerSpec::new(Family::Adam, 1e-3);
        for p in Preset::ALL {
            let once = p.apply(&base).unwrap();
            assert_eq!(p.apply(&once).unwrap(), once);
        }
    }

    #[test]
    fn names() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!(matches!("solo_3_bit".parse::<Preset>(), Err(Error::UnknownPreset(_))));
    }
}
