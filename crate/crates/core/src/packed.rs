//! Bit-packed code arrays and the block-quantized tensor built on them.
//!
//! Code `i` occupies bits `[i*w, (i+1)*w)` of the buffer, least significant
//! bits first within each byte, bytes in index order. Padding bits are zero.
//! Only widths 2, 4 and 8 pack evenly into bytes; 3-bit codes are stored at
//! width 4 and 5..7-bit codes at width 8.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::levels::{check_bits, SchemeKind};
use crate::quant::{dequantize_block, quantize_block, tensor_quantile, BlockQuantization};

/// Storage width used for codes of a logical bit width.
pub fn storage_bits(bits: u32) -> u32 {
    match bits {
        0..=2 => 2,
        3..=4 => 4,
        _ => 8,
    }
}

fn check_storage_bits(bits: u32) -> Result<()> {
    match bits {
        2 | 4 | 8 => Ok(()),
        b => Err(Error::UnsupportedStorageBits(b)),
    }
}

pub fn packed_len(count: usize, bits: u32) -> usize {
    (count * bits as usize).div_ceil(8)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodes {
    bits: u32,
    count: usize,
    buffer: Vec<u8>,
}

impl PackedCodes {
    /// Packs `codes` at `bits` per code.
    pub fn pack(codes: &[u8], bits: u32) -> Result<Self> {
        check_storage_bits(bits)?;
        let limit = 1u32 << bits;
        if let Some(&c) = codes.iter().find(|&&c| u32::from(c) >= limit) {
            return Err(Error::CodeOutOfRange {
                code: c.into(),
                bits,
            });
        }
        let per_byte = (8 / bits) as usize;
        let mut buffer = alloc::vec![0u8; packed_len(codes.len(), bits)];
        for (byte, chunk) in buffer.iter_mut().zip(codes.chunks(per_byte)) {
            *byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (j, &c)| acc | (c << (j as u32 * bits)));
        }
        Ok(PackedCodes {
            bits,
            count: codes.len(),
            buffer,
        })
    }

    /// Wraps an existing buffer, checking length and zero padding.
    pub fn from_raw(bits: u32, count: usize, buffer: Vec<u8>) -> Result<Self> {
        check_storage_bits(bits)?;
        let expected = packed_len(count, bits);
        if buffer.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: buffer.len(),
            });
        }
        let used = (count * bits as usize) % 8;
        if used != 0 {
            let last = buffer[buffer.len() - 1];
            if last >> used != 0 {
                return Err(Error::Inconsistent("non-zero padding bits"));
            }
        }
        Ok(PackedCodes {
            bits,
            count,
            buffer,
        })
    }

    pub fn unpack(&self) -> Vec<u8> {
        let per_byte = (8 / self.bits) as usize;
        let mask = ((1u16 << self.bits) - 1) as u8;
        let mut out = Vec::with_capacity(self.count);
        for &byte in &self.buffer {
            for j in 0..per_byte {
                if out.len() == self.count {
                    break;
                }
                out.push((byte >> (j as u32 * self.bits)) & mask);
            }
        }
        out
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        if i >= self.count {
            return None;
        }
        let bit = i * self.bits as usize;
        let mask = ((1u16 << self.bits) - 1) as u8;
        Some((self.buffer[bit / 8] >> (bit % 8)) & mask)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buffer
    }
}

/// Persistent form of one quantized state tensor: packed codes plus one
/// `f32` scale (and, for log schemes, one `f32` base) per block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockQuantizedTensor {
    scheme: SchemeKind,
    bits: u32,
    block_size: usize,
    length: usize,
    scales: Vec<f32>,
    bases: Option<Vec<f32>>,
    packed: PackedCodes,
}

impl BlockQuantizedTensor {
    /// Quantizes `values` block by block. For log schemes the `p`-quantile is
    /// taken over the whole tensor and shared by every block.
    pub fn quantize<R: Rng + ?Sized>(
        values: &[f64],
        cfg: &BlockQuantization,
        rng: &mut R,
    ) -> Result<Self> {
        let x_p = if cfg.scheme().is_log() && !values.is_empty() {
            Some(tensor_quantile(values, cfg.p_quantile())?)
        } else {
            None
        };
        let blocks = values.len().div_ceil(cfg.block_size());
        let mut codes = Vec::with_capacity(values.len());
        let mut scales = Vec::with_capacity(blocks);
        let mut bases = cfg.scheme().is_log().then(|| Vec::with_capacity(blocks));
        for (b, chunk) in values.chunks(cfg.block_size()).enumerate() {
            let q = quantize_block(chunk, cfg, x_p, rng).map_err(|e| match e {
                Error::NonFinite(i) => Error::NonFinite(b * cfg.block_size() + i),
                other => other,
            })?;
            codes.extend_from_slice(&q.codes);
            scales.push(q.scale);
            if let (Some(bases), Some(base)) = (bases.as_mut(), q.base) {
                bases.push(base);
            }
        }
        let packed = PackedCodes::pack(&codes, storage_bits(cfg.bits()))?;
        Ok(BlockQuantizedTensor {
            scheme: cfg.scheme(),
            bits: cfg.bits(),
            block_size: cfg.block_size(),
            length: values.len(),
            scales,
            bases,
            packed,
        })
    }

    /// Assembles a tensor from stored parts, enforcing every invariant.
    pub fn from_parts(
        scheme: SchemeKind,
        bits: u32,
        block_size: usize,
        length: usize,
        scales: Vec<f32>,
        bases: Option<Vec<f32>>,
        packed: PackedCodes,
    ) -> Result<Self> {
        check_bits(bits)?;
        if block_size == 0 {
            return Err(Error::InvalidParameter {
                name: "block_size",
                reason: "must be at least 1",
            });
        }
        let blocks = length.div_ceil(block_size);
        if scales.len() != blocks {
            return Err(Error::LengthMismatch {
                expected: blocks,
                actual: scales.len(),
            });
        }
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Inconsistent("scale factors must be finite and non-negative"));
        }
        match (&bases, scheme.is_log()) {
            (Some(b), true) => {
                if b.len() != blocks {
                    return Err(Error::LengthMismatch {
                        expected: blocks,
                        actual: b.len(),
                    });
                }
                if b.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
                    return Err(Error::Inconsistent("log bases must lie in (0, 1)"));
                }
            }
            (None, false) => {}
            (Some(_), false) => return Err(Error::Inconsistent("bases stored for a non-log scheme")),
            (None, true) => return Err(Error::Inconsistent("log scheme without bases")),
        }
        if packed.bits() != storage_bits(bits) {
            return Err(Error::Inconsistent("packed width does not match the bit width"));
        }
        if packed.len() != length {
            return Err(Error::LengthMismatch {
                expected: length,
                actual: packed.len(),
            });
        }
        let limit = 1u32 << bits;
        if let Some(c) = packed.unpack().into_iter().find(|&c| u32::from(c) >= limit) {
            return Err(Error::CodeOutOfRange { code: c.into(), bits });
        }
        Ok(BlockQuantizedTensor {
            scheme,
            bits,
            block_size,
            length,
            scales,
            bases,
            packed,
        })
    }

    /// Decodes with the tables cached in `cfg`, which must describe the same
    /// scheme and width.
    pub fn dequantize(&self, cfg: &BlockQuantization) -> Result<Vec<f64>> {
        if cfg.scheme() != self.scheme || cfg.bits() != self.bits {
            return Err(Error::Inconsistent("config does not match the stored scheme"));
        }
        let codes = self.packed.unpack();
        let mut out = Vec::with_capacity(self.length);
        for (b, chunk) in codes.chunks(self.block_size).enumerate() {
            let base = self.bases.as_ref().map(|v| v[b]);
            out.extend(dequantize_block(chunk, self.scales[b], base, cfg)?);
        }
        Ok(out)
    }

    /// Decodes without a caller-supplied config.
    pub fn to_values(&self) -> Result<Vec<f64>> {
        let mode = if self.scheme.is_log() {
            crate::quant::RoundingMode::LogDither
        } else {
            crate::quant::RoundingMode::Nearest
        };
        let cfg = BlockQuantization::new(self.scheme, self.bits, mode)?
            .with_block_size(self.block_size)?;
        self.dequantize(&cfg)
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn num_blocks(&self) -> usize {
        self.scales.len()
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn bases(&self) -> Option<&[f32]> {
        self.bases.as_deref()
    }

    pub fn packed(&self) -> &PackedCodes {
        &self.packed
    }

    pub fn codes(&self) -> Vec<u8> {
        self.packed.unpack()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::RoundingMode;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::vec;

    #[test]
    fn pack_examples() {
        let p = PackedCodes::pack(&[3, 0, 1, 2], 2).unwrap();
        assert_eq!(p.as_bytes(), &[0x93]);
        assert_eq!(p.unpack(), vec![3, 0, 1, 2]);

        let p = PackedCodes::pack(&[0xA, 0x5], 4).unwrap();
        assert_eq!(p.as_bytes(), &[0x5A]);
        assert_eq!(p.unpack(), vec![0xA, 0x5]);

        let p = PackedCodes::pack(&[3, 3, 3, 3, 3], 2).unwrap();
        assert_eq!(p.as_bytes(), &[0xFF, 0x03]);
        assert_eq!(p.unpack(), vec![3; 5]);
    }

    #[test]
    fn pack_rejects_bad_input() {
        assert_eq!(
            PackedCodes::pack(&[4], 2),
            Err(Error::CodeOutOfRange { code: 4, bits: 2 })
        );
        assert_eq!(PackedCodes::pack(&[1], 3), Err(Error::UnsupportedStorageBits(3)));
        assert!(PackedCodes::from_raw(2, 5, vec![0]).is_err());
        assert!(PackedCodes::from_raw(2, 5, vec![0, 0x04]).is_err());
        assert!(PackedCodes::from_raw(2, 5, vec![0, 0x03]).is_ok());
    }

    #[test]
    fn storage_widths() {
        assert_eq!(storage_bits(2), 2);
        assert_eq!(storage_bits(3), 4);
        assert_eq!(storage_bits(4), 4);
        assert_eq!(storage_bits(5), 8);
        assert_eq!(storage_bits(8), 8);
    }

    #[test]
    fn tensor_block_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = BlockQuantization::new(SchemeKind::LogUnsigned, 2, RoundingMode::LogDither)
            .unwrap();
        let values: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let t = BlockQuantizedTensor::quantize(&values, &cfg, &mut rng).unwrap();
        assert_eq!(t.num_blocks(), 3);
        assert_eq!(t.bases().unwrap().len(), 3);
        assert_eq!(t.packed().as_bytes().len(), 75);
        assert_eq!(t.to_values().unwrap(), t.dequantize(&cfg).unwrap());
    }

    #[test]
    fn three_bit_codes_stored_at_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = BlockQuantization::new(SchemeKind::LinearUnsigned, 3, RoundingMode::Nearest)
            .unwrap();
        let values: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let t = BlockQuantizedTensor::quantize(&values, &cfg, &mut rng).unwrap();
        assert_eq!(t.packed().bits(), 4);
        assert_eq!(t.codes().into_iter().max(), Some(7));
    }

    #[test]
    fn from_parts_validation() {
        let packed = PackedCodes::pack(&[0, 1, 2, 3], 2).unwrap();
        let ok = BlockQuantizedTensor::from_parts(
            SchemeKind::LinearUnsigned,
            2,
            2,
            4,
            vec![1.0, 0.5],
            None,
            packed.clone(),
        );
        assert!(ok.is_ok());
        let bad_scales = BlockQuantizedTensor::from_parts(
            SchemeKind::LinearUnsigned,
            2,
            2,
            4,
            vec![1.0],
            None,
            packed.clone(),
        );
        assert!(bad_scales.is_err());
        let negative = BlockQuantizedTensor::from_parts(
            SchemeKind::LinearUnsigned,
            2,
            2,
            4,
            vec![1.0, -0.5],
            None,
            packed.clone(),
        );
        assert!(negative.is_err());
        let missing_bases = BlockQuantizedTensor::from_parts(
            SchemeKind::LogUnsigned,
            2,
            2,
            4,
            vec![1.0, 0.5],
            None,
            packed.clone(),
        );
        assert!(missing_bases.is_err());
        let bad_base = BlockQuantizedTensor::from_parts(
            SchemeKind::LogUnsigned,
            2,
            2,
            4,
            vec![1.0, 0.5],
            Some(vec![0.5, 1.0]),
            packed,
        );
        assert!(bad_base.is_err());
        let wide = PackedCodes::pack(&[8], 4).unwrap();
        let code_range =
            BlockQuantizedTensor::from_parts(SchemeKind::LinearUnsigned, 3, 4, 1, vec![1.0], None, wide);
        assert!(code_range.is_err());
    }

    proptest! {
        #[test]
        fn pack_round_trip(bits in prop::sample::select(vec![2u32, 4, 8]), len in 0usize..1000, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let codes: Vec<u8> = (0..len).map(|_| (rng.next_u32() % (1 << bits)) as u8).collect();
            let p = PackedCodes::pack(&codes, bits).unwrap();
            prop_assert_eq!(p.as_bytes().len(), packed_len(len, bits));
            prop_assert_eq!(p.unpack(), codes.clone());
            for (i, c) in codes.iter().enumerate() {
                prop_assert_eq!(p.get(i), Some(*c));
            }
            let again = PackedCodes::from_raw(bits, len, p.as_bytes().to_vec()).unwrap();
            prop_assert_eq!(again, p);
        }
    }

}
