//! Self-describing container for a [`BlockQuantizedTensor`].
//!
//! All integers are little-endian. The 24-byte header is
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! | 0      | 4    | magic `b"LBQS"`                         |
//! | 4      | 2    | format version, currently 1             |
//! | 6      | 1    | scheme tag                              |
//! | 7      | 1    | logical bits per code                   |
//! | 8      | 1    | storage bits per code (2, 4 or 8)       |
//! | 9      | 1    | flags, bit 0 set when bases are present |
//! | 10     | 2    | reserved, zero                          |
//! | 12     | 4    | block size                              |
//! | 16     | 8    | element count                           |
//!
//! followed by one `f32` scale per block, one `f32` base per block when
//! flagged, and the packed code buffer (`ceil(count·storage_bits/8)` bytes).

use std::fs;
use std::io::Write;
use std::path::Path;

use lowbit_core::packed::{packed_len, storage_bits};
use lowbit_core::{BlockQuantizedTensor, PackedCodes, SchemeKind};

pub const MAGIC: [u8; 4] = *b"LBQS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;

const FLAG_BASES: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a state checkpoint (bad magic {0:02x?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    Version(u16),
    #[error("truncated checkpoint: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("corrupt header: {0}")]
    Header(&'static str),
    #[error("invalid state: {0}")]
    Invalid(#[from] lowbit_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Size of the serialized container in bytes.
pub fn footprint_bytes(t: &BlockQuantizedTensor) -> usize {
    let bases = t.bases().map_or(0, <[f32]>::len);
    HEADER_LEN + 4 * t.scales().len() + 4 * bases + t.packed().as_bytes().len()
}

pub fn serialize(t: &BlockQuantizedTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(footprint_bytes(t));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(t.scheme().tag());
    out.push(t.bits() as u8);
    out.push(t.packed().bits() as u8);
    out.push(if t.bases().is_some() { FLAG_BASES } else { 0 });
    out.extend_from_slice(&[0, 0]);
    out.extend_from_slice(&(t.block_size() as u32).to_le_bytes());
    out.extend_from_slice(&(t.len() as u64).to_le_bytes());
    for s in t.scales() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    for b in t.bases().unwrap_or(&[]) {
        out.extend_from_slice(&b.to_le_bytes());
    }
    out.extend_from_slice(t.packed().as_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(CheckpointError::Truncated {
                needed: self.pos.saturating_add(n),
                available: self.buf.len(),
            });
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("slice length"))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let bytes = self.take(n.checked_mul(4).ok_or(CheckpointError::Header("block count overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk length")))
            .collect())
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<BlockQuantizedTensor, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.array::<4>()?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = u16::from_le_bytes(r.array()?);
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let [tag, bits, stored, flags] = r.array::<4>()?;
    let reserved = r.array::<2>()?;
    let block_size = u32::from_le_bytes(r.array()?) as usize;
    let length = u64::from_le_bytes(r.array()?);

    let scheme = SchemeKind::from_tag(tag).ok_or(CheckpointError::Header("unknown scheme tag"))?;
    if flags & !FLAG_BASES != 0 || reserved != [0, 0] {
        return Err(CheckpointError::Header("reserved bits set"));
    }
    let bits = bits as u32;
    if !(2..=8).contains(&bits) || storage_bits(bits) != stored as u32 {
        return Err(CheckpointError::Header("inconsistent bit widths"));
    }
    if block_size == 0 {
        return Err(CheckpointError::Header("zero block size"));
    }
    let length = usize::try_from(length).map_err(|_| CheckpointError::Header("length overflow"))?;
    let blocks = length.div_ceil(block_size);

    let scales = r.f32s(blocks)?;
    let bases = if flags & FLAG_BASES != 0 {
        Some(r.f32s(blocks)?)
    } else {
        None
    };
    let buffer = r.take(packed_len(length, stored as u32))?.to_vec();
    let extra = bytes.len() - r.pos;
    if extra != 0 {
        return Err(CheckpointError::TrailingBytes(extra));
    }
    let packed = PackedCodes::from_raw(stored as u32, length, buffer)?;
    Ok(BlockQuantizedTensor::from_parts(
        scheme, bits, block_size, length, scales, bases, packed,
    )?)
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

pub fn save(path: &Path, t: &BlockQuantizedTensor) -> Result<(), CheckpointError> {
    Ok(write_atomic(path, &serialize(t))?)
}

pub fn load(path: &Path) -> Result<BlockQuantizedTensor, CheckpointError> {
    deserialize(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lowbit_core::{BlockQuantization, RoundingMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(scheme: SchemeKind, bits: u32, mode: RoundingMode, n: usize) -> BlockQuantizedTensor {
        let cfg = BlockQuantization::new(scheme, bits, mode).unwrap();
        let values: Vec<f64> = (0..n).map(|i| ((i * 37 % 101) as f64 / 101.0).powi(2)).collect();
        BlockQuantizedTensor::quantize(&values, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn footprint_examples() {
        let log = sample(SchemeKind::LogUnsigned, 2, RoundingMode::LogDither, 1024);
        assert_eq!(footprint_bytes(&log), 256 + 32 + 32 + HEADER_LEN);
        let de = sample(SchemeKind::DynamicExponentSigned, 4, RoundingMode::Stochastic, 1024);
        assert_eq!(footprint_bytes(&de), 512 + 32 + HEADER_LEN);
        let empty = sample(SchemeKind::DynamicExponentSigned, 4, RoundingMode::Nearest, 0);
        assert_eq!(footprint_bytes(&empty), HEADER_LEN);
    }

    #[test]
    fn round_trip() {
        for t in [
            sample(SchemeKind::LogUnsigned, 2, RoundingMode::LogDither, 1000),
            sample(SchemeKind::LinearUnsigned, 3, RoundingMode::Nearest, 77),
            sample(SchemeKind::DynamicExponentUnsigned, 8, RoundingMode::Stochastic, 300),
            sample(SchemeKind::LinearSigned, 2, RoundingMode::Nearest, 0),
        ] {
            let bytes = serialize(&t);
            assert_eq!(bytes.len(), footprint_bytes(&t));
            let back = deserialize(&bytes).unwrap();
            assert_eq!(back, t);
            assert_eq!(serialize(&back), bytes);
        }
    }

    #[test]
    fn rejects_corruption() {
        let t = sample(SchemeKind::LogUnsigned, 2, RoundingMode::LogDither, 300);
        let bytes = serialize(&t);
        for cut in [0, 3, 10, HEADER_LEN, bytes.len() - 1] {
            assert!(matches!(
                deserialize(&bytes[..cut]),
                Err(CheckpointError::Truncated { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(deserialize(&bad), Err(CheckpointError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(deserialize(&bad), Err(CheckpointError::Version(2))));
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(matches!(deserialize(&bad), Err(CheckpointError::TrailingBytes(1))));
        let mut bad = bytes.clone();
        bad[8] = 8;
        assert!(matches!(deserialize(&bad), Err(CheckpointError::Header(_))));
        // negative scale
        let mut bad = bytes.clone();
        bad[HEADER_LEN + 3] |= 0x80;
        assert!(matches!(deserialize(&bad), Err(CheckpointError::Invalid(_))));
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/state.lbqs");
        let t = sample(SchemeKind::DynamicExponentSigned, 4, RoundingMode::Stochastic, 129);
        save(&path, &t).unwrap();
        assert_eq!(load(&path).unwrap(), t);
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
