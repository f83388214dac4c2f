//! Quantization level tables and their radii.
//!
//! A table holds the `2^b` normalized values a code can decode to. Linear and
//! dynamic-exponent (DE) tables are stored in ascending order; logarithmic
//! tables `y_k = alpha^k` are stored in descending order so that code 0 is
//! always the largest magnitude.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 8;

/// Level construction family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// `{0, 1/(2^b-1), ..., 1}`.
    LinearUnsigned,
    /// `{1/2^b, 2/2^b, ..., 1}`, the zero-free variant used for second moments.
    LinearUnsignedNoZero,
    /// `{0, ±1/(2^(b-1)-1), ..., ±1}`.
    LinearSigned,
    DynamicExponentUnsigned,
    DynamicExponentSigned,
    /// `y_k = alpha^k`; the base is carried by the table (or per block).
    LogUnsigned,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::LinearUnsigned,
        SchemeKind::LinearUnsignedNoZero,
        SchemeKind::LinearSigned,
        SchemeKind::DynamicExponentUnsigned,
        SchemeKind::DynamicExponentSigned,
        SchemeKind::LogUnsigned,
    ];

    pub fn is_signed(self) -> bool {
        matches!(self, SchemeKind::LinearSigned | SchemeKind::DynamicExponentSigned)
    }

    pub fn is_log(self) -> bool {
        matches!(self, SchemeKind::LogUnsigned)
    }

    /// Stable one-byte tag used by the checkpoint container.
    pub fn tag(self) -> u8 {
        match self {
            SchemeKind::LinearUnsigned => 0,
            SchemeKind::LinearUnsignedNoZero => 1,
            SchemeKind::LinearSigned => 2,
            SchemeKind::DynamicExponentUnsigned => 3,
            SchemeKind::DynamicExponentSigned => 4,
            SchemeKind::LogUnsigned => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.iter().copied().find(|s| s.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::LinearUnsigned => "linear-unsigned",
            SchemeKind::LinearUnsignedNoZero => "linear-unsigned-nozero",
            SchemeKind::LinearSigned => "linear-signed",
            SchemeKind::DynamicExponentUnsigned => "de-unsigned",
            SchemeKind::DynamicExponentSigned => "de-signed",
            SchemeKind::LogUnsigned => "log-unsigned",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered set of `2^b` quantization levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTable {
    scheme: SchemeKind,
    bits: u32,
    levels: Vec<f64>,
    descending: bool,
    base: Option<f64>,
    has_duplicates: bool,
}

pub(crate) fn check_bits(bits: u32) -> Result<()> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(Error::UnsupportedBits(bits))
    }
}

impl LevelTable {
    /// Builds the table for any parameter-free scheme. Log tables need a base,
    /// see [`LevelTable::log`].
    pub fn new(scheme: SchemeKind, bits: u32) -> Result<Self> {
        match scheme {
            SchemeKind::LinearUnsigned => build_linear_levels(bits, false, false),
            SchemeKind::LinearUnsignedNoZero => build_linear_levels(bits, false, true),
            SchemeKind::LinearSigned => build_linear_levels(bits, true, false),
            SchemeKind::DynamicExponentUnsigned => build_de_levels(bits, false),
            SchemeKind::DynamicExponentSigned => build_de_levels(bits, true),
            SchemeKind::LogUnsigned => Err(Error::InvalidScheme(
                "logarithmic tables require a base",
            )),
        }
    }

    pub fn log(bits: u32, base: f64) -> Result<Self> {
        build_log_levels(bits, base)
    }

    fn from_levels(scheme: SchemeKind, bits: u32, levels: Vec<f64>, descending: bool) -> Self {
        debug_assert_eq!(levels.len(), 1usize << bits);
        let has_duplicates = levels.windows(2).any(|w| w[0] == w[1]);
        LevelTable {
            scheme,
            bits,
            levels,
            descending,
            base: None,
            has_duplicates,
        }
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn is_descending(&self) -> bool {
        self.descending
    }

    pub fn base(&self) -> Option<f64> {
        self.base
    }

    pub fn is_signed(&self) -> bool {
        self.scheme.is_signed()
    }

    pub fn has_duplicates(&self) -> bool {
        self.has_duplicates
    }

    /// Level of `code`, `None` when the code is out of range.
    pub fn level(&self, code: usize) -> Option<f64> {
        self.levels.get(code).copied()
    }

    pub fn min_level(&self) -> f64 {
        if self.descending {
            self.levels[self.levels.len() - 1]
        } else {
            self.levels[0]
        }
    }

    pub fn max_level(&self) -> f64 {
        if self.descending {
            self.levels[0]
        } else {
            self.levels[self.levels.len() - 1]
        }
    }

    /// Value at position `j` when the table is read in ascending order.
    #[inline]
    pub(crate) fn ascending(&self, j: usize) -> f64 {
        if self.descending {
            self.levels[self.levels.len() - 1 - j]
        } else {
            self.levels[j]
        }
    }

    /// Code stored at ascending position `j`.
    #[inline]
    pub(crate) fn code_at_ascending(&self, j: usize) -> usize {
        if self.descending {
            self.levels.len() - 1 - j
        } else {
            j
        }
    }

    /// Smallest code decoding to the same value as `code`.
    #[inline]
    pub fn canonical_code(&self, code: usize) -> usize {
        if !self.has_duplicates {
            return code;
        }
        let v = self.levels[code];
        self.levels.iter().position(|&y| y == v).unwrap_or(code)
    }

    /// Distinct levels in ascending order.
    pub fn distinct_ascending(&self) -> Vec<f64> {
        let mut out: Vec<f64> = (0..self.levels.len()).map(|j| self.ascending(j)).collect();
        out.dedup();
        out
    }
}

/// `(r_min, r_median, r_max)` of a table plus the per-code radius.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusStats {
    pub r_min: f64,
    pub r_median: f64,
    pub r_max: f64,
    /// Half the smaller neighbour gap of each code's level, in code order.
    pub per_level: Vec<f64>,
}

impl RadiusStats {
    pub fn per_level_radius(&self, code: usize) -> Option<f64> {
        self.per_level.get(code).copied()
    }
}

/// Linear levels. `signed` and `exclude_zero` are mutually exclusive.
///
/// The signed table has one surplus code since `{0, ±k/(2^(b-1)-1)}` only
/// yields `2^b - 1` distinct values; that code duplicates zero.
pub fn build_linear_levels(bits: u32, signed: bool, exclude_zero: bool) -> Result<LevelTable> {
    check_bits(bits)?;
    if signed && exclude_zero {
        return Err(Error::InvalidScheme("the zero-free linear variant is unsigned"));
    }
    let n = 1usize << bits;
    let (scheme, levels) = if signed {
        let half = (1i64 << (bits - 1)) - 1;
        let denom = half as f64;
        let mut v: Vec<f64> = (-half..=half).map(|k| k as f64 / denom).collect();
        // duplicate zero keeps the code space at 2^b
        let zero = v.iter().position(|&y| y == 0.0).unwrap_or(0);
        v.insert(zero, 0.0);
        (SchemeKind::LinearSigned, v)
    } else if exclude_zero {
        let denom = n as f64;
        let v = (1..=n).map(|k| k as f64 / denom).collect();
        (SchemeKind::LinearUnsignedNoZero, v)
    } else {
        let denom = (n - 1) as f64;
        let v = (0..n).map(|k| k as f64 / denom).collect();
        (SchemeKind::LinearUnsigned, v)
    };
    Ok(LevelTable::from_levels(scheme, bits, levels, false))
}

const DECADES: [f64; 8] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];

/// Magnitude encoded by `width` bits under the leading-zero exponent layout.
///
/// `E` leading zeros select the decade `10^-E`; the first one bit is the
/// indicator; the remaining `F = width - E - 1` bits pick the midpoint of one
/// of `2^F` equal bins over `[0.1, 1]`. The all-zero pattern has no indicator
/// and is returned as `None`.
fn de_magnitude(pattern: u32, width: u32) -> Option<f64> {
    if pattern == 0 {
        return None;
    }
    let exponent = pattern.leading_zeros() - (32 - width);
    let fraction_bits = width - exponent - 1;
    let fraction = pattern & ((1u32 << fraction_bits) - 1);
    let bins = (1u32 << fraction_bits) as f64;
    let mid = 0.1 + 0.9 * (fraction as f64 + 0.5) / bins;
    Some(DECADES[exponent as usize] * mid)
}

/// Dynamic-exponent levels.
///
/// Unsigned codes use all `b` bits for exponent/indicator/fraction, but the
/// exponent stops at `b - 2`: the all-zero code decodes to 0 and the code with
/// no fraction bits (`E = b - 1`) decodes to 1. Signed codes put the sign in
/// the top bit and lay out the remaining `b - 1` bits the same way, without
/// the exponent cap; the all-zero magnitude is 0 with a clear sign bit and 1
/// with the sign bit set. Levels are sorted ascending afterwards.
pub fn build_de_levels(bits: u32, signed: bool) -> Result<LevelTable> {
    check_bits(bits)?;
    let n = 1u32 << bits;
    let mut levels: Vec<f64> = if signed {
        let width = bits - 1;
        let mask = (1u32 << width) - 1;
        (0..n)
            .map(|code| {
                let negative = code >> width == 1;
                match (de_magnitude(code & mask, width), negative) {
                    (None, false) => 0.0,
                    (None, true) => 1.0,
                    (Some(m), false) => m,
                    (Some(m), true) => -m,
                }
            })
            .collect()
    } else {
        (0..n)
            .map(|code| match code {
                0 => 0.0,
                1 => 1.0,
                c => de_magnitude(c, bits).unwrap_or(0.0),
            })
            .collect()
    };
    levels.sort_by(|a, b| a.total_cmp(b));
    let scheme = if signed {
        SchemeKind::DynamicExponentSigned
    } else {
        SchemeKind::DynamicExponentUnsigned
    };
    Ok(LevelTable::from_levels(scheme, bits, levels, false))
}

/// Logarithmic levels `(alpha^0, alpha^1, ..., alpha^(2^b-1))`, descending.
pub fn build_log_levels(bits: u32, base: f64) -> Result<LevelTable> {
    check_bits(bits)?;
    if !(base > 0.0 && base < 1.0) {
        return Err(Error::InvalidBase(base));
    }
    let n = 1usize << bits;
    let mut levels = Vec::with_capacity(n);
    let mut y = 1.0;
    for _ in 0..n {
        levels.push(y);
        y *= base;
    }
    let mut table = LevelTable::from_levels(SchemeKind::LogUnsigned, bits, levels, true);
    table.base = Some(base);
    Ok(table)
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Radius statistics of a table.
///
/// `per_level` is the swamping radius of each code's level. The summary
/// statistics are taken over the half-gaps `|y_k - y_(k-1)| / 2` between
/// consecutive distinct levels, which is how the maximum radius enters the
/// variance bound and how the reference radii tables are tabulated. `r_min`
/// coincides under both readings.
pub fn radius_stats(table: &LevelTable) -> RadiusStats {
    let distinct = table.distinct_ascending();
    let mut half_gaps: Vec<f64> = distinct.windows(2).map(|w| 0.5 * (w[1] - w[0])).collect();

    let radius_of = |v: f64| -> f64 {
        let j = distinct.iter().position(|&y| y == v).unwrap_or(0);
        let left = if j > 0 { Some(distinct[j] - distinct[j - 1]) } else { None };
        let right = distinct.get(j + 1).map(|&y| y - distinct[j]);
        match (left, right) {
            (Some(a), Some(b)) => 0.5 * a.min(b),
            (Some(a), None) | (None, Some(a)) => 0.5 * a,
            (None, None) => 0.0,
        }
    };
    let per_level = table.levels().iter().map(|&v| radius_of(v)).collect();

    half_gaps.sort_by(|a, b| a.total_cmp(b));
    RadiusStats {
        r_min: half_gaps.first().copied().unwrap_or(0.0),
        r_median: median_sorted(&half_gaps),
        r_max: half_gaps.last().copied().unwrap_or(0.0),
        per_level,
    }
}

/// Swamping radius of the level decoded by `code`: half the smaller gap to
/// its distinct neighbours.
pub fn level_radius(table: &LevelTable, code: usize) -> Option<f64> {
    let v = table.level(code)?;
    let n = table.len();
    let mut below = None;
    let mut above = None;
    for j in 0..n {
        let y = table.ascending(j);
        if y < v {
            below = Some(y);
        } else if y > v && above.is_none() {
            above = Some(y);
        }
    }
    Some(match (below, above) {
        (Some(a), Some(b)) => 0.5 * (v - a).min(b - v),
        (Some(a), None) => 0.5 * (v - a),
        (None, Some(b)) => 0.5 * (b - v),
        (None, None) => 0.0,
    })
}

/// Reference median radii of signed DE tables, bits 2..=8.
pub const SIGNED_DE_MEDIAN_RADII: [(u32, f64); 7] = [
    (2, 0.275),
    (3, 0.135),
    (4, 0.067),
    (5, 0.034),
    (6, 0.017),
    (7, 0.008),
    (8, 0.004),
];

pub fn signed_de_median_radius(bits: u32) -> Option<f64> {
    SIGNED_DE_MEDIAN_RADII
        .iter()
        .find(|(b, _)| *b == bits)
        .map(|&(_, r)| r)
}

/// Resolved DE tables at 2-4 bits, ascending.
pub mod golden {
    pub const DE_UNSIGNED_2: [f64; 4] = [0.0, 0.325, 0.775, 1.0];
    pub const DE_UNSIGNED_3: [f64; 8] = [
        0.0, 0.0325, 0.0775, 0.2125, 0.4375, 0.6625, 0.8875, 1.0,
    ];
    pub const DE_UNSIGNED_4: [f64; 16] = [
        0.0, 0.00325, 0.00775, 0.02125, 0.04375, 0.06625, 0.08875, 0.15625, 0.26875, 0.38125,
        0.49375, 0.60625, 0.71875, 0.83125, 0.94375, 1.0,
    ];
    pub const DE_SIGNED_2: [f64; 4] = [-0.55, 0.0, 0.55, 1.0];
    pub const DE_SIGNED_3: [f64; 8] = [-0.775, -0.325, -0.055, 0.0, 0.055, 0.325, 0.775, 1.0];
    pub const DE_SIGNED_4: [f64; 16] = [
        -0.8875, -0.6625, -0.4375, -0.2125, -0.0775, -0.0325, -0.0055, 0.0, 0.0055, 0.0325,
        0.0775, 0.2125, 0.4375, 0.6625, 0.8875, 1.0,
    ];
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn linear_unsigned_two_bit() {
        let t = build_linear_levels(2, false, false).unwrap();
        assert_eq!(t.levels(), &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn linear_signed_two_bit_duplicates_zero() {
        let t = build_linear_levels(2, true, false).unwrap();
        assert_eq!(t.levels(), &[-1.0, 0.0, 0.0, 1.0]);
        assert!(t.has_duplicates());
        let s = radius_stats(&t);
        assert_eq!((s.r_min, s.r_median, s.r_max), (0.5, 0.5, 0.5));
        assert_eq!(s.per_level, vec![0.5; 4]);
    }

    #[test]
    fn linear_no_zero_four_bit() {
        let t = build_linear_levels(4, false, true).unwrap();
        let expect: Vec<f64> = (1..=16).map(|k| k as f64 / 16.0).collect();
        assert_eq!(t.levels(), expect.as_slice());
    }

    #[test]
    fn linear_rejects_bad_args() {
        assert_eq!(build_linear_levels(1, false, false), Err(Error::UnsupportedBits(1)));
        assert_eq!(build_linear_levels(9, true, false), Err(Error::UnsupportedBits(9)));
        assert!(build_linear_levels(4, true, true).is_err());
    }

    #[test]
    fn linear_radii_are_uniform() {
        for bits in MIN_BITS..=MAX_BITS {
            for signed in [false, true] {
                let s = radius_stats(&build_linear_levels(bits, signed, false).unwrap());
                let r = s.per_level[0];
                assert!(s.per_level.iter().all(|&x| close(x, r, 1e-12)));
                assert!(close(s.r_min, s.r_max, 1e-12));
            }
        }
        let s = radius_stats(&build_linear_levels(4, false, false).unwrap());
        assert!(close(s.r_median, 1.0 / 30.0, 1e-15));
    }

    #[test]
    fn de_matches_golden_constants() {
        let cases: [(u32, bool, &[f64]); 6] = [
            (2, false, &golden::DE_UNSIGNED_2),
            (3, false, &golden::DE_UNSIGNED_3),
            (4, false, &golden::DE_UNSIGNED_4),
            (2, true, &golden::DE_SIGNED_2),
            (3, true, &golden::DE_SIGNED_3),
            (4, true, &golden::DE_SIGNED_4),
        ];
        for (bits, signed, expect) in cases {
            let t = build_de_levels(bits, signed).unwrap();
            assert_eq!(t.len(), expect.len());
            for (a, b) in t.levels().iter().zip(expect) {
                assert!(close(*a, *b, 1e-12), "{bits} {signed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn de_tables_are_full_and_bounded() {
        for bits in MIN_BITS..=MAX_BITS {
            for signed in [false, true] {
                let t = build_de_levels(bits, signed).unwrap();
                assert_eq!(t.len(), 1 << bits);
                assert!(!t.has_duplicates());
                assert_eq!(t.max_level(), 1.0);
                assert!(t.levels().windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn de_reference_medians() {
        let s = radius_stats(&build_de_levels(4, false).unwrap());
        assert!(close(s.r_median, 0.034, 0.001));
        let s = radius_stats(&build_de_levels(5, true).unwrap());
        assert!(close(s.r_median, 0.034, 0.001));
        let s = radius_stats(&build_de_levels(2, true).unwrap());
        assert!(close(s.r_median, 0.275, 1e-12));
    }

    #[test]
    fn log_levels() {
        let t = build_log_levels(2, 0.5).unwrap();
        assert_eq!(t.levels(), &[1.0, 0.5, 0.25, 0.125]);
        assert!(t.is_descending());
        assert_eq!(build_log_levels(3, 0.5).unwrap().levels()[7], 1.0 / 128.0);
        assert!(build_log_levels(2, 1.0).is_err());
        assert!(build_log_levels(2, 0.0).is_err());
        assert!(build_log_levels(2, f64::NAN).is_err());
        let near_one = build_log_levels(2, 1.0 - 1e-12).unwrap();
        assert!(near_one.levels().iter().all(|&y| close(y, 1.0, 1e-10)));
    }

    #[test]
    fn log_per_level_radii() {
        let s = radius_stats(&build_log_levels(2, 0.5).unwrap());
        assert_eq!(s.per_level, vec![0.25, 0.125, 0.0625, 0.0625]);
    }

    #[test]
    fn level_radius_matches_stats() {
        for t in [
            build_de_levels(4, true).unwrap(),
            build_linear_levels(2, true, false).unwrap(),
            build_log_levels(3, 0.4).unwrap(),
        ] {
            let s = radius_stats(&t);
            for code in 0..t.len() {
                assert_eq!(level_radius(&t, code), Some(s.per_level[code]));
            }
            assert_eq!(level_radius(&t, t.len()), None);
        }
    }

    #[test]
    fn log_table_needs_base() {
        assert!(LevelTable::new(SchemeKind::LogUnsigned, 2).is_err());
    }

    #[test]
    fn scheme_tags_round_trip() {
        for s in SchemeKind::ALL {
            assert_eq!(SchemeKind::from_tag(s.tag()), Some(s));
        }
        assert_eq!(SchemeKind::from_tag(99), None);
    }
}
