//! Payload bit addressing.
//!
//! Bits are numbered sequentially from 1 to `8 * L`, most significant bit
//! first: bit 1 is the MSB of byte 1, bit 8 its LSB, bit 9 the MSB of byte 2
//! and so on. A contiguous run of bits in this numbering reads as one
//! big-endian unsigned integer.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest payload handled by the toolkit, in bits.
pub const MAX_BITS: u32 = 64;

/// Inclusive range of 1-based, MSB-first payload bit positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BitRange {
    pub start: u32,
    pub end: u32,
}

impl BitRange {
    /// Builds a range, checking `1 <= start <= end <= width_bits`.
    pub fn new(start: u32, end: u32, width_bits: u32) -> Result<Self> {
        if start == 0 || start > end || end > width_bits || width_bits > MAX_BITS {
            return Err(Error::InvalidRange {
                start,
                end,
                width: width_bits,
            });
        }
        Ok(BitRange { start, end })
    }

    pub fn len(&self) -> u32 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, bit: u32) -> bool {
        self.start <= bit && bit <= self.end
    }

    /// Bit set of the range; payload bit `k` maps to mask bit `k - 1`.
    pub fn mask(&self) -> u64 {
        mask_of(self.start, self.end)
    }

    pub fn bits(&self) -> impl Iterator<Item = u32> {
        self.start..=self.end
    }
}

impl fmt::Display for BitRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// Mask with payload bits `start..=end` set (1-based).
pub fn mask_of(start: u32, end: u32) -> u64 {
    debug_assert!(start >= 1 && start <= end && end <= MAX_BITS);
    let len = end - start + 1;
    let ones = if len == 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    };
    ones << (start - 1)
}

/// Payload bit positions present in `mask`, ascending.
pub fn mask_bits(mask: u64) -> impl Iterator<Item = u32> {
    (0..64).filter(move |i| mask >> i & 1 == 1).map(|i| i + 1)
}

/// Zero-based byte index and in-byte shift (0 = LSB) of payload bit `k`.
#[inline]
pub fn locate(k: u32) -> (usize, u32) {
    let idx = k - 1;
    ((idx / 8) as usize, 7 - idx % 8)
}

/// Value of payload bit `k` in `payload`, or `None` past its end.
#[inline]
pub fn bit_at(payload: &[u8], k: u32) -> Option<u8> {
    let (byte, shift) = locate(k);
    payload.get(byte).map(|b| (b >> shift) & 1)
}

/// Unsigned big-endian value of bits `range` in `payload`.
///
/// Returns `None` when the range runs past the payload.
pub fn extract(payload: &[u8], range: BitRange) -> Option<u64> {
    let mut value = 0u64;
    for k in range.bits() {
        value = (value << 1) | u64::from(bit_at(payload, k)?);
    }
    Some(value)
}

/// Writes the low `range.len()` bits of `value` into `payload`, MSB-first.
pub fn insert(payload: &mut [u8], range: BitRange, value: u64) {
    let len = range.len();
    for (offset, k) in range.bits().enumerate() {
        let bit = (value >> (len - 1 - offset as u32)) & 1;
        let (byte, shift) = locate(k);
        payload[byte] = (payload[byte] & !(1 << shift)) | ((bit as u8) << shift);
    }
}
