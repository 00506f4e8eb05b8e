//! Byte, bit and bit-block statistics of an [`IdTrace`].
//!
//! Every statistic is computed over the frames in timestamp order:
//!
//! * the **flip rate** is the fraction of adjacent frame pairs whose value
//!   differs,
//! * the **average** is the arithmetic mean of the unsigned value,
//! * the **distinct ratio** is the number of distinct observed values over
//!   the number of representable ones (`256` for a byte, `2^len` for a block).
//!
//! Padded cells (frames shorter than the widest frame of the ID) are
//! excluded: a pair contributes to the flip rate only when both frames carry
//! the unit, and means and distinct sets only use frames that carry it.

use std::collections::HashSet;
use std::io;

use serde::{Deserialize, Serialize};

use crate::bits::{self, BitRange};
use crate::error::{Error, Result};
use crate::trace::IdTrace;

/// Statistics of one payload byte.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ByteFeatures {
    /// Byte flip rate, in `[0, 1]`.
    pub flip_rate: f64,
    /// Mean byte value, in `[0, 255]`.
    pub average: f64,
    /// Distinct values over 256, in `[1/256, 1]`.
    pub distinct_ratio: f64,
}

/// Statistics of one payload bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitFeatures {
    pub flip_rate: f64,
    pub average: f64,
}

/// Statistics of a run of bits read as one unsigned integer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockFeatures {
    pub flip_rate: f64,
    /// Mean block value, in `[0, 2^len - 1]`.
    pub average: f64,
    /// Distinct values over `2^len`.
    pub distinct_ratio: f64,
}

/// Accumulates flip/mean/distinct statistics of one column.
struct ColumnStats {
    flips: u64,
    pairs: u64,
    sum: f64,
    rows: u64,
    distinct: Distinct,
}

enum Distinct {
    Dense(Vec<bool>, u64),
    Sparse(HashSet<u64>),
}

impl Distinct {
    fn new(width_bits: u32) -> Self {
        if width_bits <= 16 {
            Distinct::Dense(vec![false; 1 << width_bits], 0)
        } else {
            Distinct::Sparse(HashSet::new())
        }
    }

    fn insert(&mut self, v: u64) {
        match self {
            Distinct::Dense(seen, count) => {
                let slot = &mut seen[v as usize];
                if !*slot {
                    *slot = true;
                    *count += 1;
                }
            }
            Distinct::Sparse(set) => {
                set.insert(v);
            }
        }
    }

    fn count(&self) -> u64 {
        match self {
            Distinct::Dense(_, count) => *count,
            Distinct::Sparse(set) => set.len() as u64,
        }
    }
}

impl ColumnStats {
    fn collect(values: impl Iterator<Item = Option<u64>>, width_bits: u32) -> Self {
        let mut stats = ColumnStats {
            flips: 0,
            pairs: 0,
            sum: 0.0,
            rows: 0,
            distinct: Distinct::new(width_bits),
        };
        let mut prev: Option<u64> = None;
        for value in values {
            if let Some(v) = value {
                if let Some(p) = prev {
                    stats.pairs += 1;
                    stats.flips += u64::from(p != v);
                }
                stats.sum += v as f64;
                stats.rows += 1;
                stats.distinct.insert(v);
            }
            prev = value;
        }
        stats
    }

    fn finish(self, can_id: u32, width_bits: u32) -> Result<(f64, f64, f64)> {
        if self.pairs == 0 {
            return Err(Error::TooFewFrames {
                can_id,
                frames: self.rows as usize,
            });
        }
        let flip_rate = self.flips as f64 / self.pairs as f64;
        let average = self.sum / self.rows as f64;
        let distinct_ratio = self.distinct.count() as f64 / (width_bits as f64).exp2();
        Ok((flip_rate, average, distinct_ratio))
    }
}

fn check_usable(trace: &IdTrace) -> Result<()> {
    if trace.is_usable() {
        Ok(())
    } else {
        Err(Error::TooFewFrames {
            can_id: trace.id().id,
            frames: trace.frame_count(),
        })
    }
}

/// Features of byte `i` (1-based).
pub fn compute_byte_features(trace: &IdTrace, i: usize) -> Result<ByteFeatures> {
    check_usable(trace)?;
    if i == 0 || i > trace.width_bytes() {
        let width = trace.width_bits();
        return Err(Error::InvalidRange {
            start: (i as u32).saturating_sub(1) * 8 + 1,
            end: i as u32 * 8,
            width,
        });
    }
    let values = (0..trace.frame_count()).map(|r| trace.byte(r, i).map(u64::from));
    let (flip_rate, average, distinct_ratio) =
        ColumnStats::collect(values, 8).finish(trace.id().id, 8)?;
    Ok(ByteFeatures {
        flip_rate,
        average,
        distinct_ratio,
    })
}

/// Features of bit `k` (1-based, MSB-first), read from the bit matrix.
pub fn compute_bit_features(trace: &IdTrace, k: u32) -> Result<BitFeatures> {
    check_usable(trace)?;
    if k == 0 || k > trace.width_bits() {
        return Err(Error::InvalidRange {
            start: k,
            end: k,
            width: trace.width_bits(),
        });
    }
    let mut flips = 0u64;
    let mut pairs = 0u64;
    let mut ones = 0u64;
    let mut rows = 0u64;
    let mut prev: Option<u8> = None;
    for r in 0..trace.frame_count() {
        let cur = trace.bit(r, k);
        if let Some(bit) = cur {
            if let Some(p) = prev {
                flips += u64::from(p ^ bit);
                pairs += 1;
            }
            ones += u64::from(bit);
            rows += 1;
        }
        prev = cur;
    }
    if pairs == 0 {
        return Err(Error::TooFewFrames {
            can_id: trace.id().id,
            frames: rows as usize,
        });
    }
    Ok(BitFeatures {
        flip_rate: flips as f64 / pairs as f64,
        average: ones as f64 / rows as f64,
    })
}

/// Features of the block of bits `range`, read MSB-first from the payload.
pub fn compute_block_features(trace: &IdTrace, range: BitRange) -> Result<BlockFeatures> {
    check_usable(trace)?;
    let range = BitRange::new(range.start, range.end, trace.width_bits())?;
    let values = (0..trace.frame_count()).map(|r| {
        if trace.covers(r, range.end) {
            bits::extract(trace.row(r), range)
        } else {
            None
        }
    });
    let (flip_rate, average, distinct_ratio) =
        ColumnStats::collect(values, range.len()).finish(trace.id().id, range.len())?;
    Ok(BlockFeatures {
        flip_rate,
        average,
        distinct_ratio,
    })
}

/// Byte features for every payload byte.
pub fn all_byte_features(trace: &IdTrace) -> Result<Vec<ByteFeatures>> {
    (1..=trace.width_bytes())
        .map(|i| compute_byte_features(trace, i))
        .collect()
}

/// Bit features for every bit of `range`.
pub fn bit_features_in(trace: &IdTrace, range: BitRange) -> Result<Vec<BitFeatures>> {
    range
        .bits()
        .map(|k| compute_bit_features(trace, k))
        .collect()
}

/// Writes per-byte and per-bit feature rows for `traces` as CSV.
///
/// Columns: `can_id,extended,level,index,flip_rate,average,distinct_ratio`;
/// bit rows leave `distinct_ratio` empty.
pub fn write_feature_csv<'a, W: io::Write>(
    w: W,
    traces: impl IntoIterator<Item = &'a IdTrace>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "can_id",
        "extended",
        "level",
        "index",
        "flip_rate",
        "average",
        "distinct_ratio",
    ])?;
    for trace in traces {
        if !trace.is_usable() {
            continue;
        }
        let id = trace.id().to_hex();
        let ext = trace.id().extended.to_string();
        for i in 1..=trace.width_bytes() {
            let Ok(f) = compute_byte_features(trace, i) else {
                continue;
            };
            out.write_record([
                id.as_str(),
                ext.as_str(),
                "byte",
                &i.to_string(),
                &f.flip_rate.to_string(),
                &f.average.to_string(),
                &f.distinct_ratio.to_string(),
            ])?;
        }
        for k in 1..=trace.width_bits() {
            let Ok(f) = compute_bit_features(trace, k) else {
                continue;
            };
            out.write_record([
                id.as_str(),
                ext.as_str(),
                "bit",
                &k.to_string(),
                &f.flip_rate.to_string(),
                &f.average.to_string(),
                "",
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::CanId;

    fn byte_column(values: &[u8]) -> IdTrace {
        IdTrace::new(
            CanId::standard(0x1),
            values.iter().enumerate().map(|(r, &v)| (r as f64, [v])),
        )
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn byte_constant_column() {
        let f = compute_byte_features(&byte_column(&[0, 0, 0]), 1).unwrap();
        assert_eq!(f.flip_rate, 0.0);
        assert_eq!(f.average, 0.0);
        assert!(close(f.distinct_ratio, 1.0 / 256.0));
    }

    #[test]
    fn byte_partial_changes() {
        let f = compute_byte_features(&byte_column(&[1, 2, 2]), 1).unwrap();
        assert!(close(f.flip_rate, 0.5));
        assert!(close(f.average, 5.0 / 3.0));
        assert!(close(f.distinct_ratio, 2.0 / 256.0));
    }

    #[test]
    fn byte_alternating() {
        let f = compute_byte_features(&byte_column(&[0x00, 0xFF, 0x00, 0xFF]), 1).unwrap();
        assert!(close(f.flip_rate, 1.0));
        assert!(close(f.average, 127.5));
        assert!(close(f.distinct_ratio, 2.0 / 256.0));
    }

    #[test]
    fn too_few_frames() {
        let t = byte_column(&[7]);
        assert!(matches!(
            compute_byte_features(&t, 1),
            Err(Error::TooFewFrames { frames: 1, .. })
        ));
        assert!(compute_bit_features(&t, 1).is_err());
        assert!(compute_block_features(&t, BitRange { start: 1, end: 8 }).is_err());
    }

    #[test]
    fn bit_examples() {
        // bit 8 is the LSB of the single byte
        let f = compute_bit_features(&byte_column(&[1, 1, 1, 1]), 8).unwrap();
        assert_eq!((f.flip_rate, f.average), (0.0, 1.0));
        let f = compute_bit_features(&byte_column(&[0, 1, 0, 1]), 8).unwrap();
        assert_eq!((f.flip_rate, f.average), (1.0, 0.5));
        let f = compute_bit_features(&byte_column(&[0, 0, 1, 1]), 8).unwrap();
        assert!(close(f.flip_rate, 1.0 / 3.0));
        assert_eq!(f.average, 0.5);
    }

    #[test]
    fn block_examples() {
        let two_bit = BitRange { start: 7, end: 8 };
        let f = compute_block_features(&byte_column(&[0, 1, 2, 3]), two_bit).unwrap();
        assert_eq!((f.flip_rate, f.average, f.distinct_ratio), (1.0, 1.5, 1.0));

        let nibble = BitRange { start: 5, end: 8 };
        let f = compute_block_features(&byte_column(&[7; 5]), nibble).unwrap();
        assert_eq!(
            (f.flip_rate, f.average, f.distinct_ratio),
            (0.0, 7.0, 1.0 / 16.0)
        );

        let counter: Vec<u8> = (0..16).collect();
        let f = compute_block_features(&byte_column(&counter), nibble).unwrap();
        assert_eq!((f.flip_rate, f.average, f.distinct_ratio), (1.0, 7.5, 1.0));
    }

    #[test]
    fn block_range_errors() {
        let t = byte_column(&[1, 2]);
        assert!(matches!(
            compute_block_features(&t, BitRange { start: 5, end: 4 }),
            Err(Error::InvalidRange { .. })
        ));
        assert!(compute_block_features(&t, BitRange { start: 5, end: 9 }).is_err());
        assert!(compute_byte_features(&t, 2).is_err());
        assert!(compute_bit_features(&t, 0).is_err());
    }

    #[test]
    fn padded_pairs_are_dropped() {
        // byte 2 exists only in rows 0, 1 and 3; pair (1,2) and (2,3) are dropped
        let t = IdTrace::new(
            CanId::standard(2),
            vec![
                (0.0, vec![0u8, 5]),
                (1.0, vec![0, 6]),
                (2.0, vec![0]),
                (3.0, vec![0, 6]),
            ],
        );
        let f = compute_byte_features(&t, 2).unwrap();
        assert_eq!(f.flip_rate, 1.0);
        assert!(close(f.average, 17.0 / 3.0));
        assert!(close(f.distinct_ratio, 2.0 / 256.0));
        let block = compute_block_features(&t, BitRange { start: 9, end: 16 }).unwrap();
        assert_eq!(block.flip_rate, 1.0);
    }

    #[test]
    fn feature_csv_has_rows_per_byte_and_bit() {
        let t = byte_column(&[0, 1, 2]);
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, [&t]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 1 + 8);
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("001,false,byte,1,"));
    }
}
