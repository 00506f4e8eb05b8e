//! Two-stage signal slicing.
//!
//! Bytes are first clustered on their flip rate, mean and distinct ratio;
//! adjacent bytes that share a cluster form a byte segment of at most two
//! bytes. Inside each segment the bits are clustered on their flip rate and
//! mean, and adjacent bits sharing a cluster form one slice. Noise points
//! never merge with their neighbours, so the output always tiles the payload.

use serde::{Deserialize, Serialize};

use crate::bits::BitRange;
use crate::dbscan::{dbscan, standardize, Assignment, DbscanParams};
use crate::error::Result;
use crate::features::{
    all_byte_features, bit_features_in, compute_block_features, BlockFeatures, ByteFeatures,
};
use crate::labeling::GeneralLabel;
use crate::trace::{CanId, IdTrace};

/// Longest byte segment produced by the byte-level stage.
pub const MAX_SEGMENT_BYTES: usize = 2;

/// DBSCAN parameters for both stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SlicingParams {
    pub byte: DbscanParams,
    pub bit: DbscanParams,
}

/// One or two adjacent payload bytes (1-based, inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ByteSegment {
    pub start_byte: usize,
    pub end_byte: usize,
    /// `None` for bytes DBSCAN marked as noise.
    pub cluster: Option<usize>,
    pub features: Vec<ByteFeatures>,
}

impl ByteSegment {
    pub fn bit_range(&self) -> BitRange {
        BitRange {
            start: (self.start_byte as u32 - 1) * 8 + 1,
            end: self.end_byte as u32 * 8,
        }
    }
}

/// A contiguous bit range believed to hold one signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSlice {
    pub can_id: CanId,
    pub range: BitRange,
    pub features: BlockFeatures,
    pub label: Option<GeneralLabel>,
}

/// Groups consecutive points that share a cluster into inclusive index runs.
///
/// Runs longer than `cap` are cut left to right into pieces of `cap`; noise
/// points are always runs of one.
pub fn merge_adjacent(assignments: &[Assignment], cap: usize) -> Vec<(usize, usize)> {
    assert!(cap >= 1);
    let mut runs = Vec::new();
    let mut i = 0;
    while i < assignments.len() {
        let mut j = i;
        if let Assignment::Cluster(c) = assignments[i] {
            while j + 1 < assignments.len()
                && assignments[j + 1] == Assignment::Cluster(c)
                && j + 1 - i < cap
            {
                j += 1;
            }
        }
        runs.push((i, j));
        i = j + 1;
    }
    runs
}

/// Byte-level stage: tiles the payload with segments of one or two bytes.
pub fn cluster_bytes(trace: &IdTrace, params: &DbscanParams) -> Result<Vec<ByteSegment>> {
    let features = all_byte_features(trace)?;
    let points: Vec<Vec<f64>> = features
        .iter()
        .map(|f| vec![f.flip_rate, f.average / 255.0, f.distinct_ratio])
        .collect();
    let assignments = dbscan(&standardize(&points), params);
    Ok(merge_adjacent(&assignments, MAX_SEGMENT_BYTES)
        .into_iter()
        .map(|(s, e)| ByteSegment {
            start_byte: s + 1,
            end_byte: e + 1,
            cluster: assignments[s].cluster(),
            features: features[s..=e].to_vec(),
        })
        .collect())
}

/// Bit-level stage: tiles `segment` with slices.
pub fn slice_bits(
    trace: &IdTrace,
    segment: &ByteSegment,
    params: &DbscanParams,
) -> Result<Vec<SignalSlice>> {
    let range = segment.bit_range();
    let features = bit_features_in(trace, range)?;
    let points: Vec<Vec<f64>> = features
        .iter()
        .map(|f| vec![f.flip_rate, f.average])
        .collect();
    let assignments = dbscan(&standardize(&points), params);
    merge_adjacent(&assignments, usize::MAX)
        .into_iter()
        .map(|(s, e)| {
            let slice = BitRange {
                start: range.start + s as u32,
                end: range.start + e as u32,
            };
            Ok(SignalSlice {
                can_id: trace.id(),
                range: slice,
                features: compute_block_features(trace, slice)?,
                label: None,
            })
        })
        .collect()
}

/// Runs both stages on one ID.
pub fn slice_trace(trace: &IdTrace, params: &SlicingParams) -> Result<Vec<SignalSlice>> {
    let mut slices = Vec::new();
    for segment in cluster_bytes(trace, &params.byte)? {
        slices.extend(slice_bits(trace, &segment, &params.bit)?);
    }
    Ok(slices)
}
