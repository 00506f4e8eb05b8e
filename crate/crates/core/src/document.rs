//! JSON artifact passed between pipeline stages.
//!
//! ```json
//! {
//!   "source": "trace.log",
//!   "eps0": 0.0123,
//!   "messages": [
//!     { "can_id": 26, "extended": false, "dlc": 8, "frames": 10000,
//!       "slices": [
//!         { "can_id": 26, "m": 1, "n": 8, "theta": 0.41, "b": 0.83, "a": 97.2,
//!           "u": 0.49, "label": "Dynamic", "descriptive_label": "VehicleSpeed",
//!           "dtw_distance": 3.1 }
//!       ] }
//!   ]
//! }
//! ```
//!
//! `label`, `descriptive_label` and `dtw_distance` are absent until the
//! corresponding stage has run; `eps0` is `null` before labeling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::BitRange;
use crate::error::Result;
use crate::labeling::{compute_theta, GeneralLabel};
use crate::slicing::SignalSlice;
use crate::trace::CanId;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceDocument {
    pub source: String,
    #[serde(default)]
    pub eps0: Option<f64>,
    pub messages: Vec<MessageSlices>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageSlices {
    pub can_id: u32,
    #[serde(default)]
    pub extended: bool,
    pub dlc: usize,
    pub frames: usize,
    pub slices: Vec<SliceRecord>,
}

impl MessageSlices {
    pub fn id(&self) -> CanId {
        CanId {
            id: self.can_id,
            extended: self.extended,
        }
    }
}

/// One slice with its block statistics and whatever labels are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub can_id: u32,
    pub m: u32,
    pub n: u32,
    pub theta: f64,
    /// Block flip rate.
    pub b: f64,
    /// Mean block value.
    pub a: f64,
    /// Distinct-value ratio.
    pub u: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<GeneralLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptive_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtw_distance: Option<f64>,
}

impl SliceRecord {
    pub fn range(&self) -> BitRange {
        BitRange {
            start: self.m,
            end: self.n,
        }
    }
}

impl From<&SignalSlice> for SliceRecord {
    fn from(s: &SignalSlice) -> Self {
        SliceRecord {
            can_id: s.can_id.id,
            m: s.range.start,
            n: s.range.end,
            theta: compute_theta(&s.features),
            b: s.features.flip_rate,
            a: s.features.average,
            u: s.features.distinct_ratio,
            label: s.label,
            descriptive_label: None,
            dtw_distance: None,
        }
    }
}

impl SliceDocument {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn slices(&self) -> impl Iterator<Item = &SliceRecord> {
        self.messages.iter().flat_map(|m| m.slices.iter())
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut SliceRecord> {
        self.messages.iter_mut().flat_map(|m| m.slices.iter_mut())
    }
}
