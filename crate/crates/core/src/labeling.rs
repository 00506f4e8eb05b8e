//! General labels for slices.
//!
//! Each slice gets a labeling parameter `theta = flip_rate * distinct_ratio`.
//! A single threshold `eps0`, derived from the positive `theta` values of the
//! whole trace, separates rarely changing *Switch* slices from the busy ones;
//! busy slices whose flip rate reaches [`VERIFICATION_FLOOR`] are
//! *Verification* (counters, checksums), the rest *Dynamic*.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::BlockFeatures;

/// Flip rate at or above which a busy slice is labeled Verification.
pub const VERIFICATION_FLOOR: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GeneralLabel {
    Unused,
    Switch,
    Dynamic,
    Verification,
}

impl GeneralLabel {
    pub const ALL: [GeneralLabel; 4] = [
        GeneralLabel::Unused,
        GeneralLabel::Switch,
        GeneralLabel::Dynamic,
        GeneralLabel::Verification,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GeneralLabel::Unused => "Unused",
            GeneralLabel::Switch => "Switch",
            GeneralLabel::Dynamic => "Dynamic",
            GeneralLabel::Verification => "Verification",
        }
    }
}

impl fmt::Display for GeneralLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneralLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeneralLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Invalid(format!("unknown general label `{s}`")))
    }
}

/// Labeling parameter of a block.
pub fn compute_theta(features: &BlockFeatures) -> f64 {
    features.flip_rate * features.distinct_ratio
}

/// Derives the Switch threshold from all `theta` values of a trace.
///
/// The distinct positive values are sorted and split into a low and a high
/// group at the adjacent pair with the largest ratio `high / low`; the
/// threshold is the midpoint of that pair. Ties go to the lowest gap. With a
/// single distinct positive value the threshold is that value, so everything
/// active is labeled Switch.
pub fn derive_threshold(thetas: &[f64]) -> Result<f64> {
    let mut values: Vec<f64> = thetas.iter().copied().filter(|t| *t > 0.0).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    match values.len() {
        0 => Err(Error::NoActiveSignals),
        1 => Ok(values[0]),
        _ => {
            let mut best = 0;
            let mut best_ratio = 0.0;
            for i in 0..values.len() - 1 {
                let ratio = values[i + 1] / values[i];
                if ratio > best_ratio {
                    best_ratio = ratio;
                    best = i;
                }
            }
            Ok((values[best] + values[best + 1]) / 2.0)
        }
    }
}

/// Labels a slice from its `theta`, flip rate and the trace threshold.
///
/// `theta == 0` means the block never changed (the distinct ratio is always
/// positive), which is Unused. `theta == eps0` is Switch.
pub fn assign_general_label(theta: f64, flip_rate: f64, eps0: f64) -> GeneralLabel {
    if theta <= 0.0 {
        GeneralLabel::Unused
    } else if theta <= eps0 {
        GeneralLabel::Switch
    } else if flip_rate < VERIFICATION_FLOOR {
        GeneralLabel::Dynamic
    } else {
        GeneralLabel::Verification
    }
}
