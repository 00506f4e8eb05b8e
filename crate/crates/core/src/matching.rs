//! Descriptive labels by dynamic time warping against OBD-II templates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bits::{self, BitRange};
use crate::error::{Error, Result};
use crate::obd::Template;
use crate::trace::{CanId, IdTrace};

/// Default cap on candidate length before DTW.
pub const DEFAULT_MAX_SERIES: usize = 5000;

/// Knobs for [`dtw_distance`] and [`match_label`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwOptions {
    /// Z-normalize both series before costing.
    pub normalize: bool,
    /// Sakoe-Chiba half-width around the (rescaled) diagonal; `None` = full.
    pub band: Option<usize>,
    /// Candidates longer than this are uniformly downsampled.
    pub max_series: usize,
}

impl Default for DtwOptions {
    fn default() -> Self {
        DtwOptions {
            normalize: true,
            band: None,
            max_series: DEFAULT_MAX_SERIES,
        }
    }
}

/// Per-frame values of one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSeries {
    pub can_id: CanId,
    pub range: BitRange,
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
}

/// Reads the unsigned value of `range` from every frame that carries it.
pub fn serialize_signal(trace: &IdTrace, range: BitRange) -> Result<CandidateSeries> {
    let range = BitRange::new(range.start, range.end, trace.width_bits())?;
    let mut timestamps = Vec::with_capacity(trace.frame_count());
    let mut values = Vec::with_capacity(trace.frame_count());
    for r in 0..trace.frame_count() {
        if !trace.covers(r, range.end) {
            continue;
        }
        if let Some(v) = bits::extract(trace.row(r), range) {
            timestamps.push(trace.timestamps()[r]);
            values.push(v as f64);
        }
    }
    Ok(CandidateSeries {
        can_id: trace.id(),
        range,
        timestamps,
        values,
    })
}

/// Subtracts the mean and divides by the population standard deviation;
/// constant series map to zeros.
pub fn z_normalize(series: &[f64]) -> Vec<f64> {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std.is_nan() || std <= 1e-12 {
        return vec![0.0; series.len()];
    }
    series.iter().map(|v| (v - mean) / std).collect()
}

/// Picks `target` evenly spaced samples, always keeping both ends.
pub fn downsample(series: &[f64], target: usize) -> Vec<f64> {
    if series.len() <= target || target < 2 {
        return series.to_vec();
    }
    let last = (series.len() - 1) as f64;
    (0..target)
        .map(|i| series[(i as f64 * last / (target - 1) as f64).round() as usize])
        .collect()
}

/// Minimum without NaN handling; costs are never NaN.
#[inline(always)]
fn min3(a: f64, b: f64, c: f64) -> f64 {
    let ab = if a < b { a } else { b };
    if ab < c {
        ab
    } else {
        c
    }
}

/// Column window `[lo, hi]` allowed in row `i` of a `rows x cols` matrix.
fn band_window(i: usize, rows: usize, cols: usize, band: Option<usize>) -> (usize, usize) {
    let Some(w) = band else {
        return (0, cols - 1);
    };
    // the rescaled diagonal must stay reachable from row to row
    let slope = (cols - 1) as f64 / (rows - 1).max(1) as f64;
    let w = (w as f64).max(slope.ceil()).max(1.0);
    let centre = i as f64 * slope;
    let lo = (centre - w).ceil().max(0.0) as usize;
    let hi = ((centre + w).floor() as usize).min(cols - 1);
    (lo, hi)
}

fn prepare(s: &[f64], e: &[f64], opts: &DtwOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    for series in [s, e] {
        if series.len() < 2 {
            return Err(Error::SeriesTooShort(series.len()));
        }
    }
    if opts.normalize {
        Ok((z_normalize(s), z_normalize(e)))
    } else {
        Ok((s.to_vec(), e.to_vec()))
    }
}

/// DTW distance: square root of the minimal sum of squared pointwise
/// differences over all boundary-anchored, monotone, continuous warping
/// paths.
pub fn dtw_distance(s: &[f64], e: &[f64], opts: &DtwOptions) -> Result<f64> {
    let (s, e) = prepare(s, e, opts)?;
    let cols = e.len();
    let mut prev = vec![f64::INFINITY; cols];
    let mut cur = vec![f64::INFINITY; cols];
    for (i, &sa) in s.iter().enumerate() {
        let (lo, hi) = band_window(i, s.len(), cols, opts.band);
        cur.fill(f64::INFINITY);
        let mut left = f64::INFINITY;
        let mut diag = if i == 0 {
            // the path starts at (0, 0)
            0.0
        } else if lo > 0 {
            prev[lo - 1]
        } else {
            f64::INFINITY
        };
        let window = cur[lo..=hi].iter_mut().zip(&prev[lo..=hi]).zip(&e[lo..=hi]);
        for ((c, &up), &ej) in window {
            let d = (sa - ej) * (sa - ej);
            let best = min3(up, left, diag);
            *c = d + best;
            left = *c;
            diag = up;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[cols - 1].sqrt())
}

/// DTW distance together with one optimal warping path of `(a, b)` index
/// pairs. Uses a full cost matrix, so it is meant for short series.
pub fn dtw_with_path(
    s: &[f64],
    e: &[f64],
    opts: &DtwOptions,
) -> Result<(f64, Vec<(usize, usize)>)> {
    let (s, e) = prepare(s, e, opts)?;
    let (rows, cols) = (s.len(), e.len());
    let mut acc = vec![vec![f64::INFINITY; cols]; rows];
    for i in 0..rows {
        let (lo, hi) = band_window(i, rows, cols, opts.band);
        for j in lo..=hi {
            let d = (s[i] - e[j]).powi(2);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { acc[i - 1][j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i][j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 {
                    acc[i - 1][j - 1]
                } else {
                    f64::INFINITY
                };
                up.min(left).min(diag)
            };
            acc[i][j] = d + best;
        }
    }
    let mut path = vec![(rows - 1, cols - 1)];
    let (mut i, mut j) = (rows - 1, cols - 1);
    while (i, j) != (0, 0) {
        let mut step = (usize::MAX, usize::MAX);
        let mut best = f64::INFINITY;
        // prefer the diagonal on ties
        for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
            if i >= di && j >= dj && acc[i - di][j - dj] < best {
                best = acc[i - di][j - dj];
                step = (i - di, j - dj);
            }
        }
        (i, j) = step;
        path.push(step);
    }
    path.reverse();
    Ok((acc[rows - 1][cols - 1].sqrt(), path))
}

/// Outcome of matching one candidate against every template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    pub label: String,
    pub distance: f64,
    pub distances: BTreeMap<String, f64>,
}

/// Assigns the label of the template at minimum DTW distance. Ties go to the
/// lexicographically smallest label.
pub fn match_label(
    candidate: &[f64],
    templates: &BTreeMap<String, Template>,
    opts: &DtwOptions,
) -> Result<DtwResult> {
    if templates.is_empty() {
        return Err(Error::NoTemplates);
    }
    let candidate = downsample(candidate, opts.max_series);
    let mut distances = BTreeMap::new();
    let mut best: Option<(&str, f64)> = None;
    for (label, template) in templates {
        let d = dtw_distance(&template.values, &candidate, opts)?;
        distances.insert(label.clone(), d);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((label, d));
        }
    }
    let (label, distance) = best.expect("templates is non-empty");
    Ok(DtwResult {
        label: label.to_string(),
        distance,
        distances,
    })
}
