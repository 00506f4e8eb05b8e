//! OBD-II mode 01 responses and the templates built from them.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{ParseWarning, RawTrace};

/// Service 01 positive response identifier.
pub const MODE_01_RESPONSE: u8 = 0x41;
/// Functional request identifier.
pub const OBD_REQUEST_ID: u32 = 0x7DF;
/// ECU response identifiers (11-bit).
pub const OBD_RESPONSE_IDS: std::ops::RangeInclusive<u32> = 0x7E8..=0x7EF;

/// Whether `id` belongs to standard diagnostic traffic rather than periodic
/// signal messages.
pub fn is_diagnostic_id(id: u32) -> bool {
    id == OBD_REQUEST_ID || (0x7E0..=0x7EF).contains(&id)
}

pub const PID_ENGINE_LOAD: u8 = 0x04;
pub const PID_ENGINE_SPEED: u8 = 0x0C;
pub const PID_VEHICLE_SPEED: u8 = 0x0D;
pub const PID_THROTTLE: u8 = 0x11;

/// PIDs this toolkit requests and decodes.
pub const SUPPORTED_PIDS: [u8; 10] = [0x04, 0x0C, 0x0D, 0x11, 0x45, 0x47, 0x48, 0x49, 0x4A, 0x4B];

pub const LABEL_ENGINE_SPEED: &str = "EngineSpeed";
pub const LABEL_VEHICLE_SPEED: &str = "VehicleSpeed";
pub const LABEL_THROTTLE: &str = "ThrottlePosition";
pub const LABEL_ENGINE_LOAD: &str = "EngineLoad";

/// Number of data bytes carried by a supported PID.
pub fn data_len(pid: u8) -> Result<usize> {
    match pid {
        PID_ENGINE_SPEED => Ok(2),
        p if SUPPORTED_PIDS.contains(&p) => Ok(1),
        p => Err(Error::UnsupportedPid(p)),
    }
}

/// Physical value of a PID response per SAE J1979.
///
/// | PID | value |
/// |-----|-------|
/// | `0x0C` | `(256A + B) / 4` rpm |
/// | `0x0D` | `A` km/h |
/// | others | `100 A / 255` % |
pub fn decode_pid(pid: u8, data: &[u8]) -> Result<f64> {
    let needed = data_len(pid)?;
    if data.len() < needed {
        return Err(Error::ShortData {
            pid,
            needed,
            got: data.len(),
        });
    }
    let a = f64::from(data[0]);
    Ok(match pid {
        PID_ENGINE_SPEED => (256.0 * a + f64::from(data[1])) / 4.0,
        PID_VEHICLE_SPEED => a,
        _ => a * 100.0 / 255.0,
    })
}

/// Inverse of [`decode_pid`]: data bytes whose decoded value is nearest to
/// `value`, clamped to the PID's range.
pub fn encode_pid(pid: u8, value: f64) -> Result<Vec<u8>> {
    data_len(pid)?;
    Ok(match pid {
        PID_ENGINE_SPEED => {
            let raw = (value * 4.0).round().clamp(0.0, 65535.0) as u16;
            raw.to_be_bytes().to_vec()
        }
        PID_VEHICLE_SPEED => vec![value.round().clamp(0.0, 255.0) as u8],
        _ => vec![(value * 255.0 / 100.0).round().clamp(0.0, 255.0) as u8],
    })
}

/// Descriptive label a PID's samples contribute to.
pub fn label_for_pid(pid: u8) -> Option<&'static str> {
    match pid {
        PID_ENGINE_LOAD => Some(LABEL_ENGINE_LOAD),
        PID_ENGINE_SPEED => Some(LABEL_ENGINE_SPEED),
        PID_VEHICLE_SPEED => Some(LABEL_VEHICLE_SPEED),
        0x11 | 0x45 | 0x47..=0x4B => Some(LABEL_THROTTLE),
        _ => None,
    }
}

/// One decoded diagnostic value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObdSample {
    pub timestamp: f64,
    pub pid: u8,
    pub value: f64,
}

/// Result of scanning a trace for mode 01 responses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObdExtraction {
    pub samples: Vec<ObdSample>,
    /// Unsupported PIDs and malformed responses, indexed by frame number.
    pub warnings: Vec<ParseWarning>,
    pub malformed: usize,
}

/// Collects positive mode 01 responses (`[len, 0x41, pid, data..]`) sent on
/// the ECU response IDs.
pub fn extract_obd_responses(trace: &RawTrace) -> ObdExtraction {
    let mut out = ObdExtraction::default();
    for (idx, frame) in trace.frames.iter().enumerate() {
        if frame.can_id.extended || !OBD_RESPONSE_IDS.contains(&frame.can_id.id) {
            continue;
        }
        let data = frame.data();
        if data.len() < 2 || data[1] != MODE_01_RESPONSE {
            // other services or negative responses
            continue;
        }
        let len = data[0] as usize;
        if len < 2 || len + 1 > data.len() {
            out.malformed += 1;
            out.warnings.push(ParseWarning {
                line: idx + 1,
                message: format!("bad single-frame length {len} for {} bytes", data.len()),
            });
            continue;
        }
        let pid = data[2];
        match decode_pid(pid, &data[3..len + 1]) {
            Ok(value) => out.samples.push(ObdSample {
                timestamp: frame.timestamp,
                pid,
                value,
            }),
            Err(Error::UnsupportedPid(_)) => out.warnings.push(ParseWarning {
                line: idx + 1,
                message: format!("skipping unsupported PID {pid:#04x}"),
            }),
            Err(e) => {
                out.malformed += 1;
                out.warnings.push(ParseWarning {
                    line: idx + 1,
                    message: e.to_string(),
                });
            }
        }
    }
    out
}

/// A physical-value time series for one descriptive label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub label: String,
    pub timestamps: Vec<f64>,
    pub values: Vec<f64>,
}

impl Template {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Templates keyed by label, plus labels dropped for having too few samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateSet {
    pub templates: BTreeMap<String, Template>,
    pub excluded: Vec<String>,
}

/// Sorts `(timestamp, value)` points by time and drops repeated timestamps,
/// keeping the first.
fn into_template(label: String, mut points: Vec<(f64, f64)>) -> Template {
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    points.dedup_by(|b, a| a.0 == b.0);
    let (timestamps, values) = points.into_iter().unzip();
    Template {
        label,
        timestamps,
        values,
    }
}

fn assemble(groups: BTreeMap<String, Vec<(f64, f64)>>) -> TemplateSet {
    let mut set = TemplateSet::default();
    for (label, points) in groups {
        let template = into_template(label.clone(), points);
        if template.len() >= 2 {
            set.templates.insert(label, template);
        } else {
            set.excluded.push(label);
        }
    }
    set
}

/// Groups samples into one time-sorted template per descriptive label.
pub fn build_templates(samples: &[ObdSample]) -> TemplateSet {
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for s in samples {
        if let Some(label) = label_for_pid(s.pid) {
            groups
                .entry(label.to_string())
                .or_default()
                .push((s.timestamp, s.value));
        }
    }
    assemble(groups)
}

#[derive(Debug, Deserialize)]
struct TemplateRow {
    timestamp: f64,
    label: String,
    value: f64,
}

/// Reads templates from CSV with columns `timestamp,label,value`.
pub fn read_template_csv(text: &str) -> Result<TemplateSet> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    for col in ["timestamp", "label", "value"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in reader.deserialize::<TemplateRow>() {
        let row = row?;
        groups
            .entry(row.label)
            .or_default()
            .push((row.timestamp, row.value));
    }
    Ok(assemble(groups))
}

/// Writes templates as `timestamp,label,value` CSV.
pub fn write_template_csv<'a, W: io::Write>(
    w: W,
    templates: impl IntoIterator<Item = &'a Template>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["timestamp", "label", "value"])?;
    for t in templates {
        for (ts, v) in t.timestamps.iter().zip(&t.values) {
            out.write_record([ts.to_string(), t.label.clone(), v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}
