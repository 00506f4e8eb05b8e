//! Reading ground-truth DBC files and writing inferred maps as DBC.
//!
//! Only the subset needed for signal layouts is understood: `VERSION`,
//! `BO_`, `SG_` and `CM_`. Other statements are skipped.
//!
//! DBC numbers bits per byte from the LSB (`bit = 8 * byte + pos`, pos 0 is
//! the LSB). A big-endian (`@0`) signal names its MSB as the start bit and
//! runs "sawtooth" downwards, which is one contiguous run in the toolkit's
//! sequential MSB-first numbering. A little-endian (`@1`) signal names its
//! LSB and runs upwards through the DBC numbering; when it crosses a byte
//! boundary its bits are not contiguous in sequential numbering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::bits::{self, BitRange, MAX_BITS};
use crate::document::{MessageSlices, SliceDocument};
use crate::error::{Error, Result};
use crate::labeling::GeneralLabel;
use crate::trace::{CanId, ParseWarning};

/// Flag DBC sets on message IDs in extended (29-bit) format.
pub const DBC_EXTENDED_FLAG: u32 = 0x8000_0000;

/// Node name used for emitted messages.
const EMITTER: &str = "CANSLICE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ByteOrder {
    BigEndian,
    LittleEndian,
}

/// Converts a DBC bit index to the sequential MSB-first position (1-based).
pub fn dbc_to_sequential(dbc_bit: u32) -> u32 {
    (dbc_bit / 8) * 8 + (7 - dbc_bit % 8) + 1
}

/// Converts a sequential MSB-first position (1-based) to a DBC bit index.
pub fn sequential_to_dbc(k: u32) -> u32 {
    let (byte, shift) = bits::locate(k);
    byte as u32 * 8 + shift
}

/// One signal definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub can_id: CanId,
    pub name: String,
    /// Start bit in DBC numbering.
    pub start_bit: u32,
    pub length_bits: u32,
    pub byte_order: ByteOrder,
    pub signed: bool,
    pub scale: f64,
    pub offset: f64,
    pub min: f64,
    pub max: f64,
    pub unit: String,
    #[serde(default)]
    pub comment: Option<String>,
    /// Ground-truth general label, from the annotation sidecar.
    #[serde(default)]
    pub category: Option<GeneralLabel>,
    /// Ground-truth descriptive label, from the annotation sidecar.
    #[serde(default)]
    pub descriptive: Option<String>,
}

impl SignalSpec {
    /// Sequential positions of the signal's bits, or an error when any bit
    /// falls outside a 64-bit payload.
    pub fn positions(&self) -> Result<Vec<u32>> {
        let out_of_range = || Error::InvalidRange {
            start: self.start_bit,
            end: self.start_bit + self.length_bits.saturating_sub(1),
            width: MAX_BITS,
        };
        if self.length_bits == 0 || self.start_bit >= MAX_BITS {
            return Err(out_of_range());
        }
        match self.byte_order {
            ByteOrder::BigEndian => {
                let msb = dbc_to_sequential(self.start_bit);
                let last = msb + self.length_bits - 1;
                if last > MAX_BITS {
                    return Err(out_of_range());
                }
                Ok((msb..=last).collect())
            }
            ByteOrder::LittleEndian => {
                let last = self.start_bit + self.length_bits - 1;
                if last >= MAX_BITS {
                    return Err(out_of_range());
                }
                let mut ks: Vec<u32> = (self.start_bit..=last).map(dbc_to_sequential).collect();
                ks.sort_unstable();
                Ok(ks)
            }
        }
    }

    /// Bit set in sequential numbering (payload bit `k` is mask bit `k-1`).
    pub fn mask(&self) -> Result<u64> {
        Ok(self
            .positions()?
            .into_iter()
            .fold(0u64, |m, k| m | 1 << (k - 1)))
    }

    /// The sequential range when the signal's bits are contiguous.
    pub fn sequential_range(&self) -> Option<BitRange> {
        let ks = self.positions().ok()?;
        let (first, last) = (*ks.first()?, *ks.last()?);
        (last - first + 1 == ks.len() as u32).then_some(BitRange {
            start: first,
            end: last,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: CanId,
    pub name: String,
    pub dlc: u32,
    pub sender: String,
    pub signals: Vec<SignalSpec>,
    #[serde(default)]
    pub comment: Option<String>,
}

/// Parsed DBC content.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub messages: BTreeMap<CanId, Message>,
    pub provenance: String,
    #[serde(default)]
    pub warnings: Vec<ParseWarning>,
}

static BO_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^BO_\s+(\d+)\s+(\w+)\s*:\s*(\d+)\s+(\w+)\s*$").expect("valid regex")
});
static SG_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"^SG_\s+(\w+)\s*(?:[Mm]\d*\s*)?:\s*(\d+)\|(\d+)@([01])([+-])\s*\(\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)\s*\[\s*([^|\s]+)\s*\|\s*([^\]\s]+)\s*\]\s*"([^"]*)"\s*(.*)$"#,
    )
    .expect("valid regex")
});
static CM_SG_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?s)^CM_\s+SG_\s+(\d+)\s+(\w+)\s+"(.*)"\s*;\s*$"#).expect("valid regex")
});
static CM_BO_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?s)^CM_\s+BO_\s+(\d+)\s+"(.*)"\s*;\s*$"#).expect("valid regex")
});

fn decode_dbc_id(raw: u32) -> CanId {
    if raw & DBC_EXTENDED_FLAG != 0 {
        CanId::extended(raw & !DBC_EXTENDED_FLAG)
    } else {
        CanId::standard(raw)
    }
}

fn encode_dbc_id(id: CanId) -> u32 {
    if id.extended {
        id.id | DBC_EXTENDED_FLAG
    } else {
        id.id
    }
}

/// Splits text into statements, joining `CM_` strings that span lines.
fn statements(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut pending: Option<(usize, String)> = None;
    for (idx, line) in text.lines().enumerate() {
        if let Some((start, mut acc)) = pending.take() {
            acc.push('\n');
            acc.push_str(line);
            if acc.matches('"').count() % 2 == 0 {
                out.push((start, acc));
            } else {
                pending = Some((start, acc));
            }
            continue;
        }
        let trimmed = line.trim();
        if trimmed.starts_with("CM_") && trimmed.matches('"').count() % 2 == 1 {
            pending = Some((idx + 1, trimmed.to_string()));
        } else {
            out.push((idx + 1, trimmed.to_string()));
        }
    }
    if let Some(p) = pending {
        out.push(p);
    }
    out
}

fn parse_signal(caps: &regex::Captures<'_>, can_id: CanId) -> Result<SignalSpec, String> {
    let num = |i: usize| -> Result<f64, String> {
        caps[i]
            .parse::<f64>()
            .map_err(|_| format!("bad number `{}`", &caps[i]))
    };
    let int = |i: usize| -> Result<u32, String> {
        caps[i]
            .parse::<u32>()
            .map_err(|_| format!("bad integer `{}`", &caps[i]))
    };
    let spec = SignalSpec {
        can_id,
        name: caps[1].to_string(),
        start_bit: int(2)?,
        length_bits: int(3)?,
        byte_order: if &caps[4] == "0" {
            ByteOrder::BigEndian
        } else {
            ByteOrder::LittleEndian
        },
        signed: &caps[5] == "-",
        scale: num(6)?,
        offset: num(7)?,
        min: num(8)?,
        max: num(9)?,
        unit: caps[10].to_string(),
        comment: None,
        category: None,
        descriptive: None,
    };
    if spec.scale == 0.0 {
        return Err(format!("signal `{}` has zero scale", spec.name));
    }
    spec.positions()
        .map_err(|e| format!("signal `{}`: {e}", spec.name))?;
    Ok(spec)
}

/// Parses DBC text.
pub fn parse_dbc(text: &str) -> Result<GroundTruth> {
    let mut gt = GroundTruth::default();
    let mut current: Option<CanId> = None;
    let mut seen_bo = false;

    for (line, stmt) in statements(text) {
        let warn = |gt: &mut GroundTruth, message: String| {
            gt.warnings.push(ParseWarning { line, message });
        };
        if stmt.starts_with("BO_ ") || stmt == "BO_" {
            seen_bo = true;
            match BO_RE.captures(&stmt) {
                Some(c) => {
                    let (Ok(raw), Ok(dlc)) = (c[1].parse::<u32>(), c[3].parse::<u32>()) else {
                        warn(&mut gt, format!("bad message header `{stmt}`"));
                        current = None;
                        continue;
                    };
                    let id = decode_dbc_id(raw);
                    gt.messages.insert(
                        id,
                        Message {
                            id,
                            name: c[2].to_string(),
                            dlc,
                            sender: c[4].to_string(),
                            signals: Vec::new(),
                            comment: None,
                        },
                    );
                    current = Some(id);
                }
                None => {
                    warn(&mut gt, format!("bad message header `{stmt}`"));
                    current = None;
                }
            }
        } else if stmt.starts_with("SG_ ") {
            let Some(id) = current else {
                warn(&mut gt, "signal outside a message".into());
                continue;
            };
            match SG_RE.captures(&stmt) {
                Some(c) => match parse_signal(&c, id) {
                    Ok(spec) => gt
                        .messages
                        .get_mut(&id)
                        .expect("current message exists")
                        .signals
                        .push(spec),
                    Err(e) => warn(&mut gt, e),
                },
                None => warn(&mut gt, format!("bad signal definition `{stmt}`")),
            }
        } else if stmt.starts_with("CM_") {
            current = None;
            if let Some(c) = CM_SG_RE.captures(&stmt) {
                let id = c[1].parse::<u32>().map(decode_dbc_id);
                let target = id
                    .ok()
                    .and_then(|id| gt.messages.get_mut(&id))
                    .and_then(|m| m.signals.iter_mut().find(|s| s.name == c[2]));
                match target {
                    Some(sig) => sig.comment = Some(c[3].to_string()),
                    None => warn(&mut gt, format!("comment for unknown signal `{}`", &c[2])),
                }
            } else if let Some(c) = CM_BO_RE.captures(&stmt) {
                let id = c[1].parse::<u32>().map(decode_dbc_id);
                match id.ok().and_then(|id| gt.messages.get_mut(&id)) {
                    Some(msg) => msg.comment = Some(c[2].to_string()),
                    None => warn(&mut gt, format!("comment for unknown message `{}`", &c[1])),
                }
            }
        } else if !stmt.is_empty() {
            // VERSION, NS_, BU_, VAL_, BA_ and friends end a message block
            current = None;
        }
    }
    if !seen_bo {
        return Err(Error::NoDefinitions);
    }
    Ok(gt)
}

impl GroundTruth {
    /// Pairs of overlapping signals within one message.
    pub fn overlaps(&self) -> Vec<(CanId, String, String)> {
        let mut out = Vec::new();
        for msg in self.messages.values() {
            let masks: Vec<(String, u64)> = msg
                .signals
                .iter()
                .filter_map(|s| s.mask().ok().map(|m| (s.name.clone(), m)))
                .collect();
            for (i, (a, ma)) in masks.iter().enumerate() {
                for (b, mb) in &masks[i + 1..] {
                    if ma & mb != 0 {
                        out.push((msg.id, a.clone(), b.clone()));
                    }
                }
            }
        }
        out
    }

    /// Attaches sidecar annotations to signals by name. Returns the number of
    /// signals annotated.
    pub fn apply_annotations(&mut self, annotations: &BTreeMap<String, Annotation>) -> usize {
        let mut hits = 0;
        for sig in self
            .messages
            .values_mut()
            .flat_map(|m| m.signals.iter_mut())
        {
            if let Some(a) = annotations.get(&sig.name) {
                sig.category = Some(a.category);
                sig.descriptive = a.descriptive.clone();
                hits += 1;
            }
        }
        hits
    }
}

/// One sidecar row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub category: GeneralLabel,
    pub descriptive: Option<String>,
}

/// Reads the `signal_name,category[,descriptive]` sidecar.
pub fn read_annotations(text: &str) -> Result<BTreeMap<String, Annotation>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let name_col = col("signal_name").ok_or_else(|| Error::MissingColumn("signal_name".into()))?;
    let cat_col = col("category").ok_or_else(|| Error::MissingColumn("category".into()))?;
    let desc_col = col("descriptive");
    let mut out = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let (Some(name), Some(category)) = (record.get(name_col), record.get(cat_col)) else {
            continue;
        };
        let descriptive = desc_col
            .and_then(|c| record.get(c))
            .filter(|d| !d.is_empty())
            .map(str::to_string);
        out.insert(
            name.to_string(),
            Annotation {
                category: category.parse()?,
                descriptive,
            },
        );
    }
    Ok(out)
}

/// Writes the annotation sidecar for the signals of `gt` that carry one.
pub fn write_annotations(gt: &GroundTruth) -> Result<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["signal_name", "category", "descriptive"])?;
    for sig in gt.messages.values().flat_map(|m| m.signals.iter()) {
        if let Some(cat) = sig.category {
            out.write_record([
                sig.name.as_str(),
                cat.as_str(),
                sig.descriptive.as_deref().unwrap_or(""),
            ])?;
        }
    }
    let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn write_header(out: &mut String) {
    out.push_str("VERSION \"\"\n\nNS_ :\n\nBS_:\n\n");
    let _ = writeln!(out, "BU_: {EMITTER}\n");
}

fn write_signal(out: &mut String, sig: &SignalSpec) {
    let _ = writeln!(
        out,
        " SG_ {} : {}|{}@{}{} ({},{}) [{}|{}] \"{}\" Vector__XXX",
        sig.name,
        sig.start_bit,
        sig.length_bits,
        match sig.byte_order {
            ByteOrder::BigEndian => '0',
            ByteOrder::LittleEndian => '1',
        },
        if sig.signed { '-' } else { '+' },
        fmt_num(sig.scale),
        fmt_num(sig.offset),
        fmt_num(sig.min),
        fmt_num(sig.max),
        sig.unit
    );
}

fn quote(text: &str) -> String {
    text.replace('"', "'")
}

/// Renders a [`GroundTruth`] as DBC text.
pub fn write_dbc(gt: &GroundTruth) -> String {
    let mut out = String::new();
    write_header(&mut out);
    for msg in gt.messages.values() {
        let _ = writeln!(
            out,
            "BO_ {} {}: {} {}",
            encode_dbc_id(msg.id),
            msg.name,
            msg.dlc,
            msg.sender
        );
        for sig in &msg.signals {
            write_signal(&mut out, sig);
        }
        out.push('\n');
    }
    for msg in gt.messages.values() {
        if let Some(c) = &msg.comment {
            let _ = writeln!(out, "CM_ BO_ {} \"{}\";", encode_dbc_id(msg.id), quote(c));
        }
        for sig in &msg.signals {
            if let Some(c) = &sig.comment {
                let _ = writeln!(
                    out,
                    "CM_ SG_ {} {} \"{}\";",
                    encode_dbc_id(msg.id),
                    sig.name,
                    quote(c)
                );
            }
        }
    }
    out
}

/// Name given to an emitted slice.
pub fn slice_signal_name(range: BitRange, label: Option<GeneralLabel>) -> String {
    match label {
        Some(l) => format!("SIG_{}_{}_{}", range.start, range.end, l),
        None => format!("SIG_{}_{}", range.start, range.end),
    }
}

static SLICE_NAME_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^SIG_(\d+)_(\d+)(?:_(\w+))?$").expect("valid regex"));

const UNUSED_PREFIX: &str = "unused";

/// Builds the DBC view of an inferred slice map.
///
/// Every non-Unused slice becomes a big-endian, unit-scale signal named
/// `SIG_<m>_<n>_<label>`; Unused slices are listed in the message comment
/// and descriptive labels go into signal comments, so the map survives a
/// round trip through [`parse_dbc`] and [`slices_from_dbc`].
pub fn document_to_dbc(doc: &SliceDocument) -> GroundTruth {
    let mut gt = GroundTruth {
        provenance: doc.source.clone(),
        ..GroundTruth::default()
    };
    for msg in &doc.messages {
        let id = msg.id();
        let mut unused = Vec::new();
        let mut signals = Vec::new();
        for s in &msg.slices {
            let range = s.range();
            if s.label == Some(GeneralLabel::Unused) {
                unused.push(format!("{}-{}", range.start, range.end));
                continue;
            }
            let len = range.len();
            signals.push(SignalSpec {
                can_id: id,
                name: slice_signal_name(range, s.label),
                start_bit: sequential_to_dbc(range.start),
                length_bits: len,
                byte_order: ByteOrder::BigEndian,
                signed: false,
                scale: 1.0,
                offset: 0.0,
                min: 0.0,
                max: (len as f64).exp2() - 1.0,
                unit: String::new(),
                comment: s.descriptive_label.clone(),
                category: None,
                descriptive: None,
            });
        }
        let comment = (!unused.is_empty()).then(|| format!("{UNUSED_PREFIX} {}", unused.join(" ")));
        gt.messages.insert(
            id,
            Message {
                id,
                name: format!("MSG_{}", id.to_hex()),
                dlc: msg.dlc as u32,
                sender: EMITTER.to_string(),
                signals,
                comment,
            },
        );
    }
    gt
}

/// Emits an inferred slice map as DBC text.
pub fn emit_dbc(doc: &SliceDocument) -> String {
    write_dbc(&document_to_dbc(doc))
}

/// A slice recovered from a DBC file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DbcSlice {
    /// Sequential bit set.
    pub mask: u64,
    pub label: Option<GeneralLabel>,
    pub descriptive: Option<String>,
}

/// Per-message slices of a DBC, sorted by lowest bit.
///
/// Signals named `SIG_<m>_<n>_<label>` yield their general label and their
/// comment as descriptive label; `unused m-n ...` message comments yield
/// Unused slices. Other signals yield a slice without labels.
pub fn slices_from_dbc(gt: &GroundTruth) -> BTreeMap<CanId, Vec<DbcSlice>> {
    let mut out = BTreeMap::new();
    for (id, msg) in &gt.messages {
        let mut slices = Vec::new();
        for sig in &msg.signals {
            let Ok(mask) = sig.mask() else { continue };
            let label = SLICE_NAME_RE
                .captures(&sig.name)
                .and_then(|c| c.get(3))
                .and_then(|l| l.as_str().parse().ok());
            slices.push(DbcSlice {
                mask,
                label,
                descriptive: sig.comment.clone(),
            });
        }
        if let Some(rest) = msg
            .comment
            .as_deref()
            .and_then(|c| c.strip_prefix(UNUSED_PREFIX))
        {
            for part in rest.split_whitespace() {
                let parsed = part
                    .split_once('-')
                    .and_then(|(a, b)| Some((a.parse::<u32>().ok()?, b.parse::<u32>().ok()?)));
                if let Some((start, end)) = parsed {
                    if let Ok(range) = BitRange::new(start, end, MAX_BITS) {
                        slices.push(DbcSlice {
                            mask: range.mask(),
                            label: Some(GeneralLabel::Unused),
                            descriptive: None,
                        });
                    }
                }
            }
        }
        slices.sort_by_key(|s| s.mask.trailing_zeros());
        out.insert(*id, slices);
    }
    out
}

/// Converts DBC slices back into a document skeleton (ranges and labels only).
pub fn document_from_dbc(gt: &GroundTruth) -> SliceDocument {
    let mut doc = SliceDocument {
        source: gt.provenance.clone(),
        eps0: None,
        messages: Vec::new(),
    };
    for (id, slices) in slices_from_dbc(gt) {
        let dlc = gt.messages[&id].dlc as usize;
        let records = slices
            .into_iter()
            .filter_map(|s| {
                let start = s.mask.trailing_zeros() + 1;
                let end = 64 - s.mask.leading_zeros();
                (s.mask == bits::mask_of(start, end)).then_some(crate::document::SliceRecord {
                    can_id: id.id,
                    m: start,
                    n: end,
                    theta: 0.0,
                    b: 0.0,
                    a: 0.0,
                    u: 0.0,
                    label: s.label,
                    descriptive_label: s.descriptive,
                    dtw_distance: None,
                })
            })
            .collect();
        doc.messages.push(MessageSlices {
            can_id: id.id,
            extended: id.extended,
            dlc,
            frames: 0,
            slices: records,
        });
    }
    doc
}
