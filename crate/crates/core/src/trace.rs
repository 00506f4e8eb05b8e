//! Trace ingestion and per-ID payload matrices.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};

use crate::bits;
use crate::error::{Error, Result};

/// Largest standard (11-bit) identifier.
pub const MAX_STANDARD_ID: u32 = 0x7FF;
/// Largest extended (29-bit) identifier.
pub const MAX_EXTENDED_ID: u32 = 0x1FFF_FFFF;

/// A CAN arbitration identifier together with its frame format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanId {
    pub id: u32,
    #[serde(default)]
    pub extended: bool,
}

impl CanId {
    pub const fn standard(id: u32) -> Self {
        CanId {
            id,
            extended: false,
        }
    }

    pub const fn extended(id: u32) -> Self {
        CanId { id, extended: true }
    }

    /// Identifier as written in candump logs: 3 hex digits or 8 for extended.
    pub fn to_hex(&self) -> String {
        if self.extended {
            format!("{:08X}", self.id)
        } else {
            format!("{:03X}", self.id)
        }
    }

    /// Parses a hex identifier. Eight digits, or a value above 0x7FF, mark
    /// an extended ID.
    pub fn parse_hex(text: &str) -> Option<Self> {
        let digits = text
            .trim()
            .trim_start_matches("0x")
            .trim_start_matches("0X");
        if digits.is_empty() || digits.len() > 8 {
            return None;
        }
        let id = u32::from_str_radix(digits, 16).ok()?;
        if id > MAX_EXTENDED_ID {
            return None;
        }
        let extended = digits.len() > 3 || id > MAX_STANDARD_ID;
        Some(CanId { id, extended })
    }
}

impl fmt::Display for CanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", self.to_hex())
    }
}

/// One timestamped classic CAN frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Seconds, non-negative.
    pub timestamp: f64,
    pub channel: String,
    pub can_id: CanId,
    pub dlc: u8,
    /// Bytes past `dlc` are always zero.
    pub payload: [u8; 8],
}

impl Frame {
    pub fn new(timestamp: f64, can_id: CanId, data: &[u8]) -> Self {
        assert!(data.len() <= 8, "classic CAN payloads hold at most 8 bytes");
        let mut payload = [0u8; 8];
        payload[..data.len()].copy_from_slice(data);
        Frame {
            timestamp,
            channel: "can0".to_string(),
            can_id,
            dlc: data.len() as u8,
            payload,
        }
    }

    pub fn data(&self) -> &[u8] {
        &self.payload[..self.dlc as usize]
    }

    /// Renders the frame as one `candump -l` line.
    pub fn to_candump(&self) -> String {
        let mut line = format!(
            "({}) {} {}#",
            format_timestamp(self.timestamp),
            self.channel,
            self.can_id.to_hex()
        );
        for b in self.data() {
            line.push_str(&format!("{b:02X}"));
        }
        line
    }
}

/// Six decimals when that is exact, otherwise the shortest round-trip form.
fn format_timestamp(ts: f64) -> String {
    let fixed = format!("{ts:.6}");
    if fixed.parse::<f64>().ok() == Some(ts) {
        fixed
    } else {
        format!("{ts}")
    }
}

/// A non-fatal problem found while parsing one input line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

/// Frames of one log file, in file order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub source: String,
    pub frames: Vec<Frame>,
    #[serde(default)]
    pub warnings: Vec<ParseWarning>,
}

impl RawTrace {
    pub fn to_candump(&self) -> String {
        let mut out = String::with_capacity(self.frames.len() * 40);
        for frame in &self.frames {
            out.push_str(&frame.to_candump());
            out.push('\n');
        }
        out
    }

    pub fn write_candump<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        for frame in &self.frames {
            writeln!(w, "{}", frame.to_candump())?;
        }
        Ok(())
    }
}

/// Input log format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Candump,
    Csv,
}

fn parse_timestamp(text: &str) -> Option<f64> {
    let ts: f64 = text.trim().parse().ok()?;
    (ts.is_finite() && ts >= 0.0).then_some(ts)
}

/// Decodes hex payload text, ignoring `sep` characters between bytes.
fn parse_hex_bytes(text: &str, seps: &[char]) -> Option<Vec<u8>> {
    let digits: Vec<u8> = text
        .trim()
        .chars()
        .filter(|c| !seps.contains(c))
        .map(|c| c.to_digit(16).map(|d| d as u8))
        .collect::<Option<_>>()?;
    if !digits.len().is_multiple_of(2) {
        return None;
    }
    Some(digits.chunks(2).map(|p| p[0] << 4 | p[1]).collect())
}

fn parse_candump_line(line: &str) -> Result<Frame, String> {
    let mut fields = line.split_whitespace();
    let (Some(ts), Some(channel), Some(body)) = (fields.next(), fields.next(), fields.next())
    else {
        return Err("expected `(timestamp) interface ID#DATA`".into());
    };
    let ts = ts
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .and_then(parse_timestamp)
        .ok_or_else(|| format!("bad timestamp `{ts}`"))?;
    let (id, data) = body
        .split_once('#')
        .ok_or_else(|| format!("missing `#` in `{body}`"))?;
    if data.starts_with('#') {
        return Err("CAN FD frames are not supported".into());
    }
    if data.starts_with(['R', 'r']) {
        return Err("remote frames carry no payload".into());
    }
    let can_id = CanId::parse_hex(id).ok_or_else(|| format!("bad CAN ID `{id}`"))?;
    let payload = parse_hex_bytes(data, &['.']).ok_or_else(|| format!("bad payload `{data}`"))?;
    if payload.len() > 8 {
        return Err(format!("payload of {} bytes exceeds 8", payload.len()));
    }
    let mut frame = Frame::new(ts, can_id, &payload);
    frame.channel = channel.to_string();
    Ok(frame)
}

/// Parses `candump -l` text: one `(ts) iface ID#HEXDATA` frame per line.
///
/// Blank lines are skipped silently; anything else that fails to parse is
/// reported as a warning carrying its 1-based line number.
pub fn parse_candump(text: &str) -> Result<RawTrace> {
    let mut trace = RawTrace::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_candump_line(line) {
            Ok(frame) => trace.frames.push(frame),
            Err(message) => trace.warnings.push(ParseWarning {
                line: idx + 1,
                message,
            }),
        }
    }
    if trace.frames.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(trace)
}

/// Header names used to locate CSV columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: String,
    pub id: String,
    pub dlc: String,
    pub data: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            timestamp: "timestamp".into(),
            id: "id".into(),
            dlc: "dlc".into(),
            data: "data".into(),
        }
    }
}

impl ColumnMap {
    /// Parses overrides of the form `timestamp=Time,id=ArbID`.
    pub fn parse_overrides(spec: &str) -> Result<Self> {
        let mut map = ColumnMap::default();
        for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("bad column mapping `{part}`")))?;
            let value = value.trim().to_string();
            match key.trim() {
                "timestamp" | "ts" => map.timestamp = value,
                "id" => map.id = value,
                "dlc" => map.dlc = value,
                "data" => map.data = value,
                other => return Err(Error::Invalid(format!("unknown column key `{other}`"))),
            }
        }
        Ok(map)
    }
}

/// Parses a CSV log whose header names the columns in `columns`.
pub fn parse_csv(text: &str, columns: &ColumnMap) -> Result<RawTrace> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let ts_col = find(&columns.timestamp)?;
    let id_col = find(&columns.id)?;
    let dlc_col = find(&columns.dlc)?;
    let data_col = find(&columns.data)?;

    let mut trace = RawTrace::default();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                trace.warnings.push(ParseWarning {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        match parse_csv_record(&record, ts_col, id_col, dlc_col, data_col) {
            Ok(frame) => trace.frames.push(frame),
            Err(message) => trace.warnings.push(ParseWarning { line, message }),
        }
    }
    if trace.frames.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(trace)
}

fn parse_csv_record(
    record: &csv::StringRecord,
    ts_col: usize,
    id_col: usize,
    dlc_col: usize,
    data_col: usize,
) -> Result<Frame, String> {
    let field = |i: usize| {
        record
            .get(i)
            .ok_or_else(|| format!("missing field {}", i + 1))
    };
    let ts = parse_timestamp(field(ts_col)?).ok_or("bad timestamp")?;
    let id_text = field(id_col)?;
    let can_id = CanId::parse_hex(id_text).ok_or_else(|| format!("bad CAN ID `{id_text}`"))?;
    let dlc: usize = field(dlc_col)?.parse().map_err(|_| "bad dlc".to_string())?;
    if dlc > 8 {
        return Err(format!("dlc {dlc} exceeds 8"));
    }
    let data = parse_hex_bytes(field(data_col)?, &[' ', ':', '-'])
        .ok_or_else(|| "bad payload hex".to_string())?;
    if data.len() != dlc {
        return Err(format!("dlc {dlc} but {} data bytes", data.len()));
    }
    Ok(Frame::new(ts, can_id, &data))
}

/// All frames of one CAN ID as byte and bit matrices.
///
/// Rows are frames ordered by timestamp (stable with respect to file order).
/// The byte matrix has `width_bytes()` columns, the maximum DLC seen; rows
/// from shorter frames are zero padded and their padded cells are masked out
/// of every statistic. The bit matrix expands each byte MSB-first, so bit
/// column `8*(i-1)+k` is bit `k` of byte `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdTrace {
    id: CanId,
    timestamps: Vec<f64>,
    width: usize,
    bytes: Vec<u8>,
    lens: Vec<u8>,
    bits: Vec<u8>,
}

impl IdTrace {
    /// Builds a trace from `(timestamp, payload)` rows, sorting them stably
    /// by timestamp.
    pub fn new<P: AsRef<[u8]>>(id: CanId, rows: impl IntoIterator<Item = (f64, P)>) -> Self {
        let mut rows: Vec<(f64, Vec<u8>)> = rows
            .into_iter()
            .map(|(t, p)| (t, p.as_ref().to_vec()))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let width = rows.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
        assert!(width <= 8, "classic CAN payloads hold at most 8 bytes");

        let mut bytes = vec![0u8; rows.len() * width];
        let mut bits = vec![0u8; rows.len() * width * 8];
        let mut lens = Vec::with_capacity(rows.len());
        let mut timestamps = Vec::with_capacity(rows.len());
        for (r, (ts, payload)) in rows.iter().enumerate() {
            timestamps.push(*ts);
            lens.push(payload.len() as u8);
            bytes[r * width..r * width + payload.len()].copy_from_slice(payload);
            let bit_row = &mut bits[r * width * 8..(r + 1) * width * 8];
            for (i, byte) in payload.iter().enumerate() {
                for k in 0..8 {
                    bit_row[i * 8 + k] = (byte >> (7 - k)) & 1;
                }
            }
        }
        IdTrace {
            id,
            timestamps,
            width,
            bytes,
            lens,
            bits,
        }
    }

    pub fn id(&self) -> CanId {
        self.id
    }

    /// Number of frames, `T_C`.
    pub fn frame_count(&self) -> usize {
        self.timestamps.len()
    }

    /// Payload width `L` in bytes.
    pub fn width_bytes(&self) -> usize {
        self.width
    }

    pub fn width_bits(&self) -> u32 {
        (self.width * 8) as u32
    }

    /// Feature statistics need at least two frames.
    pub fn is_usable(&self) -> bool {
        self.frame_count() >= 2
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    /// Zero-padded payload of row `r`.
    pub fn row(&self, r: usize) -> &[u8] {
        &self.bytes[r * self.width..(r + 1) * self.width]
    }

    /// Bit row `r`, one entry (0 or 1) per payload bit.
    pub fn bit_row(&self, r: usize) -> &[u8] {
        &self.bits[r * self.width * 8..(r + 1) * self.width * 8]
    }

    /// DLC of row `r`.
    pub fn row_len(&self, r: usize) -> usize {
        self.lens[r] as usize
    }

    pub fn has_padding(&self) -> bool {
        self.lens.iter().any(|&l| l as usize != self.width)
    }

    /// Byte `i` (1-based) of row `r`, `None` when the cell is padding.
    pub fn byte(&self, r: usize, i: usize) -> Option<u8> {
        (i >= 1 && i <= self.row_len(r)).then(|| self.bytes[r * self.width + i - 1])
    }

    /// Bit `k` (1-based, MSB-first) of row `r`, `None` when padding.
    pub fn bit(&self, r: usize, k: u32) -> Option<u8> {
        let (byte, _) = bits::locate(k);
        (byte < self.row_len(r)).then(|| self.bits[r * self.width * 8 + k as usize - 1])
    }

    /// Whether row `r` carries payload bits up to and including `last_bit`.
    pub fn covers(&self, r: usize, last_bit: u32) -> bool {
        bits::locate(last_bit).0 < self.row_len(r)
    }
}

/// Groups frames by CAN ID.
///
/// Every frame lands in exactly one [`IdTrace`]; each group is stably sorted
/// by timestamp.
pub fn group_by_id(trace: &RawTrace) -> BTreeMap<CanId, IdTrace> {
    let mut groups: BTreeMap<CanId, Vec<(f64, &[u8])>> = BTreeMap::new();
    for frame in &trace.frames {
        groups
            .entry(frame.can_id)
            .or_default()
            .push((frame.timestamp, frame.data()));
    }
    groups
        .into_iter()
        .map(|(id, rows)| (id, IdTrace::new(id, rows)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candump_basic_line() {
        let trace = parse_candump("(1.000000) can0 01A#1122\n").unwrap();
        assert_eq!(trace.frames.len(), 1);
        let f = &trace.frames[0];
        assert_eq!(f.timestamp, 1.0);
        assert_eq!(f.can_id, CanId::standard(0x01A));
        assert_eq!(f.dlc, 2);
        assert_eq!(f.data(), &[0x11, 0x22]);
    }

    #[test]
    fn candump_obd_response() {
        let trace = parse_candump("(0.000000) can0 7E8#03410C1AF8").unwrap();
        let f = &trace.frames[0];
        assert_eq!(f.can_id.id, 0x7E8);
        assert_eq!(f.dlc, 5);
        assert_eq!(f.data(), &[0x03, 0x41, 0x0C, 0x1A, 0xF8]);
    }

    #[test]
    fn candump_empty_is_error() {
        assert!(matches!(parse_candump(""), Err(Error::EmptyTrace)));
        assert!(matches!(parse_candump("\n\n"), Err(Error::EmptyTrace)));
    }

    #[test]
    fn candump_bad_lines_are_warnings() {
        let text = "garbage\n(1.0) can0 01A#11\n(2.0) can0 01A#1\n(3.0) can0 01A#R\n";
        let trace = parse_candump(text).unwrap();
        assert_eq!(trace.frames.len(), 1);
        let lines: Vec<usize> = trace.warnings.iter().map(|w| w.line).collect();
        assert_eq!(lines, vec![1, 3, 4]);
    }

    #[test]
    fn candump_extended_and_separators() {
        let trace = parse_candump("(0.5) vcan1 18DAF110#de.ad.BE.ef").unwrap();
        let f = &trace.frames[0];
        assert_eq!(f.can_id, CanId::extended(0x18DA_F110));
        assert_eq!(f.data(), &[0xDE, 0xAD, 0xBE, 0xEF]);
        assert_eq!(f.channel, "vcan1");
    }

    #[test]
    fn candump_empty_payload() {
        let trace = parse_candump("(0.5) can0 123#").unwrap();
        assert_eq!(trace.frames[0].dlc, 0);
    }

    #[test]
    fn csv_basic_row() {
        let text = "timestamp,id,dlc,data\n1.0,01A,2,11 22\n";
        let trace = parse_csv(text, &ColumnMap::default()).unwrap();
        let mut expected = Frame::new(1.0, CanId::standard(0x1A), &[0x11, 0x22]);
        expected.channel = "can0".into();
        assert_eq!(trace.frames, vec![expected]);
    }

    #[test]
    fn csv_missing_column() {
        let text = "timestamp,dlc,data\n1.0,2,1122\n";
        match parse_csv(text, &ColumnMap::default()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "id"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_dlc_mismatch_skipped() {
        let text = "timestamp,id,dlc,data\n1.0,01A,3,11 22\n2.0,01A,2,1122\n";
        let trace = parse_csv(text, &ColumnMap::default()).unwrap();
        assert_eq!(trace.frames.len(), 1);
        assert_eq!(trace.warnings.len(), 1);
        assert_eq!(trace.warnings[0].line, 2);
    }

    #[test]
    fn csv_custom_columns() {
        let map = ColumnMap::parse_overrides("timestamp=Time,id=ArbID,dlc=Len,data=Bytes").unwrap();
        let text = "Time,ArbID,Len,Bytes\n0.25,0x7E8,3,03 41 0D\n";
        let trace = parse_csv(text, &map).unwrap();
        assert_eq!(trace.frames[0].data(), &[0x03, 0x41, 0x0D]);
    }

    #[test]
    fn grouping_counts() {
        let text = "(0.0) can0 01A#00\n(0.1) can0 0B4#00\n(0.2) can0 01A#01\n(0.3) can0 0B4#00\n(0.4) can0 01A#02\n";
        let groups = group_by_id(&parse_candump(text).unwrap());
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[&CanId::standard(0x1A)].frame_count(), 3);
        assert_eq!(groups[&CanId::standard(0xB4)].frame_count(), 2);
    }

    #[test]
    fn single_frame_is_unusable() {
        let groups = group_by_id(&parse_candump("(0.0) can0 01A#00").unwrap());
        let t = &groups[&CanId::standard(0x1A)];
        assert_eq!(t.frame_count(), 1);
        assert!(!t.is_usable());
    }

    #[test]
    fn short_frames_are_padded_and_masked() {
        let id = CanId::standard(0x100);
        let t = IdTrace::new(id, vec![(0.0, vec![1u8; 8]), (0.1, vec![2u8; 3])]);
        assert_eq!(t.width_bytes(), 8);
        assert_eq!(t.row(1), &[2, 2, 2, 0, 0, 0, 0, 0]);
        assert_eq!(t.byte(1, 3), Some(2));
        assert_eq!(t.byte(1, 4), None);
        assert_eq!(t.bit(1, 24), Some(0));
        assert_eq!(t.bit(1, 25), None);
        assert!(t.has_padding());
    }

    #[test]
    fn grouping_sorts_by_time_stably() {
        let id = CanId::standard(0x10);
        let t = IdTrace::new(id, vec![(2.0, [3u8]), (1.0, [1u8]), (1.0, [2u8])]);
        assert_eq!(t.timestamps(), &[1.0, 1.0, 2.0]);
        assert_eq!(t.row(0), &[1]);
        assert_eq!(t.row(1), &[2]);
    }

    #[test]
    fn timestamp_formatting_round_trips() {
        for ts in [0.0, 1.5, 1234.123456, 0.1 + 0.2, 1e-9] {
            let f = Frame::new(ts, CanId::standard(1), &[]);
            let back = parse_candump(&f.to_candump()).unwrap();
            assert_eq!(back.frames[0].timestamp, ts);
        }
    }
}
