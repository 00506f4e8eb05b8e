//! Seeded synthetic traces with known layouts.
//!
//! A [`SynthSpec`] lists messages, their period and a signal layout that
//! tiles each payload. Generation produces a candump-style trace in which
//! every message is sent periodically, OBD-II mode 01 request/response pairs
//! carrying the same vehicle trajectories, the matching ground-truth DBC
//! with category annotations, and the trajectories sampled at the response
//! times.
//!
//! Signal kinds:
//!
//! | kind | category | content |
//! |------|----------|---------|
//! | `unused` | Unused | constant `value` |
//! | `switch` | Switch | new random state at Poisson events (`rate` per second) |
//! | `dynamic` | Dynamic | `round((x - offset) / scale)` of a trajectory plus uniform jitter in `{-1, 0, 1}` |
//! | `counter` | Verification | increments by one per frame, modulo `2^length` |
//! | `checksum` | Verification | sum of the other payload bytes modulo 256 (one whole byte) |
//!
//! The same seed always yields the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{self, BitRange};
use crate::dbc::{
    sequential_to_dbc, write_annotations, write_dbc, ByteOrder, GroundTruth, Message, SignalSpec,
};
use crate::error::{Error, Result};
use crate::labeling::GeneralLabel;
use crate::obd::{self, Template, TemplateSet};
use crate::trace::{CanId, Frame, RawTrace};

const REFERENCE_SPEC: &str = include_str!("../data/reference.toml");

/// Kinematic quantity a Dynamic signal encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trajectory {
    Speed,
    Rpm,
    Throttle,
}

impl Trajectory {
    pub const ALL: [Trajectory; 3] = [Trajectory::Speed, Trajectory::Rpm, Trajectory::Throttle];

    /// PID that reports this quantity.
    pub fn pid(self) -> u8 {
        match self {
            Trajectory::Speed => obd::PID_VEHICLE_SPEED,
            Trajectory::Rpm => obd::PID_ENGINE_SPEED,
            Trajectory::Throttle => obd::PID_THROTTLE,
        }
    }

    pub fn label(self) -> &'static str {
        obd::label_for_pid(self.pid()).expect("trajectory PIDs are supported")
    }

    fn unit(self) -> &'static str {
        match self {
            Trajectory::Speed => "km/h",
            Trajectory::Rpm => "rpm",
            Trajectory::Throttle => "%",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Unused,
    Switch,
    Dynamic,
    Counter,
    Checksum,
}

impl SignalKind {
    pub fn category(self) -> GeneralLabel {
        match self {
            SignalKind::Unused => GeneralLabel::Unused,
            SignalKind::Switch => GeneralLabel::Switch,
            SignalKind::Dynamic => GeneralLabel::Dynamic,
            SignalKind::Counter | SignalKind::Checksum => GeneralLabel::Verification,
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

/// One signal of a synthetic message, in sequential bit numbering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSignal {
    pub name: String,
    pub start: u32,
    pub length: u32,
    pub kind: SignalKind,
    /// Required for `dynamic`.
    #[serde(default)]
    pub trajectory: Option<Trajectory>,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
    /// Constant raw value of an `unused` signal.
    #[serde(default)]
    pub value: u64,
    /// Events per second of a `switch`; defaults to the spec-wide rate.
    #[serde(default)]
    pub rate: Option<f64>,
}

impl SynthSignal {
    pub fn range(&self) -> BitRange {
        BitRange {
            start: self.start,
            end: self.start + self.length - 1,
        }
    }

    fn max_raw(&self) -> u64 {
        if self.length >= 64 {
            u64::MAX
        } else {
            (1u64 << self.length) - 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthMessage {
    pub id: u32,
    #[serde(default)]
    pub extended: bool,
    #[serde(default)]
    pub name: Option<String>,
    pub period_ms: f64,
    pub dlc: usize,
    pub signals: Vec<SynthSignal>,
}

impl SynthMessage {
    pub fn can_id(&self) -> CanId {
        CanId {
            id: self.id,
            extended: self.extended,
        }
    }

    fn dbc_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("MSG_{}", self.can_id().to_hex()))
    }
}

/// Value range and knot spacing of one piecewise-linear profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileParams {
    pub min: f64,
    pub max: f64,
    /// Bounds on the time between knots, seconds.
    pub knot_interval_s: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kinematics {
    pub speed: ProfileParams,
    pub rpm: ProfileParams,
    pub throttle: ProfileParams,
}

impl Default for Kinematics {
    fn default() -> Self {
        Kinematics {
            speed: ProfileParams {
                min: 0.0,
                max: 130.0,
                knot_interval_s: [4.0, 12.0],
            },
            rpm: ProfileParams {
                min: 700.0,
                max: 4500.0,
                knot_interval_s: [2.0, 8.0],
            },
            throttle: ProfileParams {
                min: 0.0,
                max: 100.0,
                knot_interval_s: [1.0, 5.0],
            },
        }
    }
}

impl Kinematics {
    fn params(&self, t: Trajectory) -> &ProfileParams {
        match t {
            Trajectory::Speed => &self.speed,
            Trajectory::Rpm => &self.rpm,
            Trajectory::Throttle => &self.throttle,
        }
    }
}

fn default_obd_period() -> f64 {
    200.0
}

fn default_obd_pids() -> Vec<u8> {
    vec![
        obd::PID_ENGINE_SPEED,
        obd::PID_VEHICLE_SPEED,
        obd::PID_THROTTLE,
    ]
}

fn default_switch_rate() -> f64 {
    0.05
}

/// Description of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "default_obd_period")]
    pub obd_period_ms: f64,
    #[serde(default = "default_obd_pids")]
    pub obd_pids: Vec<u8>,
    #[serde(default = "default_switch_rate")]
    pub switch_rate: f64,
    #[serde(default)]
    pub kinematics: Kinematics,
    pub messages: Vec<SynthMessage>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// The bundled 20-message corpus used by the end-to-end tests.
    pub fn reference() -> Self {
        Self::from_toml(REFERENCE_SPEC).expect("bundled spec is valid")
    }

    pub fn reference_toml() -> &'static str {
        REFERENCE_SPEC
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(invalid("duration_s must be positive"));
        }
        if !(self.obd_period_ms > 0.0 && self.obd_period_ms.is_finite()) {
            return Err(invalid("obd_period_ms must be positive"));
        }
        if !(self.switch_rate >= 0.0 && self.switch_rate.is_finite()) {
            return Err(invalid("switch_rate must be non-negative"));
        }
        for pid in &self.obd_pids {
            obd::data_len(*pid).map_err(|_| invalid(format!("unsupported PID {pid:#04x}")))?;
        }
        for t in Trajectory::ALL {
            let p = self.kinematics.params(t);
            let [lo, hi] = p.knot_interval_s;
            if !(p.min <= p.max && lo > 0.0 && lo <= hi) {
                return Err(invalid(format!("bad kinematics for {t:?}")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.messages {
            let id = m.can_id();
            let limit = if m.extended {
                crate::trace::MAX_EXTENDED_ID
            } else {
                crate::trace::MAX_STANDARD_ID
            };
            if m.id > limit {
                return Err(invalid(format!("ID {:#x} out of range", m.id)));
            }
            if obd::is_diagnostic_id(m.id) && !m.extended {
                return Err(invalid(format!("ID {id} collides with diagnostic traffic")));
            }
            if !seen.insert(id) {
                return Err(invalid(format!("duplicate message {id}")));
            }
            if !(m.period_ms > 0.0 && m.period_ms.is_finite()) {
                return Err(invalid(format!("{id}: period_ms must be positive")));
            }
            if m.dlc == 0 || m.dlc > 8 {
                return Err(invalid(format!("{id}: dlc must be 1..=8")));
            }
            validate_layout(m)?;
        }
        Ok(())
    }
}

fn validate_layout(m: &SynthMessage) -> Result<()> {
    let id = m.can_id();
    let mut signals: Vec<&SynthSignal> = m.signals.iter().collect();
    signals.sort_by_key(|s| s.start);
    let mut next = 1;
    for s in signals {
        if s.length == 0 {
            return Err(invalid(format!("{id}/{}: zero length", s.name)));
        }
        if s.start != next {
            return Err(invalid(format!(
                "{id}: layout does not tile the payload at bit {next} ({})",
                s.name
            )));
        }
        next = s.start + s.length;
        match s.kind {
            SignalKind::Dynamic => {
                if s.trajectory.is_none() {
                    return Err(invalid(format!(
                        "{id}/{}: dynamic signal needs a trajectory",
                        s.name
                    )));
                }
                if !(s.scale > 0.0 && s.scale.is_finite()) {
                    return Err(invalid(format!("{id}/{}: scale must be positive", s.name)));
                }
            }
            SignalKind::Checksum if s.length != 8 || s.start % 8 != 1 => {
                return Err(invalid(format!(
                    "{id}/{}: checksum must fill one byte",
                    s.name
                )));
            }
            SignalKind::Unused if s.value > s.max_raw() => {
                return Err(invalid(format!("{id}/{}: value does not fit", s.name)));
            }
            SignalKind::Switch if s.rate.is_some_and(|r| !(r >= 0.0 && r.is_finite())) => {
                return Err(invalid(format!("{id}/{}: bad rate", s.name)));
            }
            _ => {}
        }
        if s.length > 64 {
            return Err(invalid(format!("{id}/{}: longer than 64 bits", s.name)));
        }
    }
    if next != m.dlc as u32 * 8 + 1 {
        return Err(invalid(format!(
            "{id}: layout covers {} bits, payload has {}",
            next - 1,
            m.dlc * 8
        )));
    }
    Ok(())
}

/// A piecewise-linear function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    knots: Vec<(f64, f64)>,
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile {
            knots: vec![(0.0, value)],
        }
    }

    fn random(params: &ProfileParams, duration: f64, rng: &mut ChaCha8Rng) -> Self {
        let [lo, hi] = params.knot_interval_s;
        let mut knots = vec![(0.0, rng.random_range(params.min..=params.max))];
        let mut t = 0.0;
        while t < duration {
            t += rng.random_range(lo..=hi);
            knots.push((t, rng.random_range(params.min..=params.max)));
        }
        Profile { knots }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.knots.partition_point(|k| k.0 <= t);
        if i == 0 {
            return self.knots[0].1;
        }
        if i == self.knots.len() {
            return self.knots[i - 1].1;
        }
        let (t0, v0) = self.knots[i - 1];
        let (t1, v1) = self.knots[i];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

/// Everything [`generate`] produces.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub trace: RawTrace,
    pub truth: GroundTruth,
    /// Trajectories sampled at every OBD response, keyed by descriptive label.
    pub templates: TemplateSet,
    pub profiles: BTreeMap<Trajectory, Profile>,
}

/// Microsecond-exact timestamp.
fn micros(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

struct SwitchState {
    value: u64,
    next_event: f64,
}

fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    -u.ln() / rate
}

fn dynamic_raw(s: &SynthSignal, physical: f64, rng: &mut ChaCha8Rng) -> u64 {
    let base = ((physical - s.offset) / s.scale).round();
    let jitter = rng.random_range(-1i64..=1) as f64;
    (base + jitter).clamp(0.0, s.max_raw() as f64) as u64
}

/// Builds the trace, ground truth and templates for `spec`.
pub fn generate(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let profiles: BTreeMap<Trajectory, Profile> = Trajectory::ALL
        .into_iter()
        .map(|t| {
            (
                t,
                Profile::random(spec.kinematics.params(t), spec.duration_s, &mut rng),
            )
        })
        .collect();

    let mut frames: Vec<(f64, usize, Frame)> = Vec::new();
    for (mi, m) in spec.messages.iter().enumerate() {
        let period = m.period_ms / 1000.0;
        let phase = micros(rng.random_range(0.0..period));
        let mut switches: BTreeMap<usize, SwitchState> = BTreeMap::new();
        for (si, s) in m.signals.iter().enumerate() {
            if s.kind == SignalKind::Switch {
                let rate = s.rate.unwrap_or(spec.switch_rate);
                switches.insert(
                    si,
                    SwitchState {
                        value: rng.random_range(0..=s.max_raw()),
                        next_event: exponential(&mut rng, rate),
                    },
                );
            }
        }
        let mut counter_step: u64 = rng.random_range(0..256);
        let mut k = 0u64;
        loop {
            let t = micros(phase + k as f64 * period);
            if t >= spec.duration_s {
                break;
            }
            let mut payload = [0u8; 8];
            let mut checksums = Vec::new();
            for (si, s) in m.signals.iter().enumerate() {
                let raw = match s.kind {
                    SignalKind::Unused => s.value,
                    SignalKind::Switch => {
                        let rate = s.rate.unwrap_or(spec.switch_rate);
                        let st = switches.get_mut(&si).expect("initialized above");
                        while st.next_event <= t {
                            if s.max_raw() > 0 {
                                let step = rng.random_range(1..=s.max_raw());
                                st.value = (st.value + step) & s.max_raw();
                            }
                            st.next_event += exponential(&mut rng, rate);
                        }
                        st.value
                    }
                    SignalKind::Dynamic => {
                        let traj = s.trajectory.expect("validated");
                        dynamic_raw(s, profiles[&traj].value_at(t), &mut rng)
                    }
                    SignalKind::Counter => counter_step & s.max_raw(),
                    SignalKind::Checksum => {
                        checksums.push(s.range());
                        continue;
                    }
                };
                bits::insert(&mut payload, s.range(), raw);
            }
            for range in checksums {
                let idx = (range.start as usize - 1) / 8;
                let sum = payload[..m.dlc]
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != idx)
                    .fold(0u8, |acc, (_, b)| acc.wrapping_add(*b));
                payload[idx] = sum;
            }
            frames.push((t, mi, Frame::new(t, m.can_id(), &payload[..m.dlc])));
            counter_step = counter_step.wrapping_add(1);
            k += 1;
        }
    }

    let mut samples: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let obd_slot = spec.messages.len();
    let period = spec.obd_period_ms / 1000.0;
    let mut k = 0u64;
    loop {
        let t0 = k as f64 * period;
        if t0 >= spec.duration_s {
            break;
        }
        for (pi, &pid) in spec.obd_pids.iter().enumerate() {
            let t_req = micros(t0 + pi as f64 * 0.002);
            let t_resp = micros(t_req + 0.001);
            let physical = Trajectory::ALL
                .into_iter()
                .find(|t| t.pid() == pid)
                .map_or(0.0, |t| profiles[&t].value_at(t_resp));
            let data = obd::encode_pid(pid, physical)?;
            let request = [0x02, 0x01, pid, 0, 0, 0, 0, 0];
            let mut response = vec![(2 + data.len()) as u8, obd::MODE_01_RESPONSE, pid];
            response.extend_from_slice(&data);
            response.resize(8, 0);
            frames.push((
                t_req,
                obd_slot,
                Frame::new(t_req, CanId::standard(obd::OBD_REQUEST_ID), &request),
            ));
            frames.push((
                t_resp,
                obd_slot,
                Frame::new(
                    t_resp,
                    CanId::standard(*obd::OBD_RESPONSE_IDS.start()),
                    &response,
                ),
            ));
            if let Some(label) = obd::label_for_pid(pid) {
                samples
                    .entry(label.to_string())
                    .or_default()
                    .push((t_resp, physical));
            }
        }
        k += 1;
    }
    // stable: equal timestamps keep message order
    frames.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let templates = TemplateSet {
        templates: samples
            .into_iter()
            .map(|(label, pts)| {
                let (timestamps, values) = pts.into_iter().unzip();
                (
                    label.clone(),
                    Template {
                        label,
                        timestamps,
                        values,
                    },
                )
            })
            .collect(),
        excluded: Vec::new(),
    };

    Ok(Corpus {
        trace: RawTrace {
            source: format!("synth seed={}", spec.seed),
            frames: frames.into_iter().map(|(_, _, f)| f).collect(),
            warnings: Vec::new(),
        },
        truth: ground_truth(spec),
        templates,
        profiles,
    })
}

/// The DBC view of the spec's layouts, with categories and descriptive
/// labels filled in.
pub fn ground_truth(spec: &SynthSpec) -> GroundTruth {
    let mut gt = GroundTruth {
        provenance: format!("synth seed={}", spec.seed),
        ..GroundTruth::default()
    };
    for m in &spec.messages {
        let id = m.can_id();
        let signals = m
            .signals
            .iter()
            .map(|s| {
                let (unit, descriptive) = match s.trajectory {
                    Some(t) if s.kind == SignalKind::Dynamic => {
                        (t.unit(), Some(t.label().to_string()))
                    }
                    _ => ("", None),
                };
                SignalSpec {
                    can_id: id,
                    name: s.name.clone(),
                    start_bit: sequential_to_dbc(s.start),
                    length_bits: s.length,
                    byte_order: ByteOrder::BigEndian,
                    signed: false,
                    scale: s.scale,
                    offset: s.offset,
                    min: s.offset,
                    max: s.offset + s.scale * s.max_raw() as f64,
                    unit: unit.to_string(),
                    comment: None,
                    category: Some(s.kind.category()),
                    descriptive,
                }
            })
            .collect();
        gt.messages.insert(
            id,
            Message {
                id,
                name: m.dbc_name(),
                dlc: m.dlc as u32,
                sender: "SYNTH".to_string(),
                signals,
                comment: None,
            },
        );
    }
    gt
}

/// File names written by [`write_corpus`].
pub const TRACE_FILE: &str = "trace.log";
pub const TRUTH_DBC_FILE: &str = "truth.dbc";
pub const ANNOTATIONS_FILE: &str = "truth.csv";
pub const TEMPLATES_FILE: &str = "templates.csv";

/// Writes trace, DBC, annotation sidecar and template CSV into `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(TRACE_FILE), corpus.trace.to_candump())?;
    std::fs::write(dir.join(TRUTH_DBC_FILE), write_dbc(&corpus.truth))?;
    std::fs::write(
        dir.join(ANNOTATIONS_FILE),
        write_annotations(&corpus.truth)?,
    )?;
    let mut templates = Vec::new();
    obd::write_template_csv(&mut templates, corpus.templates.templates.values())?;
    std::fs::write(dir.join(TEMPLATES_FILE), templates)?;
    Ok(())
}

/// Per-message summary, one line each.
pub fn describe(spec: &SynthSpec) -> String {
    let mut out = String::new();
    for m in &spec.messages {
        let _ = write!(out, "{} {}ms", m.can_id(), m.period_ms);
        for s in &m.signals {
            let _ = write!(
                out,
                " {}[{}..{}]",
                s.kind.category(),
                s.start,
                s.start + s.length - 1
            );
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::group_by_id;

    fn spec(signals: &str, duration: f64) -> SynthSpec {
        SynthSpec::from_toml(&format!(
            "seed = 1\nduration_s = {duration}\n[[messages]]\nid = 0x100\nperiod_ms = 10\ndlc = 2\n{signals}"
        ))
        .unwrap()
    }

    #[test]
    fn four_bit_counter_wraps() {
        let s = spec(
            r#"
[[messages.signals]]
name = "pad"
start = 1
length = 12
kind = "unused"
[[messages.signals]]
name = "ctr"
start = 13
length = 4
kind = "counter"
"#,
            0.32,
        );
        let corpus = generate(&s).unwrap();
        let traces = group_by_id(&corpus.trace);
        let t = &traces[&CanId::standard(0x100)];
        assert_eq!(t.frame_count(), 32);
        let values: Vec<u64> = (0..32)
            .map(|r| bits::extract(t.row(r), BitRange { start: 13, end: 16 }).unwrap())
            .collect();
        let first = values[0];
        for (i, v) in values.iter().enumerate() {
            assert_eq!(*v, (first + i as u64) % 16);
        }
        let mut sorted = values.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn constant_speed_encodes_0x3c() {
        let mut s = spec(
            r#"
[[messages.signals]]
name = "pad"
start = 1
length = 16
kind = "unused"
"#,
            2.0,
        );
        s.kinematics.speed.min = 60.0;
        s.kinematics.speed.max = 60.0;
        let corpus = generate(&s).unwrap();
        let responses: Vec<&Frame> = corpus
            .trace
            .frames
            .iter()
            .filter(|f| f.can_id.id == 0x7E8 && f.data()[2] == obd::PID_VEHICLE_SPEED)
            .collect();
        assert_eq!(responses.len(), 10);
        assert!(responses.iter().all(|f| f.data()[3] == 0x3C));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&SynthSpec::reference()).unwrap();
        let b = generate(&SynthSpec::reference()).unwrap();
        assert_eq!(a.trace.to_candump(), b.trace.to_candump());
        let mut other = SynthSpec::reference();
        other.seed += 1;
        let c = generate(&other).unwrap();
        assert_ne!(a.trace.to_candump(), c.trace.to_candump());
    }

    #[test]
    fn rejects_bad_layouts() {
        let gap = "seed = 1\nduration_s = 1\n[[messages]]\nid = 0x100\nperiod_ms = 10\ndlc = 1\n\
                   [[messages.signals]]\nname = \"a\"\nstart = 1\nlength = 4\nkind = \"unused\"\n";
        assert!(matches!(
            SynthSpec::from_toml(gap),
            Err(Error::InvalidSpec(_))
        ));
        let period = gap
            .replace("period_ms = 10", "period_ms = 0")
            .replace("length = 4", "length = 8");
        assert!(matches!(
            SynthSpec::from_toml(&period),
            Err(Error::InvalidSpec(_))
        ));
        let ok = gap.replace("length = 4", "length = 8");
        assert!(SynthSpec::from_toml(&ok).is_ok());
        let diag = ok.replace("0x100", "0x7E8");
        assert!(matches!(
            SynthSpec::from_toml(&diag),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn profile_interpolates() {
        let p = Profile {
            knots: vec![(0.0, 0.0), (10.0, 100.0)],
        };
        assert_eq!(p.value_at(5.0), 50.0);
        assert_eq!(p.value_at(20.0), 100.0);
        assert_eq!(Profile::constant(3.0).value_at(7.0), 3.0);
    }
}
