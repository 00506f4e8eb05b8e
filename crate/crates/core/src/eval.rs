//! Scoring an inferred slice map against ground truth.
//!
//! All three metrics are micro-averages over the CAN IDs present on both
//! sides:
//!
//! * **slicing accuracy** `zeta`: ground-truth signal bits whose inferred
//!   slice has exactly the signal's boundaries, over all ground-truth signal
//!   bits;
//! * **slicing coverage** `varpi`: bits of inferred slices that lie entirely
//!   inside one ground-truth signal, over all ground-truth signal bits;
//! * **labeling accuracy** `xi`: correctly labeled inferred slices over
//!   evaluated slices. A slice's reference label is the label covering most
//!   of its bits; bits outside every ground-truth signal count as Unused.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bits;
use crate::dbc::{slices_from_dbc, GroundTruth};
use crate::document::SliceDocument;
use crate::error::{Error, Result};
use crate::labeling::GeneralLabel;
use crate::trace::CanId;

/// One inferred slice as seen by the scorer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSlice {
    /// Sequential bit set.
    pub mask: u64,
    pub label: Option<GeneralLabel>,
    pub descriptive: Option<String>,
}

pub type InferredMap = BTreeMap<CanId, Vec<EvalSlice>>;

pub fn inferred_from_document(doc: &SliceDocument) -> InferredMap {
    doc.messages
        .iter()
        .map(|m| {
            let slices = m
                .slices
                .iter()
                .map(|s| EvalSlice {
                    mask: s.range().mask(),
                    label: s.label,
                    descriptive: s.descriptive_label.clone(),
                })
                .collect();
            (m.id(), slices)
        })
        .collect()
}

pub fn inferred_from_dbc(gt: &GroundTruth) -> InferredMap {
    slices_from_dbc(gt)
        .into_iter()
        .map(|(id, slices)| {
            let slices = slices
                .into_iter()
                .map(|s| EvalSlice {
                    mask: s.mask,
                    label: s.label,
                    descriptive: s.descriptive,
                })
                .collect();
            (id, slices)
        })
        .collect()
}

/// `correct / total`, kept as counts so breakdowns add up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub correct: u64,
    pub total: u64,
}

impl Ratio {
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn add(&mut self, other: Ratio) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

/// Bit counts behind `zeta` and `varpi`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlicingCounts {
    pub truth_bits: u64,
    pub exact_bits: u64,
    pub contained_bits: u64,
}

impl SlicingCounts {
    pub fn accuracy(&self) -> Option<f64> {
        (self.truth_bits > 0).then(|| self.exact_bits as f64 / self.truth_bits as f64)
    }

    pub fn coverage(&self) -> Option<f64> {
        (self.truth_bits > 0).then(|| self.contained_bits as f64 / self.truth_bits as f64)
    }

    fn add(&mut self, other: SlicingCounts) {
        self.truth_bits += other.truth_bits;
        self.exact_bits += other.exact_bits;
        self.contained_bits += other.contained_bits;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdBreakdown {
    pub can_id: u32,
    pub extended: bool,
    pub slicing: SlicingCounts,
    pub general: Ratio,
    pub descriptive: Ratio,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupBreakdown {
    pub slicing: SlicingCounts,
    pub general: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub zeta: f64,
    pub varpi: f64,
    pub xi_general: Option<f64>,
    pub xi_descriptive: Option<f64>,
    pub slicing: SlicingCounts,
    pub general: Ratio,
    pub descriptive: Ratio,
    pub per_id: Vec<IdBreakdown>,
    /// Keyed by ground-truth general label (`Unannotated` when missing).
    pub per_type: BTreeMap<String, GroupBreakdown>,
    /// Keyed by ground-truth signal length in bits.
    pub per_length: BTreeMap<u32, GroupBreakdown>,
    pub ids_only_inferred: Vec<u32>,
    pub ids_only_truth: Vec<u32>,
}

/// Reference label of a slice's bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum BitLabel {
    Known(GeneralLabel),
    Unannotated,
}

struct TruthSignal<'a> {
    mask: u64,
    category: Option<GeneralLabel>,
    descriptive: Option<&'a str>,
}

fn truth_signals(gt: &GroundTruth, id: CanId) -> Vec<TruthSignal<'_>> {
    gt.messages[&id]
        .signals
        .iter()
        .filter_map(|s| {
            Some(TruthSignal {
                mask: s.mask().ok()?,
                category: s.category,
                descriptive: s.descriptive.as_deref(),
            })
        })
        .collect()
}

fn slicing_counts(inferred: &[EvalSlice], truth: &[TruthSignal<'_>]) -> SlicingCounts {
    let mut counts = SlicingCounts::default();
    for t in truth {
        let bits = u64::from(t.mask.count_ones());
        counts.truth_bits += bits;
        if inferred.iter().any(|s| s.mask == t.mask) {
            counts.exact_bits += bits;
        }
    }
    for s in inferred {
        if truth.iter().any(|t| s.mask & !t.mask == 0) {
            counts.contained_bits += u64::from(s.mask.count_ones());
        }
    }
    counts
}

/// Most common value among `items` (in bit order); ties go to the value
/// seen first.
fn majority<T: Ord + Copy>(items: impl Iterator<Item = T>) -> Option<T> {
    let mut counts: BTreeMap<T, (usize, usize)> = BTreeMap::new();
    for (pos, item) in items.enumerate() {
        let e = counts.entry(item).or_insert((0, pos));
        e.0 += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(item, _)| item)
}

fn reference_label(slice: &EvalSlice, truth: &[TruthSignal<'_>]) -> Option<BitLabel> {
    majority(bits::mask_bits(slice.mask).map(|k| {
        let bit = 1u64 << (k - 1);
        match truth.iter().find(|t| t.mask & bit != 0) {
            Some(TruthSignal {
                category: Some(c), ..
            }) => BitLabel::Known(*c),
            Some(_) => BitLabel::Unannotated,
            None => BitLabel::Known(GeneralLabel::Unused),
        }
    }))
}

/// Index of the truth signal holding most of the slice's bits.
fn reference_signal(slice: &EvalSlice, truth: &[TruthSignal<'_>]) -> Option<usize> {
    majority(bits::mask_bits(slice.mask).map(|k| {
        let bit = 1u64 << (k - 1);
        truth.iter().position(|t| t.mask & bit != 0)
    }))
    .flatten()
}

fn general_ratio(inferred: &[EvalSlice], truth: &[TruthSignal<'_>]) -> Ratio {
    let mut r = Ratio::default();
    for s in inferred {
        if let Some(BitLabel::Known(reference)) = reference_label(s, truth) {
            r.total += 1;
            r.correct += u64::from(s.label == Some(reference));
        }
    }
    r
}

fn descriptive_ratio(inferred: &[EvalSlice], truth: &[TruthSignal<'_>]) -> Ratio {
    let mut r = Ratio::default();
    for s in inferred {
        if s.label != Some(GeneralLabel::Dynamic) {
            continue;
        }
        let Some(reference) = reference_signal(s, truth).and_then(|i| truth[i].descriptive) else {
            continue;
        };
        r.total += 1;
        r.correct += u64::from(s.descriptive.as_deref() == Some(reference));
    }
    r
}

fn shared_ids(inferred: &InferredMap, truth: &GroundTruth) -> Result<Vec<CanId>> {
    let ids: Vec<CanId> = inferred
        .keys()
        .filter(|id| truth.messages.contains_key(id))
        .copied()
        .collect();
    if ids.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(ids)
}

fn has_annotations(truth: &GroundTruth) -> bool {
    truth
        .messages
        .values()
        .flat_map(|m| &m.signals)
        .any(|s| s.category.is_some())
}

/// Slicing accuracy `zeta`.
pub fn slicing_accuracy(inferred: &InferredMap, truth: &GroundTruth) -> Result<f64> {
    let mut total = SlicingCounts::default();
    for id in shared_ids(inferred, truth)? {
        total.add(slicing_counts(&inferred[&id], &truth_signals(truth, id)));
    }
    Ok(total.accuracy().unwrap_or(0.0))
}

/// Slicing coverage `varpi`.
pub fn slicing_coverage(inferred: &InferredMap, truth: &GroundTruth) -> Result<f64> {
    let mut total = SlicingCounts::default();
    for id in shared_ids(inferred, truth)? {
        total.add(slicing_counts(&inferred[&id], &truth_signals(truth, id)));
    }
    Ok(total.coverage().unwrap_or(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelMode {
    General,
    Descriptive,
}

/// Labeling accuracy `xi`. Returns 0 when no slice could be evaluated.
pub fn labeling_accuracy(
    inferred: &InferredMap,
    truth: &GroundTruth,
    mode: LabelMode,
) -> Result<f64> {
    if mode == LabelMode::General && !has_annotations(truth) {
        return Err(Error::MissingAnnotations);
    }
    let mut total = Ratio::default();
    for id in shared_ids(inferred, truth)? {
        let signals = truth_signals(truth, id);
        total.add(match mode {
            LabelMode::General => general_ratio(&inferred[&id], &signals),
            LabelMode::Descriptive => descriptive_ratio(&inferred[&id], &signals),
        });
    }
    Ok(total.value().unwrap_or(0.0))
}

fn type_key(category: Option<GeneralLabel>) -> String {
    category.map_or_else(|| "Unannotated".to_string(), |c| c.to_string())
}

/// Computes every metric and breakdown.
///
/// General-label accuracy is `None` when the ground truth carries no
/// annotations; descriptive accuracy is `None` when no Dynamic slice falls
/// on a signal with a descriptive annotation.
pub fn evaluate(inferred: &InferredMap, truth: &GroundTruth) -> Result<EvalReport> {
    let ids = shared_ids(inferred, truth)?;
    let annotated = has_annotations(truth);
    let mut slicing = SlicingCounts::default();
    let mut general = Ratio::default();
    let mut descriptive = Ratio::default();
    let mut per_id = Vec::new();
    let mut per_type: BTreeMap<String, GroupBreakdown> = BTreeMap::new();
    let mut per_length: BTreeMap<u32, GroupBreakdown> = BTreeMap::new();

    for id in &ids {
        let slices = &inferred[id];
        let signals = truth_signals(truth, *id);
        let counts = slicing_counts(slices, &signals);
        let g = if annotated {
            general_ratio(slices, &signals)
        } else {
            Ratio::default()
        };
        let d = descriptive_ratio(slices, &signals);
        slicing.add(counts);
        general.add(g);
        descriptive.add(d);
        per_id.push(IdBreakdown {
            can_id: id.id,
            extended: id.extended,
            slicing: counts,
            general: g,
            descriptive: d,
        });

        for t in &signals {
            let one = slicing_counts(slices, std::slice::from_ref(t));
            // a slice contained in `t` is counted once: truth signals are disjoint
            per_type
                .entry(type_key(t.category))
                .or_default()
                .slicing
                .add(one);
            per_length
                .entry(t.mask.count_ones())
                .or_default()
                .slicing
                .add(one);
        }
        if annotated {
            for s in slices {
                if let Some(BitLabel::Known(reference)) = reference_label(s, &signals) {
                    per_type
                        .entry(reference.to_string())
                        .or_default()
                        .general
                        .add(Ratio {
                            correct: u64::from(s.label == Some(reference)),
                            total: 1,
                        });
                }
            }
        }
    }

    Ok(EvalReport {
        zeta: slicing.accuracy().unwrap_or(0.0),
        varpi: slicing.coverage().unwrap_or(0.0),
        xi_general: if annotated { general.value() } else { None },
        xi_descriptive: descriptive.value(),
        slicing,
        general,
        descriptive,
        per_id,
        per_type,
        per_length,
        ids_only_inferred: inferred
            .keys()
            .filter(|id| !truth.messages.contains_key(id))
            .map(|id| id.id)
            .collect(),
        ids_only_truth: truth
            .messages
            .keys()
            .filter(|id| !inferred.contains_key(id))
            .map(|id| id.id)
            .collect(),
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}%", v * 100.0))
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Per-ID breakdown as CSV.
    pub fn per_id_csv(&self) -> Result<String> {
        let mut out = csv::Writer::from_writer(Vec::new());
        out.write_record([
            "can_id",
            "extended",
            "truth_bits",
            "exact_bits",
            "contained_bits",
            "zeta",
            "varpi",
            "general_correct",
            "general_total",
            "descriptive_correct",
            "descriptive_total",
        ])?;
        for r in &self.per_id {
            let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            out.write_record([
                format!("{:X}", r.can_id),
                r.extended.to_string(),
                r.slicing.truth_bits.to_string(),
                r.slicing.exact_bits.to_string(),
                r.slicing.contained_bits.to_string(),
                opt(r.slicing.accuracy()),
                opt(r.slicing.coverage()),
                r.general.correct.to_string(),
                r.general.total.to_string(),
                r.descriptive.correct.to_string(),
                r.descriptive.total.to_string(),
            ])?;
        }
        let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Human-readable summary.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "slicing accuracy   (zeta)  {}", pct(Some(self.zeta)));
        let _ = writeln!(out, "slicing coverage   (varpi) {}", pct(Some(self.varpi)));
        let _ = writeln!(out, "labeling, general  (xi)    {}", pct(self.xi_general));
        let _ = writeln!(
            out,
            "labeling, descriptive      {}",
            pct(self.xi_descriptive)
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<14}{:>8}{:>10}{:>10}{:>12}",
            "type", "bits", "zeta", "varpi", "xi"
        );
        for (k, g) in &self.per_type {
            let _ = writeln!(
                out,
                "{:<14}{:>8}{:>10}{:>10}{:>12}",
                k,
                g.slicing.truth_bits,
                pct(g.slicing.accuracy()),
                pct(g.slicing.coverage()),
                pct(g.general.value())
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<14}{:>8}{:>10}{:>10}",
            "length", "bits", "zeta", "varpi"
        );
        for (k, g) in &self.per_length {
            let _ = writeln!(
                out,
                "{:<14}{:>8}{:>10}{:>10}",
                k,
                g.slicing.truth_bits,
                pct(g.slicing.accuracy()),
                pct(g.slicing.coverage())
            );
        }
        out
    }
}
