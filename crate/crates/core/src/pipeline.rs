//! The stages run end to end: slice, label, match, emit.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbc::emit_dbc;
use crate::document::{MessageSlices, SliceDocument, SliceRecord};
use crate::error::{Error, Result};
use crate::labeling::{assign_general_label, derive_threshold, GeneralLabel};
use crate::matching::{match_label, serialize_signal, DtwOptions};
use crate::obd::{build_templates, extract_obd_responses, is_diagnostic_id, TemplateSet};
use crate::slicing::{slice_trace, SlicingParams};
use crate::trace::{group_by_id, CanId, IdTrace, RawTrace};

/// Knobs shared by the stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InferOptions {
    pub slicing: SlicingParams,
    /// Use this Switch threshold instead of deriving one.
    pub eps0: Option<f64>,
    pub dtw: DtwOptions,
    /// Leave slices unlabeled when the best DTW distance exceeds this.
    pub max_dtw: Option<f64>,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// IDs that carry signal messages, with a note for each one skipped.
fn signal_traces(raw: &RawTrace) -> (BTreeMap<CanId, IdTrace>, Vec<String>) {
    let mut notes = Vec::new();
    let mut traces = group_by_id(raw);
    traces.retain(|id, t| {
        if !id.extended && is_diagnostic_id(id.id) {
            return false;
        }
        if !t.is_usable() {
            notes.push(format!("{id}: skipped, only {} frame(s)", t.frame_count()));
            return false;
        }
        true
    });
    (traces, notes)
}

/// Slicing stage over every non-diagnostic ID.
///
/// Returns the document and one note per skipped ID.
pub fn slice_raw(raw: &RawTrace, opts: &InferOptions) -> Result<(SliceDocument, Vec<String>)> {
    let (traces, notes) = signal_traces(raw);
    let traces: Vec<(CanId, IdTrace)> = traces.into_iter().collect();
    let messages = with_pool(opts.threads, || {
        traces
            .par_iter()
            .map(|(id, t)| {
                let slices = slice_trace(t, &opts.slicing)?;
                Ok(MessageSlices {
                    can_id: id.id,
                    extended: id.extended,
                    dlc: t.width_bytes(),
                    frames: t.frame_count(),
                    slices: slices.iter().map(SliceRecord::from).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok((
        SliceDocument {
            source: raw.source.clone(),
            eps0: None,
            messages,
        },
        notes,
    ))
}

/// Labeling stage: derives (or takes) the Switch threshold from every slice
/// in the document and labels each slice. Returns the threshold used.
pub fn label_document(doc: &mut SliceDocument, eps0: Option<f64>) -> Result<f64> {
    let eps0 = match eps0 {
        Some(e) => e,
        None => {
            let thetas: Vec<f64> = doc.slices().map(|s| s.theta).collect();
            derive_threshold(&thetas)?
        }
    };
    for s in doc.slices_mut() {
        s.label = Some(assign_general_label(s.theta, s.b, eps0));
    }
    doc.eps0 = Some(eps0);
    Ok(eps0)
}

/// Templates from the trace's own OBD-II responses.
pub fn templates_from_trace(raw: &RawTrace) -> TemplateSet {
    build_templates(&extract_obd_responses(raw).samples)
}

/// Matching stage: gives every Dynamic slice the label of its nearest
/// template. Returns the number of slices that received a label.
pub fn match_document(
    doc: &mut SliceDocument,
    raw: &RawTrace,
    templates: &TemplateSet,
    opts: &InferOptions,
) -> Result<usize> {
    if templates.templates.is_empty() {
        return Err(Error::NoTemplates);
    }
    let traces = group_by_id(raw);
    let mut jobs = Vec::new();
    for (mi, m) in doc.messages.iter().enumerate() {
        let Some(trace) = traces.get(&m.id()) else {
            continue;
        };
        for (si, s) in m.slices.iter().enumerate() {
            if s.label == Some(GeneralLabel::Dynamic) {
                jobs.push((mi, si, trace, s.range()));
            }
        }
    }
    let results = with_pool(opts.threads, || {
        jobs.par_iter()
            .map(|(mi, si, trace, range)| {
                let series = serialize_signal(trace, *range)?;
                if series.values.len() < 2 {
                    return Ok((*mi, *si, None));
                }
                Ok((
                    *mi,
                    *si,
                    Some(match_label(
                        &series.values,
                        &templates.templates,
                        &opts.dtw,
                    )?),
                ))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut labeled = 0;
    for (mi, si, result) in results {
        let slice = &mut doc.messages[mi].slices[si];
        slice.descriptive_label = None;
        slice.dtw_distance = None;
        if let Some(r) = result {
            slice.dtw_distance = Some(r.distance);
            if opts.max_dtw.is_none_or(|max| r.distance <= max) {
                slice.descriptive_label = Some(r.label);
                labeled += 1;
            }
        }
    }
    Ok(labeled)
}

/// Output of [`infer`].
#[derive(Debug, Clone)]
pub struct Inference {
    pub document: SliceDocument,
    pub dbc: String,
    pub notes: Vec<String>,
}

/// All stages. Templates come from `templates` when given, otherwise from
/// the trace's OBD-II responses; without any, matching is skipped with a
/// note.
pub fn infer(
    raw: &RawTrace,
    templates: Option<&TemplateSet>,
    opts: &InferOptions,
) -> Result<Inference> {
    let (mut document, mut notes) = slice_raw(raw, opts)?;
    label_document(&mut document, opts.eps0)?;
    let own;
    let templates = match templates {
        Some(t) => t,
        None => {
            own = templates_from_trace(raw);
            &own
        }
    };
    if templates.templates.is_empty() {
        notes.push("no OBD-II templates; descriptive labels skipped".to_string());
    } else {
        match_document(&mut document, raw, templates, opts)?;
    }
    let dbc = emit_dbc(&document);
    Ok(Inference {
        document,
        dbc,
        notes,
    })
}
