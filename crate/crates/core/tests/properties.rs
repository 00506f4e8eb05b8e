use std::collections::BTreeMap;

use canslice::bits::{self, BitRange};
use canslice::dbc::{
    dbc_to_sequential, sequential_to_dbc, ByteOrder, GroundTruth, Message, SignalSpec,
};
use canslice::dbscan::{standardize, Assignment};
use canslice::eval::{evaluate, EvalSlice, InferredMap};
use canslice::features::{
    all_byte_features, compute_bit_features, compute_block_features, compute_byte_features,
};
use canslice::labeling::{assign_general_label, derive_threshold, GeneralLabel};
use canslice::matching::{dtw_distance, DtwOptions};
use canslice::obd::decode_pid;
use canslice::slicing::{merge_adjacent, slice_trace, SlicingParams, MAX_SEGMENT_BYTES};
use canslice::trace::{group_by_id, parse_candump, CanId, Frame, IdTrace, RawTrace};
use proptest::prelude::*;

fn frame() -> impl Strategy<Value = Frame> {
    (
        0u64..10_000_000_000,
        prop_oneof![
            (0u32..=0x7FF).prop_map(CanId::standard),
            (0u32..=0x1FFF_FFFF).prop_map(CanId::extended),
        ],
        prop::collection::vec(any::<u8>(), 0..=8),
    )
        .prop_map(|(micros, id, data)| Frame::new(micros as f64 / 1e6, id, &data))
}

/// Rows of one ID with a fixed width.
fn rows(max_width: usize) -> impl Strategy<Value = Vec<Vec<u8>>> {
    (1..=max_width)
        .prop_flat_map(|w| prop::collection::vec(prop::collection::vec(any::<u8>(), w), 2..40))
}

/// Rows whose bytes only take a few values, so clusters actually form.
fn sparse_rows() -> impl Strategy<Value = Vec<Vec<u8>>> {
    (1..=8usize).prop_flat_map(|w| {
        prop::collection::vec(
            prop::collection::vec(prop_oneof![Just(0u8), Just(1), Just(0x80), any::<u8>()], w),
            2..40,
        )
    })
}

fn id_trace(rows: &[Vec<u8>]) -> IdTrace {
    IdTrace::new(
        CanId::standard(0x100),
        rows.iter()
            .enumerate()
            .map(|(i, r)| (i as f64 * 0.01, r.clone())),
    )
}

/// Splits `1..=width` into contiguous ranges using `cuts` as a bitmap of
/// positions after which a new range starts.
fn tiling(width: u32, cuts: u64) -> Vec<BitRange> {
    let mut out = Vec::new();
    let mut start = 1;
    for k in 1..=width {
        if k == width || cuts >> (k - 1) & 1 == 1 {
            out.push(BitRange { start, end: k });
            start = k + 1;
        }
    }
    out
}

fn labels() -> impl Strategy<Value = GeneralLabel> {
    prop_oneof![
        Just(GeneralLabel::Unused),
        Just(GeneralLabel::Switch),
        Just(GeneralLabel::Dynamic),
        Just(GeneralLabel::Verification),
    ]
}

/// A truth layout and an inferred layout over the same IDs.
#[derive(Debug, Clone)]
struct Layouts {
    truth: GroundTruth,
    inferred: InferredMap,
}

fn spec(id: CanId, name: String, range: BitRange, category: GeneralLabel) -> SignalSpec {
    SignalSpec {
        can_id: id,
        name,
        start_bit: sequential_to_dbc(range.start),
        length_bits: range.len(),
        byte_order: ByteOrder::BigEndian,
        signed: false,
        scale: 1.0,
        offset: 0.0,
        min: 0.0,
        max: 0.0,
        unit: String::new(),
        comment: None,
        category: Some(category),
        descriptive: (category == GeneralLabel::Dynamic).then(|| "VehicleSpeed".to_string()),
    }
}

fn layouts() -> impl Strategy<Value = Layouts> {
    prop::collection::vec(
        (
            1u32..=8,
            any::<u64>(),
            any::<u64>(),
            prop::collection::vec(labels(), 64),
            prop::collection::vec(labels(), 64),
        ),
        1..6,
    )
    .prop_map(|ids| {
        let mut truth = GroundTruth::default();
        let mut inferred = InferredMap::new();
        for (i, (bytes, truth_cuts, inferred_cuts, truth_labels, inferred_labels)) in
            ids.into_iter().enumerate()
        {
            let id = CanId::standard(0x100 + i as u32);
            let width = bytes * 8;
            let signals = tiling(width, truth_cuts)
                .into_iter()
                .enumerate()
                .map(|(j, r)| spec(id, format!("S{i}_{j}"), r, truth_labels[j]))
                .collect();
            truth.messages.insert(
                id,
                Message {
                    id,
                    name: format!("M{i}"),
                    dlc: bytes,
                    sender: "T".to_string(),
                    signals,
                    comment: None,
                },
            );
            let slices = tiling(width, inferred_cuts)
                .into_iter()
                .enumerate()
                .map(|(j, r)| EvalSlice {
                    mask: r.mask(),
                    label: Some(inferred_labels[j]),
                    descriptive: (inferred_labels[j] == GeneralLabel::Dynamic)
                        .then(|| "VehicleSpeed".to_string()),
                })
                .collect();
            inferred.insert(id, slices);
        }
        Layouts { truth, inferred }
    })
}

fn identity(truth: &GroundTruth) -> InferredMap {
    truth
        .messages
        .iter()
        .map(|(id, m)| {
            let slices = m
                .signals
                .iter()
                .map(|s| EvalSlice {
                    mask: s.mask().unwrap(),
                    label: s.category,
                    descriptive: s.descriptive.clone(),
                })
                .collect();
            (*id, slices)
        })
        .collect()
}

proptest! {
    #[test]
    fn candump_round_trip(frames in prop::collection::vec(frame(), 1..50)) {
        let trace = RawTrace { source: String::new(), frames, warnings: Vec::new() };
        let text = trace.to_candump();
        let back = parse_candump(&text).unwrap();
        prop_assert_eq!(&back.frames, &trace.frames);
        prop_assert_eq!(back.to_candump(), text);
    }

    #[test]
    fn grouping_keeps_every_frame(frames in prop::collection::vec(frame(), 0..80)) {
        let trace = RawTrace { source: String::new(), frames, warnings: Vec::new() };
        let total: usize = group_by_id(&trace).values().map(IdTrace::frame_count).sum();
        prop_assert_eq!(total, trace.frames.len());
    }

    #[test]
    fn bits_agree_with_bytes(payload in prop::collection::vec(any::<u8>(), 1..=8)) {
        for (i, byte) in payload.iter().enumerate() {
            let mut rebuilt = 0u8;
            for j in 0..8 {
                rebuilt = rebuilt << 1 | bits::bit_at(&payload, i as u32 * 8 + j + 1).unwrap();
            }
            prop_assert_eq!(rebuilt, *byte);
            let range = BitRange { start: i as u32 * 8 + 1, end: i as u32 * 8 + 8 };
            prop_assert_eq!(bits::extract(&payload, range), Some(u64::from(*byte)));
        }
    }

    #[test]
    fn insert_then_extract(width in 1usize..=8, start in 1u32..=64, len in 1u32..=64, value: u64) {
        let total = width as u32 * 8;
        let start = start.min(total);
        let end = (start + len - 1).min(total);
        let range = BitRange { start, end };
        let value = value & (u64::MAX >> (64 - range.len()));
        let mut payload = vec![0xA5u8; width];
        let before = payload.clone();
        bits::insert(&mut payload, range, value);
        prop_assert_eq!(bits::extract(&payload, range), Some(value));
        for k in (1..=total).filter(|k| !range.contains(*k)) {
            prop_assert_eq!(bits::bit_at(&payload, k), bits::bit_at(&before, k));
        }
    }

    #[test]
    fn single_bit_block_equals_bit(rows in rows(4), k in 1u32..=32) {
        let t = id_trace(&rows);
        let k = k.min(t.width_bits());
        let bit = compute_bit_features(&t, k).unwrap();
        let block = compute_block_features(&t, BitRange { start: k, end: k }).unwrap();
        prop_assert_eq!(bit.flip_rate, block.flip_rate);
        prop_assert_eq!(bit.average, block.average);
    }

    #[test]
    fn block_flips_dominate_bit_flips(rows in rows(4), start in 1u32..=32, len in 1u32..=12) {
        let t = id_trace(&rows);
        let start = start.min(t.width_bits());
        let range = BitRange { start, end: (start + len - 1).min(t.width_bits()) };
        let block = compute_block_features(&t, range).unwrap();
        for k in range.bits() {
            prop_assert!(block.flip_rate >= compute_bit_features(&t, k).unwrap().flip_rate);
        }
    }

    #[test]
    fn byte_average_and_distinct_ignore_order(rows in rows(8), seed: u64) {
        let t = id_trace(&rows);
        let mut shuffled = rows.clone();
        // deterministic Fisher-Yates from the seed
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let u = id_trace(&shuffled);
        for i in 1..=t.width_bytes() {
            let a = compute_byte_features(&t, i).unwrap();
            let b = compute_byte_features(&u, i).unwrap();
            prop_assert!((a.average - b.average).abs() < 1e-9);
            prop_assert_eq!(a.distinct_ratio, b.distinct_ratio);
        }
    }

    #[test]
    fn feature_ranges(rows in rows(8)) {
        let t = id_trace(&rows);
        for f in all_byte_features(&t).unwrap() {
            prop_assert!((0.0..=1.0).contains(&f.flip_rate));
            prop_assert!((0.0..=255.0).contains(&f.average));
            prop_assert!((1.0 / 256.0..=1.0).contains(&f.distinct_ratio));
        }
        for k in 1..=t.width_bits() {
            let f = compute_bit_features(&t, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&f.flip_rate));
            prop_assert!((0.0..=1.0).contains(&f.average));
        }
    }

    #[test]
    fn standardized_coordinates_are_centered(points in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 2..30)) {
        let z = standardize(&points);
        for column in 0..z.first().map_or(0, Vec::len) {
            let mean: f64 = z.iter().map(|p| p[column]).sum::<f64>() / z.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn merge_runs_tile_and_respect_cap(
        raw in prop::collection::vec(prop_oneof![Just(None), (0usize..3).prop_map(Some)], 1..30),
        cap in 1usize..5,
    ) {
        let assignments: Vec<Assignment> = raw
            .iter()
            .map(|c| c.map_or(Assignment::Noise, Assignment::Cluster))
            .collect();
        let runs = merge_adjacent(&assignments, cap);
        let mut next = 0;
        for &(a, b) in &runs {
            prop_assert_eq!(a, next);
            prop_assert!(b >= a && b - a < cap);
            if b > a {
                prop_assert!(assignments[a..=b].iter().all(|x| *x == assignments[a] && *x != Assignment::Noise));
            }
            next = b + 1;
        }
        prop_assert_eq!(next, assignments.len());
    }

    #[test]
    fn slices_tile_the_payload(rows in sparse_rows()) {
        let t = id_trace(&rows);
        let slices = slice_trace(&t, &SlicingParams::default()).unwrap();
        let mut next = 1;
        for s in &slices {
            prop_assert_eq!(s.range.start, next);
            prop_assert!(s.range.len() as usize <= MAX_SEGMENT_BYTES * 8);
            // slices never cross a byte segment, so a slice over two bytes starts on a byte boundary
            if s.range.len() > 8 {
                prop_assert_eq!(s.range.start % 8, 1);
            }
            next = s.range.end + 1;
        }
        prop_assert_eq!(next, t.width_bits() + 1);
        prop_assert_eq!(slice_trace(&t, &SlicingParams::default()).unwrap(), slices);
    }

    #[test]
    fn dtw_is_symmetric(
        s in prop::collection::vec(-50.0f64..50.0, 2..40),
        e in prop::collection::vec(-50.0f64..50.0, 2..40),
        normalize: bool,
    ) {
        let opts = DtwOptions { normalize, ..DtwOptions::default() };
        let ab = dtw_distance(&s, &e, &opts).unwrap();
        let ba = dtw_distance(&e, &s, &opts).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        prop_assert!(dtw_distance(&s, &s, &opts).unwrap().abs() < 1e-12);
    }

    #[test]
    fn one_label_per_slice(b in 0.0f64..=1.0, u in 0.0f64..=1.0, eps0 in 1e-9f64..1.0) {
        let theta = b * u;
        let label = assign_general_label(theta, b, eps0);
        let expected = if theta <= 0.0 {
            GeneralLabel::Unused
        } else if theta <= eps0 {
            GeneralLabel::Switch
        } else if b < 0.99 {
            GeneralLabel::Dynamic
        } else {
            GeneralLabel::Verification
        };
        prop_assert_eq!(label, expected);
    }

    #[test]
    fn threshold_scales_with_theta(
        thetas in prop::collection::vec(prop_oneof![Just(0.0), 1e-6f64..1.0], 1..40),
        scale in 0.01f64..100.0,
    ) {
        prop_assume!(thetas.iter().any(|t| *t > 0.0));
        let eps0 = derive_threshold(&thetas).unwrap();
        let scaled: Vec<f64> = thetas.iter().map(|t| t * scale).collect();
        let eps0_scaled = derive_threshold(&scaled).unwrap();
        let rel = (eps0_scaled - eps0 * scale).abs() / (eps0 * scale);
        // a near-tie between two gaps may flip under rounding; the partition is what matters
        if rel > 1e-9 {
            let ratios = |v: &[f64]| {
                let mut v: Vec<f64> = v.iter().copied().filter(|t| *t > 0.0).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max)
            };
            let best = ratios(&thetas);
            let second = {
                let mut v: Vec<f64> = thetas.iter().copied().filter(|t| *t > 0.0).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                let mut r: Vec<f64> = v.windows(2).map(|w| w[1] / w[0]).collect();
                r.sort_by(f64::total_cmp);
                r.iter().rev().nth(1).copied().unwrap_or(0.0)
            };
            prop_assert!((best - second).abs() <= 1e-9 * best);
        } else {
            for (t, ts) in thetas.iter().zip(&scaled) {
                prop_assert_eq!(*t <= eps0, *ts <= eps0_scaled);
            }
        }
    }

    #[test]
    fn engine_speed_decoding_is_monotone(a: u16, b: u16) {
        let (lo, hi) = (a.min(b), a.max(b));
        let d = |v: u16| decode_pid(0x0C, &v.to_be_bytes()).unwrap();
        prop_assert!(d(lo) <= d(hi));
        prop_assert!(decode_pid(0x0D, &[lo as u8]).unwrap() <= decode_pid(0x0D, &[(lo as u8).max(hi as u8)]).unwrap());
        prop_assert!(decode_pid(0x11, &[lo as u8]).unwrap() <= decode_pid(0x11, &[(lo as u8).max(hi as u8)]).unwrap());
    }

    #[test]
    fn eval_ratios_are_fractions(l in layouts()) {
        let r = evaluate(&l.inferred, &l.truth).unwrap();
        for v in [Some(r.zeta), Some(r.varpi), r.xi_general, r.xi_descriptive].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(r.zeta <= r.varpi);
    }

    #[test]
    fn eval_identity_is_perfect(l in layouts()) {
        let r = evaluate(&identity(&l.truth), &l.truth).unwrap();
        prop_assert_eq!(r.zeta, 1.0);
        prop_assert_eq!(r.varpi, 1.0);
        prop_assert_eq!(r.xi_general, Some(1.0));
        prop_assert!(r.xi_descriptive.is_none_or(|x| x == 1.0));
    }

    #[test]
    fn eval_ignores_id_values(l in layouts(), shift in 1u32..0x400) {
        let moved = |id: &CanId| CanId::standard(id.id + shift);
        let mut truth = l.truth.clone();
        truth.messages = l.truth.messages.iter().map(|(id, m)| {
            let mut m = m.clone();
            m.id = moved(id);
            for s in &mut m.signals {
                s.can_id = m.id;
            }
            (m.id, m)
        }).collect();
        let inferred: InferredMap = l.inferred.iter().map(|(id, s)| (moved(id), s.clone())).collect();
        let a = evaluate(&l.inferred, &l.truth).unwrap();
        let b = evaluate(&inferred, &truth).unwrap();
        prop_assert_eq!(a.zeta, b.zeta);
        prop_assert_eq!(a.varpi, b.varpi);
        prop_assert_eq!(a.xi_general, b.xi_general);
        prop_assert_eq!(a.xi_descriptive, b.xi_descriptive);
    }

    #[test]
    fn eval_micro_average_is_weighted_mean(l in layouts()) {
        let r = evaluate(&l.inferred, &l.truth).unwrap();
        let weights: BTreeMap<u32, f64> = r.per_id.iter().map(|p| (p.can_id, p.slicing.truth_bits as f64)).collect();
        let total: f64 = weights.values().sum();
        let zeta: f64 = r.per_id.iter().map(|p| p.slicing.accuracy().unwrap() * weights[&p.can_id]).sum::<f64>() / total;
        let varpi: f64 = r.per_id.iter().map(|p| p.slicing.coverage().unwrap() * weights[&p.can_id]).sum::<f64>() / total;
        prop_assert!((zeta - r.zeta).abs() < 1e-12);
        prop_assert!((varpi - r.varpi).abs() < 1e-12);
    }
}

#[test]
fn dbc_bit_numbering_is_a_bijection() {
    for b in 0..64 {
        let k = dbc_to_sequential(b);
        assert!((1..=64).contains(&k));
        assert_eq!(k, (b / 8) * 8 + (7 - b % 8) + 1);
        assert_eq!(sequential_to_dbc(k), b);
    }
    for k in 1..=64 {
        assert_eq!(dbc_to_sequential(sequential_to_dbc(k)), k);
    }
}

#[test]
fn generated_corpus_matches_its_layout() {
    use canslice::synth::{generate, SignalKind, SynthSpec};

    let mut spec = SynthSpec::reference();
    spec.duration_s = 30.0;
    let corpus = generate(&spec).unwrap();
    let traces = group_by_id(&corpus.trace);
    for m in &spec.messages {
        let t = &traces[&m.can_id()];
        for s in &m.signals {
            let f = compute_block_features(t, s.range()).unwrap();
            match s.kind {
                SignalKind::Counter => {
                    assert_eq!((f.flip_rate, f.distinct_ratio), (1.0, 1.0), "{}", s.name);
                }
                SignalKind::Unused => assert_eq!(f.flip_rate, 0.0, "{}", s.name),
                SignalKind::Dynamic => {
                    assert!(
                        f.flip_rate > 0.0 && f.flip_rate < 0.99,
                        "{} b={}",
                        s.name,
                        f.flip_rate
                    );
                }
                SignalKind::Switch | SignalKind::Checksum => {}
            }
        }
        // bytes made only of Unused bits never change
        for byte in 1..=m.dlc {
            let lo = (byte as u32 - 1) * 8 + 1;
            let unused = m
                .signals
                .iter()
                .filter(|s| s.kind == SignalKind::Unused)
                .any(|s| s.range().start <= lo && s.range().end >= lo + 7);
            if unused {
                assert_eq!(compute_byte_features(t, byte).unwrap().flip_rate, 0.0);
            }
        }
    }
}
