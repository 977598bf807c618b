use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use fsacnn::model::fuse_scores_weighted;
use fsacnn::numerics::{Graph, Tensor};
use fsacnn::skeleton::{
    evenly_spaced_indices, format_sequence, normalize, parse_sequence, rotate_vertical,
    sample_length, torso_length, AgeGroup, DatasetManifest, ManifestEntry, SequenceMeta,
    SkeletonSequence,
};
use fsacnn::training::split_cross_subject;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const JOINTS: usize = 25;

fn meta() -> SequenceMeta {
    SequenceMeta {
        subject: 4,
        action: 2,
        age: AgeGroup::Elderly,
    }
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Channels, time, kernel and the flat input and kernel data.
fn conv_case() -> impl Strategy<Value = (usize, usize, usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..4, 1usize..4, 1usize..5, 0usize..8).prop_flat_map(|(c_in, c_out, k, extra)| {
        let t = k + extra;
        (
            Just(c_in),
            Just(c_out),
            Just(t),
            Just(k),
            prop::collection::vec(-2.0..2.0f64, c_in * t),
            prop::collection::vec(-2.0..2.0f64, c_out * c_in * k),
        )
    })
}

fn skeleton(frames: usize) -> impl Strategy<Value = SkeletonSequence> {
    prop::collection::vec(-1.0..1.0f64, frames * JOINTS * 3)
        .prop_map(|c| SkeletonSequence::new(meta(), JOINTS, 3, 1, c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_matches_direct_sum((c_in, c_out, t, k, x, w) in conv_case()) {
        let mut g = Graph::new();
        let xi = g.input(tensor(&[c_in, t], x.clone()));
        let wi = g.input(tensor(&[c_out, c_in, k], w.clone()));
        let y = g.conv1d(xi, wi, 1, 0).unwrap();
        let out = g.value(y);
        let t_out = t - k + 1;
        prop_assert_eq!(out.shape(), &[c_out, t_out]);
        for o in 0..c_out {
            for s in 0..t_out {
                let mut direct = 0.0;
                for c in 0..c_in {
                    for j in 0..k {
                        direct += w[(o * c_in + c) * k + j] * x[c * t + s + j];
                    }
                }
                prop_assert!((out.at2(o, s) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn max_pool_ignores_frame_order(
        c in 1usize..5,
        cols in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 1..10),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let t = cols.len();
        let build = |order: &[usize]| {
            let data = (0..c)
                .flat_map(|ch| order.iter().map(move |&s| (ch, s)))
                .map(|(ch, s)| cols[s][ch % 4] * (ch + 1) as f64)
                .collect();
            let mut g = Graph::new();
            let x = g.input(tensor(&[c, t], data));
            let p = g.global_max_pool_time(x).unwrap();
            g.value(p).clone()
        };
        let mut order: Vec<usize> = (0..t).collect();
        let reference = build(&order);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(reference, build(&order));
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_one_hot(
        logits in prop::collection::vec(-30.0..30.0f64, 2..12),
        label_seed in any::<usize>(),
    ) {
        let label = label_seed % logits.len();
        let mut g = Graph::new();
        let z = g.param(tensor(&[logits.len()], logits.clone()));
        let loss = g.softmax_cross_entropy(z, label).unwrap();
        let grads = g.backward(loss).unwrap();
        let dz = grads.get(z).unwrap().data();
        prop_assert!(dz.iter().sum::<f64>().abs() < 1e-12);
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = logits.iter().map(|v| (v - m).exp()).sum();
        for (i, (&d, &v)) in dz.iter().zip(&logits).enumerate() {
            let expected = (v - m).exp() / norm - if i == label { 1.0 } else { 0.0 };
            prop_assert!((d - expected).abs() < 1e-12);
        }
        prop_assert!(g.value(loss).data()[0] >= 0.0);
    }

    #[test]
    fn fused_scores_are_log_probabilities(
        pair in (2usize..8).prop_flat_map(|n| (
            prop::collection::vec(-20.0..20.0f64, n),
            prop::collection::vec(-20.0..20.0f64, n),
        )),
        w in 0.0..=1.0f64,
    ) {
        let (a, b) = pair;
        let n = a.len();
        let fused = fuse_scores_weighted(&tensor(&[n], a), &tensor(&[n], b), w).unwrap();
        let total: f64 = fused.data().iter().map(|v| v.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_subject_split_partitions_subjects(ids in prop::collection::btree_set(1u32..200, 3..60)) {
        prop_assume!(ids.iter().any(|i| i % 3 == 0) && ids.iter().any(|i| i % 3 != 0));
        let entries = ids
            .iter()
            .map(|&id| ManifestEntry {
                path: PathBuf::from(format!("s{id}.skel")),
                subject: id,
                action: 0,
                age: if id <= 50 { AgeGroup::Elderly } else { AgeGroup::Adult },
                frames: 10,
            })
            .collect();
        let manifest = DatasetManifest::new(PathBuf::new(), entries).unwrap();
        let split = split_cross_subject(&manifest).unwrap();
        prop_assert!(split.train.is_disjoint(&split.test));
        let union: BTreeSet<u32> = split.train.union(&split.test).copied().collect();
        prop_assert_eq!(union, ids);
        prop_assert!(split.test.iter().all(|i| i % 3 == 0));
    }

    #[test]
    fn evenly_spaced_indices_are_ordered_and_span(frames in 1usize..300, length in 2usize..200) {
        let idx = evenly_spaced_indices(frames, length);
        prop_assert_eq!(idx.len(), length);
        prop_assert_eq!(idx[0], 0);
        prop_assert_eq!(*idx.last().unwrap(), frames - 1);
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sampled_frames_keep_their_order(frames in 1usize..60, length in 2usize..90, seed in any::<u64>()) {
        // Joint 0's x coordinate carries the source frame number.
        let mut coords = vec![0.0; frames * JOINTS * 3];
        for t in 0..frames {
            coords[t * JOINTS * 3] = t as f64;
        }
        let seq = SkeletonSequence::new(meta(), JOINTS, 3, 1, coords).unwrap();
        let out = sample_length(&seq, length, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(out.frames(), length);
        let src: Vec<f64> = (0..length).map(|t| out.frame(t)[0]).collect();
        prop_assert!(src.windows(2).all(|w| w[0] <= w[1]));
        if frames >= length {
            prop_assert!(src.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn vertical_rotation_is_rigid(seq in skeleton(3), angle in -3.2..3.2f64) {
        let r = rotate_vertical(&seq, angle).unwrap();
        for t in 0..seq.frames() {
            for j in 0..JOINTS {
                prop_assert!((seq.point(t, j)[1] - r.point(t, j)[1]).abs() < 1e-12);
            }
        }
        let (a, b) = (torso_length(&seq).unwrap(), torso_length(&r).unwrap());
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a));
    }

    #[test]
    fn normalization_ignores_translation(seq in skeleton(4), shift in prop::array::uniform3(-10.0..10.0f64)) {
        let moved: Vec<f64> = seq
            .coords()
            .chunks_exact(3)
            .flat_map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
            .collect();
        let moved = seq.with_coords(moved).unwrap();
        let (a, b) = (normalize(&seq).unwrap(), normalize(&moved).unwrap());
        for (x, y) in a.coords().iter().zip(b.coords()) {
            prop_assert!((x - y).abs() < 1e-8, "{} vs {}", x, y);
        }
    }

    #[test]
    fn sequence_text_round_trips(seq in skeleton(2)) {
        let text = format_sequence(&seq);
        let back = parse_sequence(&text, Path::new("p.skel")).unwrap();
        prop_assert_eq!(back, seq);
    }
}
