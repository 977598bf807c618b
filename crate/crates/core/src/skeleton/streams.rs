use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::sequence::SkeletonSequence;
use super::topology::{BoneTopology, SPINE_BASE, SPINE_SHOULDER};

/// Average SpineBase→SpineShoulder distance of the first body.
pub fn torso_length(seq: &SkeletonSequence) -> Result<f64> {
    if seq.joints() <= SPINE_SHOULDER {
        return Err(Error::config(format!(
            "torso length needs the Kinect joint layout, got {} joints",
            seq.joints()
        )));
    }
    let total: f64 = (0..seq.frames())
        .map(|t| dist(seq.point(t, SPINE_BASE), seq.point(t, SPINE_SHOULDER)))
        .sum();
    Ok(total / seq.frames() as f64)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Translates SpineBase of frame 0 to the origin and scales the average
/// torso length to 1. Absent (all-zero) bodies stay zero.
pub fn normalize(seq: &SkeletonSequence) -> Result<SkeletonSequence> {
    let torso = torso_length(seq)?;
    if torso.is_nan() || torso <= 0.0 {
        return Err(Error::Degenerate("zero torso length".into()));
    }
    let origin = seq.point(0, SPINE_BASE).to_vec();
    let dims = seq.dims();
    let body_width = seq.joints() * dims;
    let mut coords = seq.coords().to_vec();
    for t in 0..seq.frames() {
        for b in 0..seq.bodies() {
            if b > 0 && !seq.body_present(t, b) {
                continue;
            }
            let start = t * seq.frame_width() + b * body_width;
            for p in coords[start..start + body_width].chunks_exact_mut(dims) {
                for (v, o) in p.iter_mut().zip(&origin) {
                    *v = (*v - o) / torso;
                }
            }
        }
    }
    seq.with_coords(coords)
}

/// Column `t` holds `frame[t + gap] − frame[t]`, flattened joint-major.
pub fn temporal_diff(seq: &SkeletonSequence, gap: usize) -> Result<Tensor> {
    let t = seq.frames();
    if gap == 0 || gap >= t {
        return Err(Error::ShorterThanGap { length: t, gap });
    }
    let w = seq.frame_width();
    let cols = t - gap;
    let mut data = vec![0.0; w * cols];
    for c in 0..cols {
        let (a, b) = (seq.frame(c), seq.frame(c + gap));
        for r in 0..w {
            data[r * cols + c] = b[r] - a[r];
        }
    }
    Tensor::new(vec![w, cols], data)
}

/// The coordinate map itself: `[(J·D) × T]`.
pub fn raw_map(seq: &SkeletonSequence) -> Result<Tensor> {
    let (t, w) = (seq.frames(), seq.frame_width());
    let mut data = vec![0.0; w * t];
    for c in 0..t {
        for (r, &v) in seq.frame(c).iter().enumerate() {
            data[r * t + c] = v;
        }
    }
    Tensor::new(vec![w, t], data)
}

/// Bone vectors `position(j) − position(parent(j))` for every non-root
/// joint, rows ordered by joint index: `[((J−1)·D) × T]`.
pub fn spatial_diff(seq: &SkeletonSequence, topology: &BoneTopology) -> Result<Tensor> {
    if topology.joints() != seq.total_joints() {
        return Err(Error::InvalidTopology(format!(
            "topology has {} joints, sequence has {}",
            topology.joints(),
            seq.total_joints()
        )));
    }
    let (t, d) = (seq.frames(), seq.dims());
    let rows = topology.bones() * d;
    let mut data = vec![0.0; rows * t];
    for c in 0..t {
        for (b, (child, parent)) in topology.bone_pairs().enumerate() {
            let (pc, pp) = (seq.point(c, child), seq.point(c, parent));
            for k in 0..d {
                data[(b * d + k) * t + c] = pc[k] - pp[k];
            }
        }
    }
    Tensor::new(vec![rows, t], data)
}

/// Raw, short-gap, long-gap and bone streams of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FourStreamInput {
    pub raw: Tensor,
    pub short_diff: Tensor,
    pub long_diff: Tensor,
    pub spatial_diff: Tensor,
}

impl FourStreamInput {
    pub fn streams(&self) -> [&Tensor; 4] {
        [&self.raw, &self.short_diff, &self.long_diff, &self.spatial_diff]
    }

    /// Time extents of the four streams.
    pub fn lengths(&self) -> [usize; 4] {
        self.streams().map(|s| s.shape()[1])
    }
}

/// Builds the four streams of an already normalized sequence.
pub fn four_streams(
    seq: &SkeletonSequence,
    short_gap: usize,
    long_gap: usize,
    topology: &BoneTopology,
) -> Result<FourStreamInput> {
    if short_gap == 0 || short_gap >= long_gap {
        return Err(Error::config(format!(
            "gaps must satisfy 1 <= short ({short_gap}) < long ({long_gap})"
        )));
    }
    Ok(FourStreamInput {
        raw: raw_map(seq)?,
        short_diff: temporal_diff(seq, short_gap)?,
        long_diff: temporal_diff(seq, long_gap)?,
        spatial_diff: spatial_diff(seq, topology)?,
    })
}

/// Randomly resamples to `length` frames while keeping temporal order.
///
/// Long sequences get `length` distinct frames; short ones are drawn with
/// replacement and sorted, so frames may repeat but never reorder.
pub fn sample_length(
    seq: &SkeletonSequence,
    length: usize,
    rng: &mut impl Rng,
) -> Result<SkeletonSequence> {
    if length < 2 {
        return Err(Error::config(format!("sample length must be >= 2, got {length}")));
    }
    let t = seq.frames();
    let mut idx: Vec<usize> = if t >= length {
        index::sample(rng, t, length).into_vec()
    } else {
        (0..length).map(|_| rng.random_range(0..t)).collect()
    };
    idx.sort_unstable();
    seq.select_frames(&idx)
}

/// Deterministic, evenly spaced frame indices: `round(i·(T−1)/(L−1))`.
pub fn evenly_spaced_indices(frames: usize, length: usize) -> Vec<usize> {
    if length == 1 {
        return vec![0];
    }
    let span = (frames - 1) as f64;
    (0..length)
        .map(|i| (i as f64 * span / (length - 1) as f64).round() as usize)
        .collect()
}

pub fn resample_evenly(seq: &SkeletonSequence, length: usize) -> Result<SkeletonSequence> {
    if length == 0 {
        return Err(Error::config("resample length must be positive"));
    }
    seq.select_frames(&evenly_spaced_indices(seq.frames(), length))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::sequence::{AgeGroup, SequenceMeta};
    use crate::skeleton::topology::HEAD;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn meta() -> SequenceMeta {
        SequenceMeta {
            subject: 1,
            action: 0,
            age: AgeGroup::Adult,
        }
    }

    fn random_seq(frames: usize, rng: &mut ChaCha8Rng) -> SkeletonSequence {
        let coords = (0..frames * 75).map(|_| rng.random_range(-1.0..1.0)).collect();
        SkeletonSequence::new(meta(), 25, 3, 1, coords).unwrap()
    }

    /// Each joint moves with its own constant velocity.
    fn linear_seq(frames: usize) -> (SkeletonSequence, Vec<f64>) {
        let vel: Vec<f64> = (0..75).map(|i| 0.01 * (i as f64 - 37.0)).collect();
        let coords = (0..frames)
            .flat_map(|t| (0..75).map(move |i| 0.3 * i as f64).zip(vel.clone()).map(move |(p, v)| p + v * t as f64))
            .collect();
        (SkeletonSequence::new(meta(), 25, 3, 1, coords).unwrap(), vel)
    }

    #[test]
    fn normalize_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_seq(12, &mut rng);
        let n = normalize(&s).unwrap();
        assert!((torso_length(&n).unwrap() - 1.0).abs() < 1e-10);
        assert!(n.point(0, SPINE_BASE).iter().all(|v| v.abs() < 1e-15));

        let again = normalize(&n).unwrap();
        let diff = again.coords().iter().zip(n.coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);

        let scaled = s.with_coords(s.coords().iter().map(|v| 5.0 * v).collect()).unwrap();
        let ns = normalize(&scaled).unwrap();
        let diff = ns.coords().iter().zip(n.coords()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn normalize_rejects_zero_torso() {
        let s = SkeletonSequence::new(meta(), 25, 3, 1, vec![1.0; 150]).unwrap();
        assert!(matches!(normalize(&s), Err(Error::Degenerate(_))));
    }

    #[test]
    fn temporal_diff_examples() {
        let c = SkeletonSequence::new(meta(), 25, 3, 1, vec![0.7; 750]).unwrap();
        let d = temporal_diff(&c, 3).unwrap();
        assert_eq!(d.shape(), &[75, 7]);
        assert!(d.data().iter().all(|&v| v == 0.0));
        assert!(matches!(temporal_diff(&c, 10), Err(Error::ShorterThanGap { .. })));

        let (s, vel) = linear_seq(10);
        let g = 4;
        let d = temporal_diff(&s, g).unwrap();
        for r in 0..75 {
            for c in 0..6 {
                assert!((d.at2(r, c) - g as f64 * vel[r]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spatial_diff_examples() {
        let topo = BoneTopology::kinect_v2();
        let zero = SkeletonSequence::new(meta(), 25, 3, 1, vec![0.0; 75 * 2]).unwrap();
        let b = spatial_diff(&zero, &topo).unwrap();
        assert_eq!(b.shape(), &[72, 2]);
        assert!(b.data().iter().all(|&v| v == 0.0));

        // each child one unit above its parent
        let depth: Vec<usize> = (0..25).map(|j| topo.path_from_root(j).len() - 1).collect();
        let coords: Vec<f64> = depth.iter().flat_map(|&d| [0.0, d as f64, 0.0]).collect();
        let chain = SkeletonSequence::new(meta(), 25, 3, 1, coords).unwrap();
        let b = spatial_diff(&chain, &topo).unwrap();
        for bone in 0..24 {
            assert_eq!([b.at2(3 * bone, 0), b.at2(3 * bone + 1, 0), b.at2(3 * bone + 2, 0)], [0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn spatial_diff_telescopes_to_head() {
        let topo = BoneTopology::kinect_v2();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_seq(5, &mut rng);
        let b = spatial_diff(&s, &topo).unwrap();
        let bone_row: Vec<Option<usize>> = {
            let mut rows = vec![None; 25];
            for (i, (c, _)) in topo.bone_pairs().enumerate() {
                rows[c] = Some(i);
            }
            rows
        };
        for t in 0..5 {
            for d in 0..3 {
                let sum: f64 = topo.path_from_root(HEAD)[1..]
                    .iter()
                    .map(|&j| b.at2(bone_row[j].unwrap() * 3 + d, t))
                    .sum();
                let direct = s.point(t, HEAD)[d] - s.point(t, SPINE_BASE)[d];
                assert!((sum - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spatial_diff_rejects_wrong_topology() {
        let s = SkeletonSequence::new(meta(), 3, 3, 1, vec![0.0; 9]).unwrap();
        assert!(spatial_diff(&s, &BoneTopology::kinect_v2()).is_err());
    }

    #[test]
    fn four_stream_lengths_and_constant_input() {
        let topo = BoneTopology::kinect_v2();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_seq(32, &mut rng);
        let f = four_streams(&s, 1, 5, &topo).unwrap();
        assert_eq!(f.lengths(), [32, 31, 27, 32]);
        assert!(four_streams(&s, 5, 5, &topo).is_err());

        let frame: Vec<f64> = (0..75).map(|i| i as f64 * 0.1).collect();
        let c = SkeletonSequence::new(meta(), 25, 3, 1, frame.repeat(8)).unwrap();
        let f = four_streams(&c, 1, 5, &topo).unwrap();
        assert!(f.short_diff.data().iter().chain(f.long_diff.data()).all(|&v| v == 0.0));
        for r in 0..75 {
            assert!((0..8).all(|t| f.raw.at2(r, t) == frame[r]));
        }
        for r in 0..72 {
            assert!((0..8).all(|t| f.spatial_diff.at2(r, t) == f.spatial_diff.at2(r, 0)));
        }
    }

    #[test]
    fn linear_motion_long_over_short_ratio() {
        let (s, _) = linear_seq(20);
        let f = four_streams(&s, 2, 6, &BoneTopology::kinect_v2()).unwrap();
        for r in 0..75 {
            for c in 0..14 {
                assert!((f.long_diff.at2(r, c) - 3.0 * f.short_diff.at2(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_seq(100, &mut rng);
        let frame_index = |seq: &SkeletonSequence, t: usize| {
            (0..100).find(|&k| s.frame(k) == seq.frame(t)).unwrap()
        };
        let out = sample_length(&s, 32, &mut rng).unwrap();
        let idx: Vec<usize> = (0..32).map(|t| frame_index(&out, t)).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));

        let full = sample_length(&s, 100, &mut rng).unwrap();
        assert_eq!(full, s);

        let short = random_seq(10, &mut rng);
        let up = sample_length(&short, 25, &mut rng).unwrap();
        assert_eq!(up.frames(), 25);
        let idx: Vec<usize> = (0..25)
            .map(|t| (0..10).find(|&k| short.frame(k) == up.frame(t)).unwrap())
            .collect();
        assert!(idx.windows(2).all(|w| w[0] <= w[1]));

        let a = sample_length(&s, 40, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_length(&s, 40, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_length(&s, 1, &mut rng).is_err());
    }

    #[test]
    fn even_indices() {
        assert_eq!(evenly_spaced_indices(10, 4), vec![0, 3, 6, 9]);
        assert_eq!(evenly_spaced_indices(3, 5), vec![0, 1, 1, 2, 2]);
        assert_eq!(evenly_spaced_indices(7, 7), (0..7).collect::<Vec<_>>());
    }
}
