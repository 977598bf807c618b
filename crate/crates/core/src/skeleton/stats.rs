use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::sequence::{AgeGroup, SkeletonSequence};
use super::streams::normalize;

/// Frame-length and motion statistics of a corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub sequences: usize,
    pub avg_frame_length: f64,
    pub var_frame_length: f64,
    pub avg_motion_diff: f64,
    pub var_motion_diff: f64,
}

/// Mean over consecutive frame pairs of the summed per-joint displacement
/// norms, measured on the normalized skeleton.
pub fn motion_differential(seq: &SkeletonSequence) -> Result<f64> {
    let n = normalize(seq)?;
    if n.frames() < 2 {
        return Ok(0.0);
    }
    let d = n.dims();
    let mut total = 0.0;
    for t in 0..n.frames() - 1 {
        let (a, b) = (n.frame(t), n.frame(t + 1));
        total += a
            .chunks_exact(d)
            .zip(b.chunks_exact(d))
            .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (y - x).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>();
    }
    Ok(total / (n.frames() - 1) as f64)
}

/// Population mean and variance.
fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

pub fn dataset_stats<'a>(
    sequences: impl IntoIterator<Item = &'a SkeletonSequence>,
    excluded_actions: &[usize],
) -> Result<DatasetStats> {
    let kept: Vec<&SkeletonSequence> = sequences
        .into_iter()
        .filter(|s| !excluded_actions.contains(&s.meta.action))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyDataset("no sequences left after exclusion".into()));
    }
    let lengths: Vec<f64> = kept.iter().map(|s| s.frames() as f64).collect();
    let motion = kept
        .iter()
        .map(|s| motion_differential(s))
        .collect::<Result<Vec<f64>>>()?;
    let (avg_frame_length, var_frame_length) = mean_var(&lengths);
    let (avg_motion_diff, var_motion_diff) = mean_var(&motion);
    Ok(DatasetStats {
        sequences: kept.len(),
        avg_frame_length,
        var_frame_length,
        avg_motion_diff,
        var_motion_diff,
    })
}

/// Statistics per age group; groups emptied by the exclusion are omitted.
pub fn dataset_stats_by_age(
    sequences: &[SkeletonSequence],
    excluded_actions: &[usize],
) -> Result<BTreeMap<AgeGroup, DatasetStats>> {
    let mut out = BTreeMap::new();
    for age in [AgeGroup::Elderly, AgeGroup::Adult] {
        let group = sequences.iter().filter(|s| s.meta.age == age);
        match dataset_stats(group, excluded_actions) {
            Ok(stats) => {
                out.insert(age, stats);
            }
            Err(Error::EmptyDataset(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset("no sequences left after exclusion".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::sequence::SequenceMeta;
    use crate::skeleton::topology::SPINE_SHOULDER;

    fn seq(frames: usize, action: usize, step: f64) -> SkeletonSequence {
        let meta = SequenceMeta {
            subject: 1,
            action,
            age: AgeGroup::Adult,
        };
        let mut coords = Vec::new();
        for t in 0..frames {
            for j in 0..25 {
                let y = if j == SPINE_SHOULDER { 1.0 } else { 0.0 };
                coords.extend_from_slice(&[step * t as f64, y, 0.0]);
            }
        }
        SkeletonSequence::new(meta, 25, 3, 1, coords).unwrap()
    }

    #[test]
    fn toy_lengths() {
        let s = [seq(10, 0, 0.0), seq(20, 1, 0.0)];
        let st = dataset_stats(&s, &[]).unwrap();
        assert_eq!(st.avg_frame_length, 15.0);
        assert_eq!(st.var_frame_length, 25.0);
        assert!(st.var_motion_diff >= 0.0);
    }

    #[test]
    fn exclusion_and_empty() {
        let s = [seq(10, 0, 0.0), seq(20, 1, 0.0)];
        let st = dataset_stats(&s, &[1]).unwrap();
        assert_eq!(st.sequences, 1);
        assert_eq!(st.avg_frame_length, 10.0);
        assert!(matches!(dataset_stats(&s, &[0, 1]), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn translation_speed_sums_over_joints() {
        // every joint moves 0.1 per frame along x, torso length 1
        let m = motion_differential(&seq(5, 0, 0.1)).unwrap();
        assert!((m - 25.0 * 0.1).abs() < 1e-12);
    }
}
