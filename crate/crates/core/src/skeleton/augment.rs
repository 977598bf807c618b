use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::sequence::SkeletonSequence;
use super::topology::{BoneTopology, SPINE_BASE};

/// Rotation, body-shape and noise augmentation ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Rotation about the vertical (y) axis drawn from ±this many degrees.
    pub rotation_deg: f64,
    /// Per-bone length factor drawn uniformly from this range.
    pub bone_scale: (f64, f64),
    /// Standard deviation of the i.i.d. coordinate noise.
    pub noise_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_deg: 30.0,
            bone_scale: (0.9, 1.1),
            noise_sigma: 0.01,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            bone_scale: (1.0, 1.0),
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bone_scale;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config(format!(
                "bone scale range must be positive and ordered, got [{lo}, {hi}]"
            )));
        }
        if !(self.rotation_deg >= 0.0 && self.noise_sigma >= 0.0) {
            return Err(Error::config("rotation range and noise must be non-negative"));
        }
        Ok(())
    }
}

/// Rotates all frames about the vertical axis through frame 0's SpineBase.
pub fn rotate_vertical(seq: &SkeletonSequence, angle_rad: f64) -> Result<SkeletonSequence> {
    if seq.dims() != 3 {
        return Err(Error::config("vertical rotation needs 3-D coordinates"));
    }
    let pivot = seq.point(0, SPINE_BASE).to_vec();
    let (s, c) = angle_rad.sin_cos();
    let mut coords = seq.coords().to_vec();
    let width = seq.joints() * 3;
    for t in 0..seq.frames() {
        for b in 0..seq.bodies() {
            if b > 0 && !seq.body_present(t, b) {
                continue;
            }
            let start = t * seq.frame_width() + b * width;
            for p in coords[start..start + width].chunks_exact_mut(3) {
                let (x, z) = (p[0] - pivot[0], p[2] - pivot[2]);
                p[0] = pivot[0] + c * x + s * z;
                p[2] = pivot[2] - s * x + c * z;
            }
        }
    }
    seq.with_coords(coords)
}

/// Scales every bone by its own factor, rebuilding positions from the root
/// down so children follow their parents.
pub fn scale_bones(
    seq: &SkeletonSequence,
    topology: &BoneTopology,
    factors: &[f64],
) -> Result<SkeletonSequence> {
    if topology.joints() != seq.total_joints() || factors.len() != topology.joints() {
        return Err(Error::InvalidTopology(format!(
            "topology/factors sized {}/{} for {} joints",
            topology.joints(),
            factors.len(),
            seq.total_joints()
        )));
    }
    let d = seq.dims();
    let mut coords = seq.coords().to_vec();
    for t in 0..seq.frames() {
        let base = t * seq.frame_width();
        for &j in topology.order() {
            let Some(p) = topology.parent(j) else { continue };
            // links between bodies keep their length, and absent bodies stay zero
            if j % seq.joints() == 0 || !seq.body_present(t, j / seq.joints()) {
                continue;
            }
            for k in 0..d {
                let bone = seq.point(t, j)[k] - seq.point(t, p)[k];
                coords[base + j * d + k] = coords[base + p * d + k] + factors[j] * bone;
            }
        }
    }
    seq.with_coords(coords)
}

/// Random rotation about the vertical axis, per-bone length scaling and
/// Gaussian coordinate noise, in that order.
pub fn augment(
    seq: &SkeletonSequence,
    cfg: &AugmentConfig,
    topology: &BoneTopology,
    rng: &mut impl Rng,
) -> Result<SkeletonSequence> {
    cfg.validate()?;
    let mut out = seq.clone();
    if cfg.rotation_deg > 0.0 {
        let r = cfg.rotation_deg.to_radians();
        out = rotate_vertical(&out, rng.random_range(-r..=r))?;
    }
    let (lo, hi) = cfg.bone_scale;
    if lo != 1.0 || hi != 1.0 {
        let factors: Vec<f64> = (0..topology.joints())
            .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
            .collect();
        out = scale_bones(&out, topology, &factors)?;
    }
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::config(e.to_string()))?;
        let coords = out.coords().iter().map(|&v| v + noise.sample(rng)).collect();
        out = out.with_coords(coords)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::sequence::{AgeGroup, SequenceMeta};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_seq(frames: usize, rng: &mut ChaCha8Rng) -> SkeletonSequence {
        let meta = SequenceMeta {
            subject: 2,
            action: 1,
            age: AgeGroup::Elderly,
        };
        let coords = (0..frames * 75).map(|_| rng.random_range(-1.0..1.0)).collect();
        SkeletonSequence::new(meta, 25, 3, 1, coords).unwrap()
    }

    fn pairwise(seq: &SkeletonSequence, t: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for a in 0..25 {
            for b in a + 1..25 {
                let (p, q) = (seq.point(t, a), seq.point(t, b));
                out.push(p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt());
            }
        }
        out
    }

    #[test]
    fn identity_config_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_seq(6, &mut rng);
        let out = augment(&s, &AugmentConfig::identity(), &BoneTopology::kinect_v2(), &mut rng).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn rotation_is_an_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_seq(6, &mut rng);
        let cfg = AugmentConfig {
            rotation_deg: 90.0,
            ..AugmentConfig::identity()
        };
        let out = augment(&s, &cfg, &BoneTopology::kinect_v2(), &mut rng).unwrap();
        assert_ne!(out, s);
        for t in 0..6 {
            let (a, b) = (pairwise(&s, t), pairwise(&out, t));
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-10));
            // vertical coordinates untouched
            assert!((0..25).all(|j| s.point(t, j)[1] == out.point(t, j)[1]));
        }
    }

    #[test]
    fn uniform_bone_scale_multiplies_every_bone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_seq(4, &mut rng);
        let topo = BoneTopology::kinect_v2();
        let cfg = AugmentConfig {
            bone_scale: (1.3, 1.3),
            ..AugmentConfig::identity()
        };
        let out = augment(&s, &cfg, &topo, &mut rng).unwrap();
        let len = |q: &SkeletonSequence, t, c, p| {
            let (a, b): (&[f64], &[f64]) = (q.point(t, c), q.point(t, p));
            a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        for t in 0..4 {
            for (c, p) in topo.bone_pairs() {
                assert!((len(&out, t, c, p) - 1.3 * len(&s, t, c, p)).abs() < 1e-12);
            }
            assert_eq!(out.point(t, SPINE_BASE), s.point(t, SPINE_BASE));
        }
    }

    #[test]
    fn rejects_non_positive_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_seq(2, &mut rng);
        for range in [(0.0, 1.0), (-1.0, 1.0), (1.2, 1.1)] {
            let cfg = AugmentConfig {
                bone_scale: range,
                ..AugmentConfig::identity()
            };
            assert!(augment(&s, &cfg, &BoneTopology::kinect_v2(), &mut rng).is_err());
        }
    }

    #[test]
    fn noise_has_requested_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_seq(200, &mut rng);
        let cfg = AugmentConfig {
            noise_sigma: 0.05,
            ..AugmentConfig::identity()
        };
        let out = augment(&s, &cfg, &BoneTopology::kinect_v2(), &mut rng).unwrap();
        let d: Vec<f64> = out.coords().iter().zip(s.coords()).map(|(a, b)| a - b).collect();
        let sd = (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt();
        assert!((sd / 0.05 - 1.0).abs() < 0.05, "{sd}");
    }
}
