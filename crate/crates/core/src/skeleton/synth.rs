//! Synthetic skeleton corpus.
//!
//! Every class is a fixed set of joint-angle oscillations on the Kinect v2
//! tree, rendered by forward kinematics. Subjects differ in body shape,
//! placement, facing and motion amplitude. Elderly subjects act on a
//! dilated time axis (longer recordings, lower per-frame frequency), with
//! a reduced range of motion and a forward trunk lean.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::corpus::Corpus;
use super::format::{DatasetManifest, ManifestEntry};
use super::sequence::{AgeGroup, SequenceMeta, SkeletonSequence};
use super::topology::*;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Recordings per (subject, class).
    pub reps: usize,
    /// Adult recording length range in frames, inclusive.
    pub adult_frames: (usize, usize),
    /// Elderly time-dilation factor applied to duration and frequency.
    pub elderly_dilation: f64,
    /// Elderly motion amplitude relative to adults.
    pub elderly_amplitude: f64,
    /// Forward trunk lean of elderly subjects, degrees.
    pub elderly_lean_deg: f64,
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            reps: 1,
            adult_frames: (64, 96),
            elderly_dilation: 1.4,
            elderly_amplitude: 0.55,
            elderly_lean_deg: 25.0,
            noise_sigma: 0.005,
        }
    }
}

/// Degrees of freedom the class patterns can drive: (joint, axis), axis 0
/// is a pitch about x (forward/back), axis 2 a roll about z (sideways).
const DOFS: [(usize, usize); 13] = [
    (SPINE_MID, 0),
    (SPINE_MID, 2),
    (NECK, 0),
    (SHOULDER_LEFT, 0),
    (SHOULDER_LEFT, 2),
    (ELBOW_LEFT, 0),
    (SHOULDER_RIGHT, 0),
    (SHOULDER_RIGHT, 2),
    (ELBOW_RIGHT, 0),
    (HIP_LEFT, 0),
    (KNEE_LEFT, 0),
    (HIP_RIGHT, 0),
    (KNEE_RIGHT, 0),
];

const ACTIVE_DOFS: usize = 3;
const POSTURE_DOFS: usize = 2;

/// Rest offset of each joint from its parent (y up, metres).
fn rest_offset(joint: usize) -> [f64; 3] {
    match joint {
        SPINE_MID => [0.0, 0.25, 0.0],
        SPINE_SHOULDER => [0.0, 0.25, 0.0],
        NECK => [0.0, 0.08, 0.0],
        HEAD => [0.0, 0.12, 0.0],
        SHOULDER_LEFT => [-0.18, -0.03, 0.0],
        SHOULDER_RIGHT => [0.18, -0.03, 0.0],
        ELBOW_LEFT | ELBOW_RIGHT => [0.0, -0.28, 0.0],
        WRIST_LEFT | WRIST_RIGHT => [0.0, -0.25, 0.0],
        HAND_LEFT | HAND_RIGHT => [0.0, -0.08, 0.0],
        HAND_TIP_LEFT | HAND_TIP_RIGHT => [0.0, -0.07, 0.0],
        THUMB_LEFT => [0.03, -0.04, 0.02],
        THUMB_RIGHT => [-0.03, -0.04, 0.02],
        HIP_LEFT => [-0.09, -0.05, 0.0],
        HIP_RIGHT => [0.09, -0.05, 0.0],
        KNEE_LEFT | KNEE_RIGHT => [0.0, -0.42, 0.0],
        ANKLE_LEFT | ANKLE_RIGHT => [0.0, -0.40, 0.0],
        FOOT_LEFT | FOOT_RIGHT => [0.0, -0.05, 0.12],
        _ => [0.0, 0.0, 0.0],
    }
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| (0..3).map(|k| a[i][k] * v[k]).sum())
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone)]
struct Oscillation {
    dof: usize,
    amplitude: f64,
    cycles: f64,
    phase: f64,
}

#[derive(Debug, Clone)]
struct ClassPattern {
    oscillations: Vec<Oscillation>,
    posture: Vec<(usize, f64)>,
}

impl ClassPattern {
    fn draw(rng: &mut impl Rng) -> Self {
        let picked = index::sample(rng, DOFS.len(), ACTIVE_DOFS + POSTURE_DOFS).into_vec();
        let oscillations = picked[..ACTIVE_DOFS]
            .iter()
            .map(|&dof| Oscillation {
                dof,
                amplitude: rng.random_range(0.4..1.0),
                cycles: f64::from(rng.random_range(1u32..=4)),
                phase: rng.random_range(0.0..TAU),
            })
            .collect();
        let posture = picked[ACTIVE_DOFS..]
            .iter()
            .map(|&dof| (dof, rng.random_range(-0.6..0.6)))
            .collect();
        Self {
            oscillations,
            posture,
        }
    }
}

#[derive(Debug, Clone)]
struct Subject {
    id: u32,
    age: AgeGroup,
    amplitude: f64,
    bone_scale: [f64; KINECT_JOINTS],
    position: [f64; 3],
    yaw: f64,
}

fn render(
    pattern: &ClassPattern,
    subject: &Subject,
    cfg: &SynthConfig,
    action: usize,
    topology: &BoneTopology,
    rng: &mut impl Rng,
) -> Result<SkeletonSequence> {
    let elderly = subject.age == AgeGroup::Elderly;
    let (lo, hi) = cfg.adult_frames;
    let base_frames = rng.random_range(lo..=hi) as f64;
    let frames = if elderly {
        (base_frames * cfg.elderly_dilation).round() as usize
    } else {
        base_frames as usize
    };
    let amplitude = subject.amplitude * if elderly { cfg.elderly_amplitude } else { 1.0 };
    let lean = if elderly {
        cfg.elderly_lean_deg.to_radians()
    } else {
        0.0
    };
    let time_shift = rng.random_range(0.0..1.0);
    let tempo = rng.random_range(0.9..1.1);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).map_err(|e| Error::config(e.to_string()))?;

    let mut coords = Vec::with_capacity(frames * KINECT_JOINTS * 3);
    for t in 0..frames {
        // the same number of cycles spans the whole recording
        let phase_t = tempo * (t as f64 / frames as f64) + time_shift;
        let mut angles = [[0.0f64; 3]; KINECT_JOINTS];
        angles[SPINE_MID][0] += lean;
        for &(dof, offset) in &pattern.posture {
            let (j, axis) = DOFS[dof];
            angles[j][axis] += offset;
        }
        for o in &pattern.oscillations {
            let (j, axis) = DOFS[o.dof];
            angles[j][axis] += amplitude * o.amplitude * (TAU * o.cycles * phase_t + o.phase).sin();
        }

        let mut global = [IDENTITY; KINECT_JOINTS];
        let mut pos = [[0.0; 3]; KINECT_JOINTS];
        for &j in topology.order() {
            let local = mat_mul(&rot_x(angles[j][0]), &rot_z(angles[j][2]));
            match topology.parent(j) {
                None => {
                    global[j] = mat_mul(&rot_y(subject.yaw), &local);
                    pos[j] = subject.position;
                }
                Some(p) => {
                    let off = rest_offset(j).map(|v| v * subject.bone_scale[j]);
                    let d = mat_vec(&global[p], &off);
                    pos[j] = [0, 1, 2].map(|k| pos[p][k] + d[k]);
                    global[j] = mat_mul(&global[p], &local);
                }
            }
        }
        for p in pos {
            coords.extend(p.iter().map(|&v| v + noise.sample(rng)));
        }
    }
    SkeletonSequence::new(
        SequenceMeta {
            subject: subject.id,
            action,
            age: subject.age,
        },
        KINECT_JOINTS,
        3,
        1,
        coords,
    )
}

/// Generates `n_subjects × n_classes × reps` sequences. Subject ids run
/// `1..=n_subjects`; the first half are elderly.
pub fn synth_generate(
    n_subjects: usize,
    n_classes: usize,
    cfg: &SynthConfig,
    rng: &mut impl Rng,
) -> Result<Corpus> {
    if n_subjects == 0 || !n_subjects.is_multiple_of(2) {
        return Err(Error::config(format!("subject count must be even and positive, got {n_subjects}")));
    }
    if n_classes < 2 {
        return Err(Error::config("need at least two classes"));
    }
    if cfg.reps == 0 || cfg.adult_frames.0 < 2 || cfg.adult_frames.0 > cfg.adult_frames.1 {
        return Err(Error::config("reps must be positive and the frame range ordered, >= 2"));
    }
    if !(cfg.elderly_dilation > 0.0 && cfg.elderly_amplitude > 0.0) {
        return Err(Error::config("elderly dilation and amplitude must be positive"));
    }
    let topology = BoneTopology::kinect_v2();
    let patterns: Vec<ClassPattern> = (0..n_classes).map(|_| ClassPattern::draw(rng)).collect();
    let subjects: Vec<Subject> = (1..=n_subjects)
        .map(|id| {
            let mut bone_scale = [1.0; KINECT_JOINTS];
            for s in bone_scale.iter_mut() {
                *s = rng.random_range(0.9..1.1);
            }
            Subject {
                id: id as u32,
                age: if id <= n_subjects / 2 {
                    AgeGroup::Elderly
                } else {
                    AgeGroup::Adult
                },
                amplitude: rng.random_range(0.8..1.2),
                bone_scale,
                position: [rng.random_range(-1.0..1.0), 0.9, rng.random_range(2.0..3.5)],
                yaw: rng.random_range(-20f64..20.0).to_radians(),
            }
        })
        .collect();

    let mut entries = Vec::new();
    let mut sequences = Vec::new();
    for subject in &subjects {
        for (action, pattern) in patterns.iter().enumerate() {
            for rep in 0..cfg.reps {
                let seq = render(pattern, subject, cfg, action, &topology, rng)?;
                entries.push(ManifestEntry {
                    path: PathBuf::from(format!("s{:03}_a{:02}_r{:02}.skl", subject.id, action, rep)),
                    subject: subject.id,
                    action,
                    age: subject.age,
                    frames: seq.frames(),
                });
                sequences.push(seq);
            }
        }
    }
    Ok(Corpus {
        manifest: DatasetManifest::new(PathBuf::new(), entries)?,
        sequences,
    })
}
