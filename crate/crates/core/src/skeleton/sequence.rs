use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Elderly,
    Adult,
}

impl AgeGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::Elderly => "elderly",
            AgeGroup::Adult => "adult",
        }
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgeGroup {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "elderly" => Ok(AgeGroup::Elderly),
            "adult" => Ok(AgeGroup::Adult),
            other => Err(format!("unknown age group {other:?}")),
        }
    }
}

/// Identity of a recording, independent of its coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceMeta {
    pub subject: u32,
    pub action: usize,
    pub age: AgeGroup,
}

/// `T` frames of `J` joints in `D` dimensions, for one or two bodies.
///
/// Coordinates are stored frame-major: frame `t`, joint `j` (over all
/// bodies), dimension `d` lives at `(t·J_total + j)·D + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub meta: SequenceMeta,
    joints: usize,
    dims: usize,
    bodies: usize,
    frames: usize,
    coords: Vec<f64>,
}

impl SkeletonSequence {
    /// `joints` counts one body; a two-body sequence holds `2·joints`
    /// points per frame, absent bodies zero-filled.
    pub fn new(
        meta: SequenceMeta,
        joints: usize,
        dims: usize,
        bodies: usize,
        coords: Vec<f64>,
    ) -> Result<Self> {
        if joints == 0 || dims == 0 {
            return Err(Error::config("joints and dims must be positive"));
        }
        if !(1..=2).contains(&bodies) {
            return Err(Error::config(format!("bodies must be 1 or 2, got {bodies}")));
        }
        let per_frame = joints * dims * bodies;
        if coords.is_empty() || !coords.len().is_multiple_of(per_frame) {
            return Err(Error::InvalidShape {
                shape: vec![coords.len()],
                reason: format!("need a positive multiple of {per_frame} coordinates"),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("skeleton coordinates".into()));
        }
        Ok(Self {
            meta,
            joints,
            dims,
            bodies,
            frames: coords.len() / per_frame,
            coords,
        })
    }

    /// Same metadata and layout with new coordinates.
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        Self::new(self.meta, self.joints, self.dims, self.bodies, coords)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Joints per body.
    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn total_joints(&self) -> usize {
        self.joints * self.bodies
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn bodies(&self) -> usize {
        self.bodies
    }

    /// Values per frame: `J_total · D`.
    pub fn frame_width(&self) -> usize {
        self.total_joints() * self.dims
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.frame_width();
        &self.coords[t * w..(t + 1) * w]
    }

    pub fn point(&self, t: usize, joint: usize) -> &[f64] {
        let start = (t * self.total_joints() + joint) * self.dims;
        &self.coords[start..start + self.dims]
    }

    /// Whether body `b` carries data in frame `t` (absent bodies are all zero).
    pub fn body_present(&self, t: usize, b: usize) -> bool {
        let w = self.joints * self.dims;
        let frame = self.frame(t);
        frame[b * w..(b + 1) * w].iter().any(|&v| v != 0.0)
    }

    /// Frames at `indices`, in the given order.
    pub fn select_frames(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.frame_width());
        for &t in indices {
            if t >= self.frames {
                return Err(Error::config(format!(
                    "frame index {t} out of range for {} frames",
                    self.frames
                )));
            }
            coords.extend_from_slice(self.frame(t));
        }
        self.with_coords(coords)
    }

    /// Drops every dimension past the first two: the orthographic `(x, y)`
    /// projection onto the vertical image plane.
    pub fn project_xy(&self) -> Result<Self> {
        if self.dims < 2 {
            return Err(Error::config("projection needs at least two dimensions"));
        }
        let coords = self
            .coords
            .chunks_exact(self.dims)
            .flat_map(|p| [p[0], p[1]])
            .collect();
        Self::new(self.meta, self.joints, 2, self.bodies, coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> SequenceMeta {
        SequenceMeta {
            subject: 1,
            action: 0,
            age: AgeGroup::Adult,
        }
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(SkeletonSequence::new(meta(), 2, 3, 1, vec![0.0; 5]).is_err());
        assert!(SkeletonSequence::new(meta(), 2, 3, 1, vec![]).is_err());
        assert!(SkeletonSequence::new(meta(), 2, 3, 3, vec![0.0; 18]).is_err());
        assert!(SkeletonSequence::new(meta(), 1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn projection_keeps_x_and_y() {
        let s = SkeletonSequence::new(meta(), 2, 3, 1, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let p = s.project_xy().unwrap();
        assert_eq!(p.dims(), 2);
        assert_eq!(p.coords(), &[1., 2., 4., 5.]);
    }

    #[test]
    fn two_body_presence() {
        let mut c = vec![0.0; 2 * 2 * 3];
        c[0] = 1.0;
        let s = SkeletonSequence::new(meta(), 2, 3, 2, c).unwrap();
        assert_eq!(s.total_joints(), 4);
        assert!(s.body_present(0, 0));
        assert!(!s.body_present(0, 1));
    }
}
