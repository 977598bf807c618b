use crate::error::{Error, Result};

pub const SPINE_BASE: usize = 0;
pub const SPINE_MID: usize = 1;
pub const NECK: usize = 2;
pub const HEAD: usize = 3;
pub const SHOULDER_LEFT: usize = 4;
pub const ELBOW_LEFT: usize = 5;
pub const WRIST_LEFT: usize = 6;
pub const HAND_LEFT: usize = 7;
pub const SHOULDER_RIGHT: usize = 8;
pub const ELBOW_RIGHT: usize = 9;
pub const WRIST_RIGHT: usize = 10;
pub const HAND_RIGHT: usize = 11;
pub const HIP_LEFT: usize = 12;
pub const KNEE_LEFT: usize = 13;
pub const ANKLE_LEFT: usize = 14;
pub const FOOT_LEFT: usize = 15;
pub const HIP_RIGHT: usize = 16;
pub const KNEE_RIGHT: usize = 17;
pub const ANKLE_RIGHT: usize = 18;
pub const FOOT_RIGHT: usize = 19;
pub const SPINE_SHOULDER: usize = 20;
pub const HAND_TIP_LEFT: usize = 21;
pub const THUMB_LEFT: usize = 22;
pub const HAND_TIP_RIGHT: usize = 23;
pub const THUMB_RIGHT: usize = 24;

pub const KINECT_JOINTS: usize = 25;

const KINECT_PARENTS: [Option<usize>; KINECT_JOINTS] = [
    None,                 // SpineBase
    Some(SPINE_BASE),     // SpineMid
    Some(SPINE_SHOULDER), // Neck
    Some(NECK),           // Head
    Some(SPINE_SHOULDER), // ShoulderLeft
    Some(SHOULDER_LEFT),  // ElbowLeft
    Some(ELBOW_LEFT),     // WristLeft
    Some(WRIST_LEFT),     // HandLeft
    Some(SPINE_SHOULDER), // ShoulderRight
    Some(SHOULDER_RIGHT), // ElbowRight
    Some(ELBOW_RIGHT),    // WristRight
    Some(WRIST_RIGHT),    // HandRight
    Some(SPINE_BASE),     // HipLeft
    Some(HIP_LEFT),       // KneeLeft
    Some(KNEE_LEFT),      // AnkleLeft
    Some(ANKLE_LEFT),     // FootLeft
    Some(SPINE_BASE),     // HipRight
    Some(HIP_RIGHT),      // KneeRight
    Some(KNEE_RIGHT),     // AnkleRight
    Some(ANKLE_RIGHT),    // FootRight
    Some(SPINE_MID),      // SpineShoulder
    Some(HAND_LEFT),      // HandTipLeft
    Some(HAND_LEFT),      // ThumbLeft
    Some(HAND_RIGHT),     // HandTipRight
    Some(HAND_RIGHT),     // ThumbRight
];

/// Parent map of a skeleton tree rooted at joint 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoneTopology {
    parents: Vec<Option<usize>>,
    /// Joints in an order where every parent precedes its children.
    order: Vec<usize>,
}

impl BoneTopology {
    /// Validates that `parents` describes a single tree rooted at joint 0.
    pub fn new(parents: Vec<Option<usize>>) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::InvalidTopology("no joints".into()));
        }
        if parents[0].is_some() {
            return Err(Error::InvalidTopology("joint 0 must be the root".into()));
        }
        for (j, p) in parents.iter().enumerate().skip(1) {
            match p {
                None => return Err(Error::InvalidTopology(format!("joint {j} has no parent"))),
                Some(p) if *p >= n => {
                    return Err(Error::InvalidTopology(format!(
                        "joint {j} has parent {p} outside 0..{n}"
                    )))
                }
                Some(p) if *p == j => {
                    return Err(Error::InvalidTopology(format!("joint {j} is its own parent")))
                }
                _ => {}
            }
        }
        let mut children = vec![Vec::new(); n];
        for (j, p) in parents.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(j);
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![0];
        while let Some(j) = stack.pop() {
            order.push(j);
            stack.extend(children[j].iter().rev());
        }
        if order.len() != n {
            return Err(Error::InvalidTopology(
                "cycle detected: not every joint is reachable from the root".into(),
            ));
        }
        Ok(Self { parents, order })
    }

    /// Kinect v2 hierarchy with SpineBase as root: 25 joints, 24 bones.
    pub fn kinect_v2() -> Self {
        Self::new(KINECT_PARENTS.to_vec()).expect("static hierarchy is a tree")
    }

    /// Kinect hierarchy for `bodies` bodies, later roots attached to joint 0.
    pub fn kinect_bodies(bodies: usize) -> Self {
        let mut parents = Vec::with_capacity(KINECT_JOINTS * bodies);
        for b in 0..bodies {
            let offset = b * KINECT_JOINTS;
            parents.extend(KINECT_PARENTS.iter().enumerate().map(|(j, p)| match (j, p) {
                (0, None) if b > 0 => Some(SPINE_BASE),
                (_, p) => p.map(|p| p + offset),
            }));
        }
        Self::new(parents).expect("replicated hierarchy is a tree")
    }

    pub fn joints(&self) -> usize {
        self.parents.len()
    }

    pub fn bones(&self) -> usize {
        self.parents.len() - 1
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    /// Parent-before-child traversal order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `(child, parent)` for every non-root joint, in joint-index order.
    pub fn bone_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter_map(|(j, p)| p.map(|p| (j, p)))
    }

    /// Joints from the root down to `joint`, inclusive.
    pub fn path_from_root(&self, joint: usize) -> Vec<usize> {
        let mut path = vec![joint];
        let mut j = joint;
        while let Some(p) = self.parents[j] {
            path.push(p);
            j = p;
        }
        path.reverse();
        path
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinect_tree_shape() {
        let t = BoneTopology::kinect_v2();
        assert_eq!(t.joints(), 25);
        assert_eq!(t.bones(), 24);
        assert_eq!(t.path_from_root(HEAD), vec![SPINE_BASE, SPINE_MID, SPINE_SHOULDER, NECK, HEAD]);
        let pos: Vec<usize> = {
            let mut pos = vec![0; 25];
            for (i, &j) in t.order().iter().enumerate() {
                pos[j] = i;
            }
            pos
        };
        for (c, p) in t.bone_pairs() {
            assert!(pos[p] < pos[c]);
        }
    }

    #[test]
    fn two_bodies_form_one_tree() {
        let t = BoneTopology::kinect_bodies(2);
        assert_eq!(t.joints(), 50);
        assert_eq!(t.bones(), 49);
        assert_eq!(t.parent(25), Some(SPINE_BASE));
        assert_eq!(t.parent(26), Some(25));
    }

    #[test]
    fn rejects_non_trees() {
        assert!(BoneTopology::new(vec![Some(1), None]).is_err());
        assert!(BoneTopology::new(vec![None, None]).is_err());
        assert!(BoneTopology::new(vec![None, Some(2), Some(1)]).is_err());
        assert!(BoneTopology::new(vec![None, Some(5)]).is_err());
        assert!(BoneTopology::new(vec![None, Some(1)]).is_err());
    }
}
