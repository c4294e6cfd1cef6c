//! Articulated skeleton, poses and forward kinematics.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::{self, check_rotation};

/// Joint names of the default 24-joint layout, in topological order.
pub const SMPL_JOINT_NAMES: [&str; 24] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

/// Parents of the default 24-joint layout.
pub const SMPL_PARENTS: [Option<usize>; 24] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

/// Rest joint positions (meters, y up, +x to the body's left, soles at y = 0)
/// of the default layout in a T-pose.
pub const TEMPLATE_JOINTS: [[f64; 3]; 24] = [
    [0.0, 0.86, 0.0],
    [0.09, 0.75, 0.0],
    [-0.09, 0.75, 0.0],
    [0.0, 0.98, 0.0],
    [0.09, 0.40, 0.0],
    [-0.09, 0.40, 0.0],
    [0.0, 1.10, 0.0],
    [0.09, 0.0, 0.0],
    [-0.09, 0.0, 0.0],
    [0.0, 1.24, 0.0],
    [0.09, 0.03, 0.12],
    [-0.09, 0.03, 0.12],
    [0.0, 1.44, 0.0],
    [0.07, 1.40, 0.0],
    [-0.07, 1.40, 0.0],
    [0.0, 1.70, 0.0],
    [0.18, 1.40, 0.0],
    [-0.18, 1.40, 0.0],
    [0.44, 1.40, 0.0],
    [-0.44, 1.40, 0.0],
    [0.68, 1.40, 0.0],
    [-0.68, 1.40, 0.0],
    [0.76, 1.40, 0.0],
    [-0.76, 1.40, 0.0],
];

/// Joint hierarchy with rest-pose bone offsets.
///
/// Joint 0 is always the root. `rest_offset(k)` is the bone from the parent
/// of `k` to `k`; the root entry is kept for file round-trips but never used.
#[derive(Clone, Debug, PartialEq)]
pub struct KinematicTree {
    parents: Vec<Option<usize>>,
    offsets: Vec<Vector3<f64>>,
    names: Vec<String>,
    children: Vec<Vec<usize>>,
}

impl KinematicTree {
    /// Validates and builds a tree.
    pub fn new(
        parents: Vec<Option<usize>>,
        offsets: Vec<Vector3<f64>>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::InvalidInput("tree has no joints".into()));
        }
        if offsets.len() != n {
            return Err(Error::CountMismatch {
                what: "rest offsets",
                expected: n,
                found: offsets.len(),
            });
        }
        if names.len() != n {
            return Err(Error::CountMismatch {
                what: "joint names",
                expected: n,
                found: names.len(),
            });
        }
        let invalid = |joint: usize, reason: String| Error::InvalidTree {
            joint,
            name: names[joint].clone(),
            reason,
        };
        let mut seen = std::collections::HashSet::new();
        for (k, name) in names.iter().enumerate() {
            if !seen.insert(name.as_str()) {
                return Err(invalid(k, format!("duplicate joint name `{name}`")));
            }
        }
        let mut children = vec![Vec::new(); n];
        for (k, parent) in parents.iter().enumerate() {
            match (k, parent) {
                (0, None) => {}
                (0, Some(p)) => {
                    return Err(invalid(0, format!("first joint must be the root, has parent {p}")))
                }
                (_, None) => return Err(invalid(k, "multiple roots".into())),
                (_, Some(p)) if *p == k => return Err(invalid(k, "cycle: joint is its own parent".into())),
                (_, Some(p)) if *p > k => {
                    return Err(invalid(
                        k,
                        format!("parent {p} violates topological order (forward reference)"),
                    ))
                }
                (_, Some(p)) => children[*p].push(k),
            }
            if k > 0 {
                let len = offsets[k].norm();
                if !(len > 0.0) || !len.is_finite() {
                    return Err(invalid(k, "zero-length rest bone".into()));
                }
            }
        }
        Ok(Self {
            parents,
            offsets,
            names,
            children,
        })
    }

    /// The default 24-joint layout with template offsets.
    pub fn smpl_default() -> Self {
        let joints: Vec<Vector3<f64>> = TEMPLATE_JOINTS.iter().map(|p| Vector3::from(*p)).collect();
        Self::from_rest_joints(&joints).expect("template skeleton is valid")
    }

    /// Default layout whose offsets are the differences of the given rest joints.
    pub fn from_rest_joints(joints: &[Vector3<f64>]) -> Result<Self> {
        if joints.len() != SMPL_PARENTS.len() {
            return Err(Error::CountMismatch {
                what: "rest joints",
                expected: SMPL_PARENTS.len(),
                found: joints.len(),
            });
        }
        let offsets = SMPL_PARENTS
            .iter()
            .enumerate()
            .map(|(k, p)| match p {
                Some(p) => joints[k] - joints[*p],
                None => joints[k],
            })
            .collect();
        Self::new(
            SMPL_PARENTS.to_vec(),
            offsets,
            SMPL_JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.parents[k]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn rest_offset(&self, k: usize) -> &Vector3<f64> {
        &self.offsets[k]
    }

    pub fn rest_offsets(&self) -> &[Vector3<f64>] {
        &self.offsets
    }

    pub fn name(&self, k: usize) -> &str {
        &self.names[k]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn children(&self, k: usize) -> &[usize] {
        &self.children[k]
    }

    /// Lowest-index child; the bone that drives this joint's rotation in IK.
    pub fn primary_child(&self, k: usize) -> Option<usize> {
        self.children[k].first().copied()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Index of `name`, or an input error.
    pub fn require(&self, name: &str) -> Result<usize> {
        self.joint_index(name)
            .ok_or_else(|| Error::InvalidInput(format!("skeleton lacks required joint `{name}`")))
    }

    /// Rest-pose joint positions with the root at `root`.
    pub fn rest_positions(&self, root: Vector3<f64>) -> JointSet {
        let mut out = Vec::with_capacity(self.joint_count());
        out.push(root);
        for k in 1..self.joint_count() {
            let p = self.parents[k].unwrap();
            let pos = out[p] + self.offsets[k];
            out.push(pos);
        }
        JointSet(out)
    }

    fn check_count(&self, what: &'static str, found: usize) -> Result<()> {
        if found != self.joint_count() {
            return Err(Error::CountMismatch {
                what,
                expected: self.joint_count(),
                found,
            });
        }
        Ok(())
    }
}

/// Per-joint local rotations plus the root translation.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    rotations: Vec<Matrix3<f64>>,
    root_translation: Vector3<f64>,
}

impl Pose {
    /// Builds a pose, checking every rotation is in SO(3) within 1e-9.
    pub fn new(rotations: Vec<Matrix3<f64>>, root_translation: Vector3<f64>) -> Result<Self> {
        for (i, r) in rotations.iter().enumerate() {
            check_rotation(r, i)?;
        }
        if !root_translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite root translation".into()));
        }
        Ok(Self {
            rotations,
            root_translation,
        })
    }

    pub(crate) fn from_parts(rotations: Vec<Matrix3<f64>>, root_translation: Vector3<f64>) -> Self {
        Self {
            rotations,
            root_translation,
        }
    }

    pub fn identity(joint_count: usize) -> Self {
        Self::from_parts(vec![Matrix3::identity(); joint_count], Vector3::zeros())
    }

    pub fn joint_count(&self) -> usize {
        self.rotations.len()
    }

    pub fn rotations(&self) -> &[Matrix3<f64>] {
        &self.rotations
    }

    pub fn rotation(&self, k: usize) -> &Matrix3<f64> {
        &self.rotations[k]
    }

    pub fn root_translation(&self) -> &Vector3<f64> {
        &self.root_translation
    }

    pub fn with_root_translation(mut self, t: Vector3<f64>) -> Self {
        self.root_translation = t;
        self
    }

    /// Replaces one rotation (validated).
    pub fn set_rotation(&mut self, k: usize, r: Matrix3<f64>) -> Result<()> {
        check_rotation(&r, k)?;
        self.rotations[k] = r;
        Ok(())
    }

    /// Global (root-to-joint composed) rotation of every joint.
    pub fn global_rotations(&self, tree: &KinematicTree) -> Result<Vec<Matrix3<f64>>> {
        tree.check_count("pose rotations", self.joint_count())?;
        let mut globals = Vec::with_capacity(self.joint_count());
        globals.push(self.rotations[0]);
        for k in 1..self.joint_count() {
            let p = tree.parent(k).unwrap();
            let g = globals[p] * self.rotations[k];
            globals.push(g);
        }
        Ok(globals)
    }
}

/// Joint positions in a common frame.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSet(pub Vec<Vector3<f64>>);

impl JointSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.0
    }

    pub fn scaled(&self, s: f64) -> JointSet {
        JointSet(self.0.iter().map(|p| p * s).collect())
    }

    pub fn translated(&self, t: &Vector3<f64>) -> JointSet {
        JointSet(self.0.iter().map(|p| p + t).collect())
    }
}

/// Which joints lie in the clothing-covered region.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClothMask {
    pub covered: Vec<bool>,
}

impl ClothMask {
    pub fn all(n: usize, covered: bool) -> Self {
        Self {
            covered: vec![covered; n],
        }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut covered = vec![false; n];
        for &i in indices {
            covered[i] = true;
        }
        Self { covered }
    }

    pub fn len(&self) -> usize {
        self.covered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covered.is_empty()
    }

    pub fn is_covered(&self, k: usize) -> bool {
        self.covered[k]
    }

    pub fn covered_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.covered.iter().enumerate().filter(|(_, c)| **c).map(|(i, _)| i)
    }

    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|c| **c).count()
    }
}

/// Builds a validated tree from raw lists.
pub fn build_tree(
    parents: &[Option<usize>],
    rest_offsets: &[Vector3<f64>],
    names: &[&str],
) -> Result<KinematicTree> {
    KinematicTree::new(
        parents.to_vec(),
        rest_offsets.to_vec(),
        names.iter().map(|s| s.to_string()).collect(),
    )
}

/// Joint positions of `pose` applied to `tree`. The root sits at the pose's root translation.
pub fn forward_kinematics(tree: &KinematicTree, pose: &Pose) -> Result<JointSet> {
    let globals = pose.global_rotations(tree)?;
    let mut positions = Vec::with_capacity(tree.joint_count());
    positions.push(*pose.root_translation());
    for k in 1..tree.joint_count() {
        let p = tree.parent(k).unwrap();
        let pos = positions[p] + globals[p] * tree.rest_offset(k);
        positions.push(pos);
    }
    Ok(JointSet(positions))
}

/// Bone vectors `positions[k] − positions[parent(k)]` for every non-root joint, in joint order.
pub fn bone_vectors(tree: &KinematicTree, joints: &JointSet) -> Result<Vec<Vector3<f64>>> {
    tree.check_count("joint positions", joints.len())?;
    Ok((1..tree.joint_count())
        .map(|k| joints.0[k] - joints.0[tree.parent(k).unwrap()])
        .collect())
}

pub(crate) fn check_joint_count(tree: &KinematicTree, what: &'static str, found: usize) -> Result<()> {
    tree.check_count(what, found)
}

/// Validates a mask against a tree.
pub fn check_mask(tree: &KinematicTree, mask: &ClothMask) -> Result<()> {
    tree.check_count("cloth mask", mask.len())
}

/// Random pose with per-joint rotations of angle below `max_angle` and a random root orientation.
pub fn random_pose<R: rand::Rng + ?Sized>(rng: &mut R, joint_count: usize, max_angle: f64) -> Pose {
    let mut rotations = Vec::with_capacity(joint_count);
    rotations.push(rotation::random_rotation(rng, std::f64::consts::PI));
    for _ in 1..joint_count {
        rotations.push(rotation::random_rotation(rng, max_angle));
    }
    let t = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    Pose::from_parts(rotations, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::from_axis_angle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn minimal_chain() {
        let tree = build_tree(&[None, Some(0)], &[v(0., 0., 0.), v(0., 1., 0.)], &["a", "b"]).unwrap();
        assert_eq!(tree.joint_count(), 2);
    }

    #[test]
    fn minimal_branching() {
        let tree = build_tree(
            &[None, Some(0), Some(0)],
            &[v(0., 0., 0.), v(1., 0., 0.), v(-1., 0., 0.)],
            &["r", "a", "b"],
        )
        .unwrap();
        assert_eq!(tree.children(0), &[1, 2]);
    }

    #[test]
    fn forward_reference_rejected() {
        let err = build_tree(
            &[None, Some(2), Some(1)],
            &[v(0., 0., 0.), v(1., 0., 0.), v(1., 0., 0.)],
            &["r", "a", "b"],
        )
        .unwrap_err();
        match err {
            Error::InvalidTree { joint, reason, .. } => {
                assert_eq!(joint, 1);
                assert!(reason.contains("topological"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multiple_roots_and_zero_bones_rejected() {
        let err = build_tree(&[None, None], &[v(0., 0., 0.), v(1., 0., 0.)], &["r", "s"]).unwrap_err();
        assert!(matches!(err, Error::InvalidTree { joint: 1, .. }));
        let err = build_tree(&[None, Some(0)], &[v(0., 0., 0.), v(0., 0., 0.)], &["r", "a"]).unwrap_err();
        assert!(matches!(err, Error::InvalidTree { joint: 1, ref name, .. } if name == "a"));
        let err = build_tree(&[None, Some(1)], &[v(0., 0., 0.), v(1., 0., 0.)], &["r", "a"]).unwrap_err();
        assert!(matches!(err, Error::InvalidTree { joint: 1, .. }));
    }

    #[test]
    fn identity_pose_gives_cumulative_offsets() {
        let tree = KinematicTree::smpl_default();
        let joints = forward_kinematics(&tree, &Pose::identity(24)).unwrap();
        for k in 0..24 {
            let mut expected = Vector3::zeros();
            let mut j = k;
            while let Some(p) = tree.parent(j) {
                expected += tree.rest_offset(j);
                j = p;
            }
            assert!((joints.0[k] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn root_rotation_about_z_moves_x_chain_into_positive_y() {
        let tree = build_tree(
            &[None, Some(0), Some(1)],
            &[v(0., 0., 0.), v(1., 0., 0.), v(0.5, 0., 0.)],
            &["r", "a", "b"],
        )
        .unwrap();
        let mut pose = Pose::identity(3);
        pose.set_rotation(0, from_axis_angle(&Vector3::z(), FRAC_PI_2)).unwrap();
        let joints = forward_kinematics(&tree, &pose).unwrap();
        assert!(joints.0[1].y > 0.99 && joints.0[2].y > 1.49);
    }

    #[test]
    fn joint_count_mismatch() {
        let tree = KinematicTree::smpl_default();
        assert!(matches!(
            forward_kinematics(&tree, &Pose::identity(5)),
            Err(Error::CountMismatch { .. })
        ));
    }

    #[test]
    fn bone_vectors_identity_and_degenerate() {
        let tree = KinematicTree::smpl_default();
        let joints = forward_kinematics(&tree, &Pose::identity(24)).unwrap();
        let bones = bone_vectors(&tree, &joints).unwrap();
        for (i, b) in bones.iter().enumerate() {
            assert!((b - tree.rest_offset(i + 1)).norm() < 1e-12);
        }
        let coincident = JointSet(vec![v(1., 1., 1.); 24]);
        assert!(bone_vectors(&tree, &coincident).unwrap().iter().all(|b| b.norm() == 0.0));
    }

    #[test]
    fn fk_is_bitwise_deterministic() {
        let tree = KinematicTree::smpl_default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pose = random_pose(&mut rng, 24, 1.0);
        let a = forward_kinematics(&tree, &pose).unwrap();
        let b = forward_kinematics(&tree, &pose).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pose_rejects_non_rotation() {
        let r = Matrix3::identity() * 2.0;
        assert!(Pose::new(vec![r], Vector3::zeros()).is_err());
    }
}
