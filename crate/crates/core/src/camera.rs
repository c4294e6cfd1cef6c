//! Pinhole projection and depth-from-bone-length placement.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{check_joint_count, JointSet, KinematicTree, Pose};
use crate::rotation::{from_axis_angle, random_rotation};

/// Perspective camera looking down +z with a y-down image plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveCamera {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for PerspectiveCamera {
    fn default() -> Self {
        Self {
            focal: 1000.0,
            cx: 512.0,
            cy: 512.0,
            width: 1024.0,
            height: 1024.0,
        }
    }
}

impl PerspectiveCamera {
    pub fn new(focal: f64, cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        let camera = Self {
            focal,
            cx,
            cy,
            width,
            height,
        };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) || !self.focal.is_finite() {
            return Err(Error::InvalidInput(format!("focal length must be positive, got {}", self.focal)));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidInput(format!(
                "image size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidInput("principal point must be finite".into()));
        }
        Ok(())
    }

    /// Projects a single camera-space point.
    pub fn project_point(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.focal * p.x / p.z + self.cx, self.focal * p.y / p.z + self.cy)
    }

    /// Back-projects pixel `uv` to the camera-space point at depth `z`.
    pub fn back_project(&self, uv: &Vector2<f64>, z: f64) -> Vector3<f64> {
        Vector3::new((uv.x - self.cx) * z / self.focal, (uv.y - self.cy) * z / self.focal, z)
    }
}

/// Bones used for depth estimation, named by their child joint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorBoneSet {
    pub bone_indices: Vec<usize>,
}

impl AnchorBoneSet {
    pub fn new(bone_indices: Vec<usize>, tree: &KinematicTree) -> Result<Self> {
        let set = Self { bone_indices };
        set.validate(tree)?;
        Ok(set)
    }

    /// Torso bones: pelvis to both hips and the spine chain up to spine3.
    pub fn default_torso(tree: &KinematicTree) -> Result<Self> {
        let names = ["left_hip", "right_hip", "spine1", "spine2", "spine3"];
        let indices = names.iter().map(|n| tree.require(n)).collect::<Result<Vec<_>>>()?;
        Self::new(indices, tree)
    }

    pub fn validate(&self, tree: &KinematicTree) -> Result<()> {
        if self.bone_indices.is_empty() {
            return Err(Error::InvalidInput("anchor bone set is empty".into()));
        }
        for &k in &self.bone_indices {
            if k == 0 || k >= tree.joint_count() {
                return Err(Error::InvalidInput(format!("anchor bone index {k} is not a non-root joint")));
            }
        }
        Ok(())
    }

    /// Anchor joints by name; `"default"` selects the torso set.
    pub fn from_names(names: &[String], tree: &KinematicTree) -> Result<Self> {
        if names.len() == 1 && names[0] == "default" {
            return Self::default_torso(tree);
        }
        let indices = names
            .iter()
            .map(|n| match n.parse::<usize>() {
                Ok(i) => Ok(i),
                Err(_) => tree.require(n),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(indices, tree)
    }
}

/// `u = f·(x+tx)/(z+tz) + cx`, `v = f·(y+ty)/(z+tz) + cy`.
pub fn project(
    camera: &PerspectiveCamera,
    points: &[Vector3<f64>],
    translation: &Vector3<f64>,
) -> Result<Vec<Vector2<f64>>> {
    let behind: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| !(p.z + translation.z > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !behind.is_empty() {
        return Err(Error::BehindCamera { indices: behind });
    }
    Ok(points.iter().map(|p| camera.project_point(&(p + translation))).collect())
}

/// `z = f · Σ b_cam / Σ b_img`.
pub fn adaptive_depth(
    camera: &PerspectiveCamera,
    bone_lengths_camera: &[f64],
    bone_lengths_image: &[f64],
) -> Result<f64> {
    if bone_lengths_camera.len() != bone_lengths_image.len() {
        return Err(Error::CountMismatch {
            what: "image bone lengths",
            expected: bone_lengths_camera.len(),
            found: bone_lengths_image.len(),
        });
    }
    if bone_lengths_camera.is_empty() {
        return Err(Error::DegenerateDepth("no bones".into()));
    }
    let cam: f64 = bone_lengths_camera.iter().sum();
    let img: f64 = bone_lengths_image.iter().sum();
    if !(img > 0.0) || !img.is_finite() {
        return Err(Error::DegenerateDepth(format!("image bone lengths sum to {img}")));
    }
    if !(cam > 0.0) || !cam.is_finite() {
        return Err(Error::DegenerateDepth(format!("camera bone lengths sum to {cam}")));
    }
    Ok(camera.focal * cam / img)
}

/// Camera-space and pixel lengths of the anchor bones.
pub fn anchor_lengths(
    tree: &KinematicTree,
    joints: &JointSet,
    image_joints: &[Vector2<f64>],
    anchors: &AnchorBoneSet,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_joint_count(tree, "joints", joints.len())?;
    check_joint_count(tree, "image joints", image_joints.len())?;
    anchors.validate(tree)?;
    let mut cam = Vec::with_capacity(anchors.bone_indices.len());
    let mut img = Vec::with_capacity(anchors.bone_indices.len());
    for &c in &anchors.bone_indices {
        let p = tree.parent(c).expect("validated non-root");
        cam.push((joints.0[c] - joints.0[p]).norm());
        img.push((image_joints[c] - image_joints[p]).norm());
    }
    Ok((cam, img))
}

/// Depth of the body from the anchor-bone size ratio.
pub fn body_depth(
    camera: &PerspectiveCamera,
    joints: &JointSet,
    image_joints: &[Vector2<f64>],
    anchors: &AnchorBoneSet,
    tree: &KinematicTree,
) -> Result<f64> {
    let (cam, img) = anchor_lengths(tree, joints, image_joints, anchors)?;
    adaptive_depth(camera, &cam, &img)
}

/// Translation that puts the root joint on its pixel at the adaptive depth.
///
/// `model_joints_rest` supplies the camera-space bone lengths and the root
/// position the translation is measured from.
pub fn place_body(
    camera: &PerspectiveCamera,
    model_joints_rest: &JointSet,
    image_joints: &[Vector2<f64>],
    anchors: &AnchorBoneSet,
    tree: &KinematicTree,
) -> Result<Vector3<f64>> {
    let z = body_depth(camera, model_joints_rest, image_joints, anchors, tree)?;
    let root_px = image_joints[0];
    if !root_px.x.is_finite() || !root_px.y.is_finite() {
        return Err(Error::InvalidInput("root joint pixel is missing".into()));
    }
    let root = model_joints_rest.0[0];
    let target = camera.back_project(&root_px, z);
    Ok(target - root)
}

/// Camera-space joints at `depth + offsets[k]` along each pixel ray.
pub fn lift_joints(
    camera: &PerspectiveCamera,
    image_joints: &[Vector2<f64>],
    depth: f64,
    offsets: &[f64],
) -> Result<JointSet> {
    if offsets.len() != image_joints.len() {
        return Err(Error::CountMismatch {
            what: "depth offsets",
            expected: image_joints.len(),
            found: offsets.len(),
        });
    }
    let joints: Vec<Vector3<f64>> = image_joints
        .iter()
        .zip(offsets)
        .map(|(uv, dz)| camera.back_project(uv, depth + dz))
        .collect();
    let behind: Vec<usize> = joints
        .iter()
        .enumerate()
        .filter(|(_, p)| !(p.z > 0.0))
        .map(|(i, _)| i)
        .collect();
    if !behind.is_empty() {
        return Err(Error::BehindCamera { indices: behind });
    }
    Ok(JointSet(joints))
}

/// Rotation taking a y-up body frame into the y-down camera frame, spun by `gamma` in the image plane.
pub fn upright_in_camera(gamma: f64) -> Matrix3<f64> {
    from_axis_angle(&Vector3::x(), std::f64::consts::PI) * from_axis_angle(&Vector3::z(), gamma)
}

/// Joints that [`fronto_parallel_pose`] rotates about the viewing axis only:
/// every ancestor of an anchor bone's child.
pub fn planar_joints(tree: &KinematicTree, anchors: &AnchorBoneSet) -> Vec<bool> {
    let mut in_plane = vec![false; tree.joint_count()];
    for &c in &anchors.bone_indices {
        let mut j = tree.parent(c);
        while let Some(k) = j {
            in_plane[k] = true;
            j = tree.parent(k);
        }
    }
    in_plane
}

/// Random pose whose anchor bones stay parallel to the image plane.
///
/// The root faces the camera (spun by up to `max_angle` in-plane), every
/// ancestor of an anchor bone rotates about the viewing axis only, and all
/// other joints take random rotations of angle below `max_angle`.
pub fn fronto_parallel_pose<R: Rng + ?Sized>(
    rng: &mut R,
    tree: &KinematicTree,
    anchors: &AnchorBoneSet,
    max_angle: f64,
) -> Pose {
    let n = tree.joint_count();
    let in_plane = planar_joints(tree, anchors);
    let mut rotations = Vec::with_capacity(n);
    rotations.push(upright_in_camera(rng.random_range(-max_angle..=max_angle)));
    for planar in in_plane.iter().skip(1) {
        rotations.push(if *planar {
            from_axis_angle(&Vector3::z(), rng.random_range(-max_angle..=max_angle))
        } else {
            random_rotation(rng, max_angle)
        });
    }
    Pose::from_parts(rotations, Vector3::zeros())
}
