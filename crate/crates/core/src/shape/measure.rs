use serde::{Deserialize, Serialize};

use crate::body::{regress_joints, shape_mesh, BodyModel, Mesh, ShapeParams};
use crate::camera::PerspectiveCamera;
use crate::error::{Error, Result};
use crate::kinematics::{check_joint_count, JointSet, KinematicTree};

use super::{
    measurement_index, LandmarkSemanticMap, LandmarkSet, MeasurementVector, ScaleRule, ARM_SPAN, CHEST_WIDTH,
    HEIGHT, HIPS_WIDTH, LEG_LENGTH, SHOULDER_WIDTH, TORSO_LENGTH, WAIST_WIDTH,
};

/// Heights (fractions of body height above the lowest vertex) of the width bands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthBands {
    pub chest: f64,
    pub waist: f64,
    pub hips: f64,
    pub half_thickness: f64,
}

impl Default for WidthBands {
    fn default() -> Self {
        Self {
            chest: 0.72,
            waist: 0.60,
            hips: 0.52,
            half_thickness: 0.02,
        }
    }
}

fn path_length(joints: &JointSet, path: &[usize]) -> f64 {
    path.windows(2).map(|w| (joints.0[w[1]] - joints.0[w[0]]).norm()).sum()
}

fn indices(tree: &KinematicTree, names: &[&str]) -> Result<Vec<usize>> {
    names.iter().map(|n| tree.require(n)).collect()
}

/// Height, leg length, arm span and torso length from a skeleton.
///
/// Every quantity is a sum of bone lengths, so it does not depend on the pose:
/// - height: head → neck → spine3 → spine2 → spine1 → pelvis, plus the pelvis
///   to hip-midpoint drop, plus the leg length (equals the head-to-ankle
///   vertical extent of an upright skeleton);
/// - leg_length: hip → knee → ankle, averaged over both legs;
/// - arm_span: hand → wrist → elbow → shoulder → collar on each side plus the
///   collar-to-collar distance;
/// - torso_length: pelvis → spine1 → spine2 → spine3 → neck.
pub fn axial_measurements(tree: &KinematicTree, joints: &JointSet) -> Result<MeasurementVector> {
    check_joint_count(tree, "joints", joints.len())?;
    let spine = indices(tree, &["head", "neck", "spine3", "spine2", "spine1", "pelvis"])?;
    let hips = indices(tree, &["left_hip", "right_hip"])?;
    let left_leg = indices(tree, &["left_hip", "left_knee", "left_ankle"])?;
    let right_leg = indices(tree, &["right_hip", "right_knee", "right_ankle"])?;
    let left_arm = indices(tree, &["left_hand", "left_wrist", "left_elbow", "left_shoulder", "left_collar"])?;
    let right_arm =
        indices(tree, &["right_hand", "right_wrist", "right_elbow", "right_shoulder", "right_collar"])?;
    let torso = indices(tree, &["pelvis", "spine1", "spine2", "spine3", "neck"])?;

    let leg = 0.5 * (path_length(joints, &left_leg) + path_length(joints, &right_leg));
    let hip_mid = (joints.0[hips[0]] + joints.0[hips[1]]) * 0.5;
    let pelvis = joints.0[spine[5]];
    let height = path_length(joints, &spine) + (pelvis - hip_mid).norm() + leg;
    let arm_span = path_length(joints, &left_arm)
        + (joints.0[left_arm[4]] - joints.0[right_arm[4]]).norm()
        + path_length(joints, &right_arm);

    let mut m = MeasurementVector::default();
    m.values[HEIGHT] = Some(height);
    m.values[LEG_LENGTH] = Some(leg);
    m.values[ARM_SPAN] = Some(arm_span);
    m.values[TORSO_LENGTH] = Some(path_length(joints, &torso));
    Ok(m)
}

/// Widths from landmark pairs of the set's clothing category.
///
/// Pixel landmarks are scaled by `depth / focal`; 3D landmarks give distances
/// directly. Pairs with a missing label leave their entry absent.
pub fn radial_measurements(
    landmarks: &LandmarkSet,
    map: &LandmarkSemanticMap,
    depth: f64,
    camera: &PerspectiveCamera,
) -> Result<MeasurementVector> {
    let category = map.category(&landmarks.category)?;
    let dim = landmarks.dimension()?;
    if dim == Some(2) && !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::DegenerateDepth(format!("landmark depth must be positive, got {depth}")));
    }
    let mut m = MeasurementVector::default();
    for pair in &category.pairs {
        let (Some(a), Some(b)) = (landmarks.points.get(&pair.labels[0]), landmarks.points.get(&pair.labels[1]))
        else {
            continue;
        };
        let dist = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let value = match (a.len(), map.scale_rule) {
            (3, _) => dist,
            (_, ScaleRule::DepthOverFocal) => dist * depth / camera.focal,
        };
        if value > 0.0 {
            m.values[measurement_index(&pair.measurement)?] = Some(value);
        }
    }
    Ok(m)
}

/// Vertices inside the band centered at `fraction` of the height above `min_y`.
fn band_vertices<'a>(
    mesh: &'a Mesh,
    min_y: f64,
    height: f64,
    fraction: f64,
    half_thickness: f64,
) -> impl Iterator<Item = usize> + 'a {
    let center = min_y + fraction * height;
    let half = half_thickness * height;
    mesh.vertices
        .iter()
        .enumerate()
        .filter(move |(_, v)| (v.y - center).abs() <= half)
        .map(|(i, _)| i)
}

fn vertical_extent(mesh: &Mesh) -> (f64, f64) {
    mesh.vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.y), hi.max(v.y)))
}

/// Vertex pairs realizing the chest, waist and hips widths of a rest mesh.
///
/// For each band: the vertex of largest x (lowest index on ties, the body's
/// left side) and the vertex of smallest x at the same height and depth.
pub fn band_extremes(mesh: &Mesh, bands: &WidthBands) -> [Option<(usize, usize)>; 3] {
    let (lo, hi) = vertical_extent(mesh);
    let height = hi - lo;
    [bands.chest, bands.waist, bands.hips].map(|fraction| {
        let members: Vec<usize> = band_vertices(mesh, lo, height, fraction, bands.half_thickness).collect();
        let left = members.iter().copied().reduce(|a, b| {
            if mesh.vertices[b].x > mesh.vertices[a].x {
                b
            } else {
                a
            }
        })?;
        let l = mesh.vertices[left];
        let right = members
            .iter()
            .copied()
            .filter(|&i| {
                let v = mesh.vertices[i];
                (v.y - l.y).abs() < 1e-12 && (v.z - l.z).abs() < 1e-12
            })
            .reduce(|a, b| {
                if mesh.vertices[b].x < mesh.vertices[a].x {
                    b
                } else {
                    a
                }
            })?;
        Some((left, right))
    })
}

/// Measurements of the rest-shape mesh with the default bands.
pub fn mesh_measurements(model: &BodyModel, beta: &ShapeParams) -> Result<MeasurementVector> {
    mesh_measurements_with(model, beta, &WidthBands::default())
}

/// Measurements of the rest-shape mesh.
///
/// Height is the vertical extent; leg length, arm span, torso length and
/// shoulder width come from the regressed joints; chest, waist and hips are
/// lateral extents of the vertex bands (absent when a band holds no vertices).
pub fn mesh_measurements_with(
    model: &BodyModel,
    beta: &ShapeParams,
    bands: &WidthBands,
) -> Result<MeasurementVector> {
    let mesh = shape_mesh(model, beta)?;
    let joints = regress_joints(model, &mesh)?;
    let tree = model.tree();
    let mut m = axial_measurements(tree, &joints)?;
    let (lo, hi) = vertical_extent(&mesh);
    let height = hi - lo;
    m.values[HEIGHT] = Some(height);
    let ls = tree.require("left_shoulder")?;
    let rs = tree.require("right_shoulder")?;
    m.values[SHOULDER_WIDTH] = Some((joints.0[ls] - joints.0[rs]).norm());
    for (slot, fraction) in [(CHEST_WIDTH, bands.chest), (WAIST_WIDTH, bands.waist), (HIPS_WIDTH, bands.hips)] {
        let (min_x, max_x) = band_vertices(&mesh, lo, height, fraction, bands.half_thickness).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(a, b), i| (a.min(mesh.vertices[i].x), b.max(mesh.vertices[i].x)),
        );
        m.values[slot] = (max_x > min_x).then_some(max_x - min_x);
    }
    Ok(m)
}
