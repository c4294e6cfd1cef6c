//! Analytic twist-swing inverse kinematics.
//!
//! Each joint rotation is factored as `swing · twist`: the twist spins about
//! the rest bone `t`, the swing is the minimal rotation taking `t` onto the
//! observed bone `p`. Joint positions fix the swing; the twist angle is an
//! input.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{check_joint_count, JointSet, KinematicTree, Pose};
use crate::rotation::{check_rotation, skew, wrap_angle};

/// Relative `‖t × p‖ / (‖t‖‖p‖)` below which `t` and `p` count as parallel.
pub const PARALLEL_THRESHOLD: f64 = 1e-8;

/// Twist angle of every non-root joint; entry `k − 1` belongs to joint `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistAngles {
    pub phi: Vec<f64>,
}

impl TwistAngles {
    pub fn zeros(joint_count: usize) -> Self {
        Self {
            phi: vec![0.0; joint_count.saturating_sub(1)],
        }
    }

    /// Twist of the bone ending at joint `k` (`k ≥ 1`).
    pub fn of_joint(&self, k: usize) -> f64 {
        self.phi[k - 1]
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// A rotation split into its swing and twist factors (`rotation = swing · twist`).
#[derive(Clone, Debug, PartialEq)]
pub struct SwingTwist {
    pub swing: Matrix3<f64>,
    pub twist: Matrix3<f64>,
    /// Twist angle in `(−π, π]`.
    pub angle: f64,
}

/// `I + sinα·K + (1 − cosα)·K²` with `K` the cross-product matrix of `axis`.
pub fn rodrigues(axis: &Vector3<f64>, sin_alpha: f64, cos_alpha: f64) -> Result<Matrix3<f64>> {
    let norm = axis.norm();
    if !((norm - 1.0).abs() <= 1e-9) {
        return Err(Error::NonUnitAxis { norm });
    }
    let unit_circle = sin_alpha * sin_alpha + cos_alpha * cos_alpha;
    if !((unit_circle - 1.0).abs() <= 1e-9) {
        return Err(Error::InvalidAngle { value: unit_circle });
    }
    Ok(rodrigues_unchecked(axis, sin_alpha, cos_alpha))
}

fn rodrigues_unchecked(axis: &Vector3<f64>, sin_alpha: f64, cos_alpha: f64) -> Matrix3<f64> {
    let k = skew(axis);
    Matrix3::identity() + k * sin_alpha + (k * k) * (1.0 - cos_alpha)
}

/// Unit vector orthogonal to `t`: `t × e₁`, or `t × e₂` when `t` is nearly along `e₁`.
pub fn fallback_axis(t: &Vector3<f64>) -> Vector3<f64> {
    let t_hat = t.normalize();
    let c = t_hat.cross(&Vector3::x());
    if c.norm() >= 1e-6 {
        c.normalize()
    } else {
        t_hat.cross(&Vector3::y()).normalize()
    }
}

/// Minimal rotation taking the direction of `t` onto the direction of `p`.
pub fn swing_from_vectors(t: &Vector3<f64>, p: &Vector3<f64>) -> Result<Matrix3<f64>> {
    let t_norm = t.norm();
    let p_norm = p.norm();
    if !(t_norm > 0.0) {
        return Err(Error::ZeroLength {
            what: "rest bone vector".into(),
        });
    }
    if !(p_norm > 0.0) {
        return Err(Error::ZeroLength {
            what: "target bone vector".into(),
        });
    }
    let cross = t.cross(p);
    let scale = t_norm * p_norm;
    let sin_alpha = cross.norm() / scale;
    let cos_alpha = t.dot(p) / scale;
    if sin_alpha < PARALLEL_THRESHOLD {
        if cos_alpha > 0.0 {
            return Ok(Matrix3::identity());
        }
        return Ok(rodrigues_unchecked(&fallback_axis(t), 0.0, -1.0));
    }
    let n = cross / cross.norm();
    Ok(rodrigues_unchecked(&n, sin_alpha, cos_alpha))
}

/// Rotation of `phi` radians about the direction of `t`.
pub fn twist_rotation(t: &Vector3<f64>, phi: f64) -> Result<Matrix3<f64>> {
    let norm = t.norm();
    if !(norm > 0.0) {
        return Err(Error::ZeroLength {
            what: "twist axis".into(),
        });
    }
    Ok(rodrigues_unchecked(&(t / norm), phi.sin(), phi.cos()))
}

/// Splits `rotation` into swing and twist about the rest bone `t`.
pub fn decompose(rotation: &Matrix3<f64>, t: &Vector3<f64>) -> Result<SwingTwist> {
    let swing = swing_from_vectors(t, &(rotation * t))?;
    let twist = swing.transpose() * rotation;
    let t_hat = t.normalize();
    let u = fallback_axis(t);
    let turned = twist * u;
    let angle = wrap_angle(t_hat.dot(&u.cross(&turned)).atan2(u.dot(&turned)));
    Ok(SwingTwist {
        swing,
        twist,
        angle,
    })
}

/// Recovers per-joint rotations from joint positions, twist angles and the root rotation.
///
/// Every non-leaf joint is solved from its primary (lowest-index) child bone:
/// the target bone is expressed in the parent's global frame and the local
/// rotation is `swing(t, p) · twist(t, φ)`. The root rotation is taken as
/// given; leaves get the identity. The returned root translation is the
/// input root position.
pub fn solve_ik(
    tree: &KinematicTree,
    joints: &JointSet,
    twists: &TwistAngles,
    root_rotation: &Matrix3<f64>,
) -> Result<Pose> {
    let n = tree.joint_count();
    check_joint_count(tree, "joint positions", joints.len())?;
    if twists.len() != n - 1 {
        return Err(Error::CountMismatch {
            what: "twist angles",
            expected: n - 1,
            found: twists.len(),
        });
    }
    check_rotation(root_rotation, 0)?;
    let x = joints.positions();
    for k in 1..n {
        let p = tree.parent(k).unwrap();
        if (x[k] - x[p]).norm() == 0.0 {
            return Err(Error::DegenerateBone {
                joint: k,
                name: tree.name(k).to_string(),
            });
        }
    }

    let mut rotations = vec![Matrix3::identity(); n];
    let mut globals = vec![Matrix3::identity(); n];
    rotations[0] = *root_rotation;
    globals[0] = *root_rotation;
    for j in 1..n {
        let parent_global = globals[tree.parent(j).unwrap()];
        if let Some(c) = tree.primary_child(j) {
            let target = parent_global.transpose() * (x[c] - x[j]);
            let rest = tree.rest_offset(c);
            let swing = swing_from_vectors(rest, &target)?;
            let twist = twist_rotation(rest, twists.of_joint(c))?;
            rotations[j] = swing * twist;
        }
        globals[j] = parent_global * rotations[j];
    }
    Ok(Pose::from_parts(rotations, x[0]))
}

/// Twist angle of each non-root bone: the twist part of the parent rotation about the rest bone.
pub fn extract_twists(tree: &KinematicTree, pose: &Pose) -> Result<TwistAngles> {
    check_joint_count(tree, "pose rotations", pose.joint_count())?;
    let phi = (1..tree.joint_count())
        .map(|k| {
            let parent = tree.parent(k).unwrap();
            decompose(pose.rotation(parent), tree.rest_offset(k)).map(|st| st.angle)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TwistAngles { phi })
}

/// Global root rotation fitted from the pelvis/left-hip/right-hip triangle.
///
/// The rest triangle normal is swung onto the observed normal, then a twist
/// about that normal aligns the hip-to-hip direction. Exact for rigidly
/// moved inputs.
pub fn fit_root_rotation(tree: &KinematicTree, joints: &JointSet) -> Result<Matrix3<f64>> {
    check_joint_count(tree, "joint positions", joints.len())?;
    let pelvis = tree.require("pelvis")?;
    let left = tree.require("left_hip")?;
    let right = tree.require("right_hip")?;
    if tree.parent(left) != Some(pelvis) || tree.parent(right) != Some(pelvis) {
        return Err(Error::InvalidInput("hips must be children of the pelvis".into()));
    }
    let x = joints.positions();
    let rest_left = *tree.rest_offset(left);
    let rest_right = *tree.rest_offset(right);
    let obs_left = x[left] - x[pelvis];
    let obs_right = x[right] - x[pelvis];

    let rest_normal = rest_left.cross(&rest_right);
    let obs_normal = obs_left.cross(&obs_right);
    if rest_normal.norm() < 1e-12 || obs_normal.norm() < 1e-12 {
        return Err(Error::DegenerateAlignment("pelvis triangle is collinear".into()));
    }
    let swing = swing_from_vectors(&rest_normal, &obs_normal)?;
    let n_hat = obs_normal.normalize();
    let swung = swing * (rest_left - rest_right);
    let observed = obs_left - obs_right;
    let angle = n_hat.dot(&swung.cross(&observed)).atan2(swung.dot(&observed));
    Ok(twist_rotation(&n_hat, angle)? * swing)
}
