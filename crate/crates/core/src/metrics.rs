//! Evaluation metrics and supervision losses.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::body::{BodyModel, ShapeParams};
use crate::error::{Error, Result};
use crate::ik::TwistAngles;
use crate::kinematics::{ClothMask, JointSet};
use crate::shape::{mesh_measurements, CHEST_WIDTH, HEIGHT, HIPS_WIDTH, WAIST_WIDTH};

/// Default weight of visible / cloth-covered joints in the losses.
pub const COVERED_WEIGHT: f64 = 1.0;
/// Default weight of the remaining joints.
pub const UNCOVERED_WEIGHT: f64 = 0.2;

/// `x ↦ scale · rotation · x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    pub fn apply_all(&self, joints: &JointSet) -> JointSet {
        JointSet(joints.0.iter().map(|p| self.apply(p)).collect())
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::CountMismatch { what, expected, found });
    }
    Ok(())
}

fn covered(mask: &ClothMask, n: usize) -> Result<Vec<usize>> {
    check_len("cloth mask", n, mask.len())?;
    let idx: Vec<usize> = mask.covered_indices().collect();
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(idx)
}

/// Mean covered-joint distance, in millimeters (inputs in meters).
pub fn mpjpe_c(pred: &JointSet, gt: &JointSet, mask: &ClothMask) -> Result<f64> {
    check_len("predicted joints", gt.len(), pred.len())?;
    let idx = covered(mask, gt.len())?;
    let sum: f64 = idx.iter().map(|&k| (pred.0[k] - gt.0[k]).norm()).sum();
    Ok(1000.0 * sum / idx.len() as f64)
}

/// Least-squares similarity transform taking covered `source` joints onto `target`, reflections excluded.
pub fn procrustes_align(source: &JointSet, target: &JointSet, mask: &ClothMask) -> Result<SimilarityTransform> {
    check_len("target joints", source.len(), target.len())?;
    let idx = covered(mask, source.len())?;
    if idx.len() < 3 {
        return Err(Error::DegenerateAlignment(format!("{} covered points, need 3", idx.len())));
    }
    let n = idx.len() as f64;
    let mu_x = idx.iter().map(|&k| source.0[k]).sum::<Vector3<f64>>() / n;
    let mu_y = idx.iter().map(|&k| target.0[k]).sum::<Vector3<f64>>() / n;
    let mut sxx = Matrix3::zeros();
    let mut syy = Matrix3::zeros();
    let mut cov = Matrix3::zeros();
    for &k in &idx {
        let x = source.0[k] - mu_x;
        let y = target.0[k] - mu_y;
        sxx += x * x.transpose();
        syy += y * y.transpose();
        cov += y * x.transpose();
    }
    for (name, scatter) in [("source", &sxx), ("target", &syy)] {
        let ev = scatter.symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        let second = ev.sum() - lo - hi;
        if !(hi > 0.0) || second <= 1e-18 * hi.max(1.0) || second <= 1e-12 * hi {
            return Err(Error::DegenerateAlignment(format!("{name} points are collinear or coincident")));
        }
    }
    let svd = cov.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let sign = if (u * v_t).determinant() < 0.0 { -1.0 } else { 1.0 };
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let rotation = u * d * v_t;
    let s = svd.singular_values;
    let var_x = sxx.trace();
    let scale = (s[0] + s[1] + sign * s[2]) / var_x;
    if !(scale > 0.0) {
        return Err(Error::DegenerateAlignment(format!("non-positive scale {scale}")));
    }
    let translation = mu_y - rotation * mu_x * scale;
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

/// MPJPE-C after aligning `pred` onto `gt`.
pub fn pa_mpjpe_c(pred: &JointSet, gt: &JointSet, mask: &ClothMask) -> Result<f64> {
    let t = procrustes_align(pred, gt, mask)?;
    mpjpe_c(&t.apply_all(pred), gt, mask)
}

/// Mean covered-joint pixel distance.
pub fn kpe_2d(pred2d: &[Vector2<f64>], gt2d: &[Vector2<f64>], mask: &ClothMask) -> Result<f64> {
    check_len("predicted keypoints", gt2d.len(), pred2d.len())?;
    let idx = covered(mask, gt2d.len())?;
    let sum: f64 = idx.iter().map(|&k| (pred2d[k] - gt2d[k]).norm()).sum();
    Ok(sum / idx.len() as f64)
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    check_len("weights", n, weights.len())?;
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::NegativeWeight { index, value });
    }
    Ok(())
}

/// `Σ wₖ ‖xₖ − x̂ₖ‖₁`.
pub fn keypoint_loss(pred: &JointSet, gt: &JointSet, weights: &[f64]) -> Result<f64> {
    check_len("predicted joints", gt.len(), pred.len())?;
    check_weights(weights, gt.len())?;
    Ok(pred
        .0
        .iter()
        .zip(&gt.0)
        .zip(weights)
        .map(|((p, g), w)| w * (p - g).abs().sum())
        .sum())
}

/// `Σ wₖ ‖(cos φₖ, sin φₖ) − (cos φ̂ₖ, sin φ̂ₖ)‖₂`.
pub fn twist_loss(pred_phi: &TwistAngles, gt_phi: &TwistAngles, weights: &[f64]) -> Result<f64> {
    check_len("predicted twists", gt_phi.phi.len(), pred_phi.phi.len())?;
    check_weights(weights, gt_phi.phi.len())?;
    Ok(pred_phi
        .phi
        .iter()
        .zip(&gt_phi.phi)
        .zip(weights)
        .map(|((p, g), w)| w * Vector2::new(p.cos() - g.cos(), p.sin() - g.sin()).norm())
        .sum())
}

/// Per-joint weights: `covered` for mask joints, `uncovered` elsewhere.
pub fn mask_weights(mask: &ClothMask, covered: f64, uncovered: f64) -> Vec<f64> {
    mask.covered.iter().map(|c| if *c { covered } else { uncovered }).collect()
}

/// Weights for twist angles, which belong to joints `1..n`.
pub fn twist_weights(mask: &ClothMask, covered: f64, uncovered: f64) -> Vec<f64> {
    mask_weights(mask, covered, uncovered).into_iter().skip(1).collect()
}

/// Absolute measurement differences in millimeters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ShapeErrors {
    pub height: Option<f64>,
    pub chest: Option<f64>,
    pub waist: Option<f64>,
    pub hips: Option<f64>,
}

/// `|mesh_measurements(pred) − mesh_measurements(gt)|` for height, chest, waist and hips.
pub fn shape_errors(model: &BodyModel, pred_beta: &ShapeParams, gt_beta: &ShapeParams) -> Result<ShapeErrors> {
    let p = mesh_measurements(model, pred_beta)?;
    let g = mesh_measurements(model, gt_beta)?;
    let diff = |i: usize| match (p.values[i], g.values[i]) {
        (Some(a), Some(b)) => Some(1000.0 * (a - b).abs()),
        _ => None,
    };
    Ok(ShapeErrors {
        height: diff(HEIGHT),
        chest: diff(CHEST_WIDTH),
        waist: diff(WAIST_WIDTH),
        hips: diff(HIPS_WIDTH),
    })
}

/// Metric report; absent metrics are omitted from JSON and left blank in CSV.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mpjpe_c_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pa_mpjpe_c_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kpe2d_px: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub shape_errors_mm: Option<ShapeErrors>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str =
        "mpjpe_c_mm,pa_mpjpe_c_mm,kpe2d_px,shape_height_mm,shape_chest_mm,shape_waist_mm,shape_hips_mm";

    /// Header line plus one value line.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let s = self.shape_errors_mm.unwrap_or_default();
        let values = [
            self.mpjpe_c_mm,
            self.pa_mpjpe_c_mm,
            self.kpe2d_px,
            s.height,
            s.chest,
            s.waist,
            s.hips,
        ]
        .map(cell)
        .join(",");
        format!("{}\n{values}\n", Self::CSV_HEADER)
    }
}
