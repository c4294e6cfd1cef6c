//! Rotation-matrix helpers.
//!
//! Rotations are stored as `Matrix3<f64>`. Axis-angle and unit-quaternion
//! forms are conversions only.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Tolerance used when validating rotation matrices.
pub const SO3_TOLERANCE: f64 = 1e-9;

/// Cross-product (skew-symmetric) matrix of `v`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Largest absolute entry of `RᵀR − I`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Checks that `r` is orthonormal with determinant +1 within [`SO3_TOLERANCE`].
pub fn check_rotation(r: &Matrix3<f64>, index: usize) -> Result<()> {
    let error = orthonormality_error(r);
    let det = r.determinant();
    if !error.is_finite() || error > SO3_TOLERANCE || (det - 1.0).abs() > SO3_TOLERANCE {
        return Err(Error::InvalidRotation { index, error, det });
    }
    Ok(())
}

/// Geodesic angle between two rotations, in `[0, π]`.
///
/// Equal to `arccos((trace(AᵀB) − 1) / 2)`; evaluated through `atan2` of the
/// skew part so small angles keep full precision.
pub fn geodesic_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    rotation_angle(&(a.transpose() * b))
}

/// Rotation angle of a single rotation matrix, in `[0, π]`.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let cos = (r.trace() - 1.0) * 0.5;
    let sin = 0.5
        * Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
    sin.atan2(cos)
}

/// Rotation of `angle` radians about `axis` (normalized internally).
pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let norm = axis.norm();
    if norm == 0.0 || angle == 0.0 {
        return Matrix3::identity();
    }
    let k = skew(&(axis / norm));
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Rotation vector (axis scaled by angle) of `r`.
pub fn to_axis_angle(r: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

pub fn to_quaternion(r: &Matrix3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r))
}

pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    *q.to_rotation_matrix().matrix()
}

/// Uniformly distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Unit<Vector3<f64>> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if let Some(u) = Unit::try_new(v, 1e-12) {
            return u;
        }
    }
}

/// Rotation with uniform axis and angle drawn uniformly from `[0, max_angle)`.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, max_angle: f64) -> Matrix3<f64> {
    let axis = random_unit_vector(rng);
    let angle = if max_angle > 0.0 {
        rng.random_range(0.0..max_angle)
    } else {
        0.0
    };
    from_axis_angle(&axis, angle)
}

/// Row-major flattening used by the JSON formats.
pub fn to_row_major(r: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = r[(i, j)];
        }
    }
    out
}

pub fn from_row_major(values: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::from_row_slice(values)
}

/// Normalizes an angle into `(−π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn geodesic_angle_matches_arccos_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_rotation(&mut rng, PI);
            let b = random_rotation(&mut rng, PI);
            let arccos = (((a.transpose() * b).trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
            assert!((geodesic_angle(&a, &b) - arccos).abs() < 1e-7);
        }
    }

    #[test]
    fn axis_angle_and_quaternion_roundtrip() {
        let r = from_axis_angle(&Vector3::new(1.0, 2.0, -0.5), 1.1);
        let v = to_axis_angle(&r);
        assert!((v.norm() - 1.1).abs() < 1e-12);
        let back = from_quaternion(&to_quaternion(&r));
        assert!((back - r).amax() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI + FRAC_PI_2) - (-FRAC_PI_2)).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn check_rotation_rejects_reflection() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(matches!(check_rotation(&m, 3), Err(Error::InvalidRotation { index: 3, .. })));
    }
}
