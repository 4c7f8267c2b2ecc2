//! Rotation representations: continuous 6D (first two matrix columns),
//! 3x3 rotation matrices and unit quaternions, plus shortest-path slerp.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum norm accepted for the first 6D column and for the second column
/// after projecting out the first.
pub const DEGENERATE_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("degenerate 6D rotation: {0}")]
    Degenerate6d(&'static str),
    #[error("zero-norm quaternion")]
    ZeroQuaternion,
}

/// Two stacked columns `[c1.x, c1.y, c1.z, c2.x, c2.y, c2.z]` of a rotation matrix.
pub type Rot6d = [f64; 6];

pub const IDENTITY_6D: Rot6d = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// Quaternion stored as `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let a = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn dot(&self, o: &Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn neg(&self) -> Quat {
        Quat::new(-self.w, -self.x, -self.y, -self.z)
    }

    fn scale(&self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    fn add(&self, o: &Quat) -> Quat {
        Quat::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    fn sub(&self, o: &Quat) -> Quat {
        Quat::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn normalized(&self) -> Result<Quat, RotationError> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(RotationError::ZeroQuaternion);
        }
        Ok(self.scale(1.0 / n))
    }

    /// Same rotation with a non-negative scalar part.
    pub fn canonical_sign(&self) -> Quat {
        if self.w < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    pub fn mul(&self, o: &Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn conjugate(&self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotation angle in `[0, pi]`, treating `q` and `-q` as the same rotation.
    pub fn angle(&self) -> f64 {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * v.atan2(self.w.abs())
    }
}

/// Which representation a [`Rotation`] value is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationRepr {
    SixD,
    Matrix,
    Quaternion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rotation {
    SixD(Rot6d),
    Matrix(Matrix3<f64>),
    Quaternion(Quat),
}

impl Rotation {
    pub fn repr(&self) -> RotationRepr {
        match self {
            Rotation::SixD(_) => RotationRepr::SixD,
            Rotation::Matrix(_) => RotationRepr::Matrix,
            Rotation::Quaternion(_) => RotationRepr::Quaternion,
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix3<f64>, RotationError> {
        match self {
            Rotation::SixD(r) => rot6d_to_matrix(r),
            Rotation::Matrix(m) => Ok(*m),
            Rotation::Quaternion(q) => quat_to_matrix(q),
        }
    }

    /// Convert to another representation. Quaternion outputs are unit norm
    /// with a non-negative scalar part.
    pub fn convert(&self, to: RotationRepr) -> Result<Rotation, RotationError> {
        if self.repr() == to && to != RotationRepr::Quaternion {
            return Ok(*self);
        }
        let m = self.to_matrix()?;
        Ok(match to {
            RotationRepr::SixD => Rotation::SixD(matrix_to_rot6d(&m)),
            RotationRepr::Matrix => Rotation::Matrix(m),
            RotationRepr::Quaternion => match self {
                Rotation::Quaternion(q) => Rotation::Quaternion(q.normalized()?.canonical_sign()),
                _ => Rotation::Quaternion(matrix_to_quat(&m)),
            },
        })
    }
}

/// Gram-Schmidt reconstruction of a rotation matrix from its 6D encoding.
pub fn rot6d_to_matrix(r: &Rot6d) -> Result<Matrix3<f64>, RotationError> {
    let a1 = Vector3::new(r[0], r[1], r[2]);
    let a2 = Vector3::new(r[3], r[4], r[5]);
    let n1 = a1.norm();
    if !(n1 >= DEGENERATE_TOL) {
        return Err(RotationError::Degenerate6d("first column near zero"));
    }
    let b1 = a1 / n1;
    let u = a2 - b1 * b1.dot(&a2);
    let n2 = u.norm();
    if !(n2 >= DEGENERATE_TOL) {
        return Err(RotationError::Degenerate6d("columns near parallel"));
    }
    let b2 = u / n2;
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

pub fn matrix_to_rot6d(m: &Matrix3<f64>) -> Rot6d {
    [m[(0, 0)], m[(1, 0)], m[(2, 0)], m[(0, 1)], m[(1, 1)], m[(2, 1)]]
}

/// Re-encode a 6D value so that its columns are exactly orthonormal.
pub fn orthonormalize_6d(r: &Rot6d) -> Result<Rot6d, RotationError> {
    rot6d_to_matrix(r).map(|m| matrix_to_rot6d(&m))
}

pub fn quat_to_matrix(q: &Quat) -> Result<Matrix3<f64>, RotationError> {
    let Quat { w, x, y, z } = q.normalized()?;
    Ok(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// Shepperd's method; picks the largest diagonal pivot for stability.
pub fn matrix_to_quat(m: &Matrix3<f64>) -> Quat {
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        Quat::new(
            0.25 * s,
            (m[(2, 1)] - m[(1, 2)]) / s,
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(1, 0)] - m[(0, 1)]) / s,
        )
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        Quat::new(
            (m[(2, 1)] - m[(1, 2)]) / s,
            0.25 * s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
        )
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        Quat::new(
            (m[(0, 2)] - m[(2, 0)]) / s,
            (m[(0, 1)] + m[(1, 0)]) / s,
            0.25 * s,
            (m[(1, 2)] + m[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        Quat::new(
            (m[(1, 0)] - m[(0, 1)]) / s,
            (m[(0, 2)] + m[(2, 0)]) / s,
            (m[(1, 2)] + m[(2, 1)]) / s,
            0.25 * s,
        )
    };
    let n = q.norm();
    q.scale(1.0 / n).canonical_sign()
}

pub fn rot6d_to_quat(r: &Rot6d) -> Result<Quat, RotationError> {
    rot6d_to_matrix(r).map(|m| matrix_to_quat(&m))
}

pub fn quat_to_rot6d(q: &Quat) -> Result<Rot6d, RotationError> {
    quat_to_matrix(q).map(|m| matrix_to_rot6d(&m))
}

/// Rotation about the vertical (z) axis.
pub fn yaw_matrix(yaw: f64) -> Matrix3<f64> {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Spherical linear interpolation along the shortest arc.
///
/// Inputs are expected to be unit quaternions. When `dot(q0, q1) < 0`, `q1`
/// is negated first so the interpolation never takes the long way round.
pub fn slerp(q0: &Quat, q1: &Quat, t: f64) -> Quat {
    let q1 = if q0.dot(q1) < 0.0 { q1.neg() } else { *q1 };
    // Half-angle between the 4-vectors, stable for nearby inputs.
    let omega = 2.0 * q1.sub(q0).norm().atan2(q1.add(q0).norm());
    let s = omega.sin();
    let out = if s < 1e-12 {
        q0.scale(1.0 - t).add(&q1.scale(t))
    } else {
        let a = ((1.0 - t) * omega).sin() / s;
        let b = (t * omega).sin() / s;
        q0.scale(a).add(&q1.scale(b))
    };
    let n = out.norm();
    out.scale(1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
        (a - b).abs().max() < tol
    }

    #[test]
    fn identity_6d() {
        let m = rot6d_to_matrix(&IDENTITY_6D).unwrap();
        assert!(close(&m, &Matrix3::identity(), 1e-15));
    }

    #[test]
    fn gram_schmidt_projects_second_column() {
        let m = rot6d_to_matrix(&[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(close(&m, &Matrix3::identity(), 1e-15));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(matches!(
            rot6d_to_matrix(&[0.0, 0.0, 1e-9, 0.0, 1.0, 0.0]),
            Err(RotationError::Degenerate6d(_))
        ));
        assert!(matches!(
            rot6d_to_matrix(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]),
            Err(RotationError::Degenerate6d(_))
        ));
        assert_eq!(Quat::new(0.0, 0.0, 0.0, 0.0).normalized(), Err(RotationError::ZeroQuaternion));
    }

    #[test]
    fn quaternion_output_has_nonnegative_scalar() {
        let q = Quat::new(-0.5, 0.5, 0.5, 0.5);
        match Rotation::Quaternion(q).convert(RotationRepr::Quaternion).unwrap() {
            Rotation::Quaternion(out) => {
                assert!(out.w >= 0.0);
                assert!((out.norm() - 1.0).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn slerp_fixed_points() {
        let q = Quat::from_axis_angle(Vector3::new(0.3, -1.0, 0.2), 1.1);
        let r = slerp(&q, &q, 0.5);
        assert!((r.dot(&q) - 1.0).abs() < 1e-12);
        let z90 = Quat::from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2);
        let half = slerp(&Quat::IDENTITY, &z90, 0.5);
        let z45 = Quat::from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_4);
        assert!((half.dot(&z45).abs() - 1.0).abs() < 1e-12);
        assert!((slerp(&Quat::IDENTITY, &z90, 1.0).dot(&z90).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slerp_takes_short_path() {
        let z170 = Quat::from_axis_angle(Vector3::z(), 170f64.to_radians());
        // Same rotation as z170, opposite hemisphere.
        let r = slerp(&Quat::IDENTITY, &z170.neg(), 0.5);
        let z85 = Quat::from_axis_angle(Vector3::z(), 85f64.to_radians());
        assert!((r.dot(&z85).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn yaw_matrix_rotates_forward() {
        let f = yaw_matrix(std::f64::consts::FRAC_PI_2) * Vector3::y();
        assert!((f - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
    }
}
