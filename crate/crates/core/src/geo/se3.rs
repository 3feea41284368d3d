//! Rigid camera poses on SE(3).
//!
//! Tangent vectors are ordered rotation-first: `xi = (omega, v)`. A pose stores
//! the camera-to-world transform, so `translation()` is the camera center in
//! world coordinates.

use core::f64::consts::PI;

use nalgebra::{Matrix3, Vector3, Vector6};

use super::GeoError;

const SMALL_ANGLE: f64 = 1e-8;

/// Camera-to-world rigid transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from a rotation matrix and translation, re-orthonormalizing
    /// the rotation. Fails when the matrix is not close to a proper rotation.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeoError> {
        if rotation
            .iter()
            .chain(translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(GeoError::NonFinite);
        }
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if orth > 1e-6 || rotation.determinant() < 0.0 {
            return Err(GeoError::NotARotation);
        }
        Ok(Self {
            rotation: orthonormalize(&rotation),
            translation,
        })
    }

    /// Exponential map from the Lie algebra.
    pub fn exp(xi: &Vector6<f64>) -> Result<Self, GeoError> {
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::NonFinite);
        }
        let omega = Vector3::new(xi[0], xi[1], xi[2]);
        let v = Vector3::new(xi[3], xi[4], xi[5]);
        Ok(Self {
            rotation: so3_exp(&omega),
            translation: so3_left_jacobian(&omega) * v,
        })
    }

    /// Logarithm map; inverse of [`PoseSE3::exp`] for rotation angles below pi.
    pub fn log(&self) -> Vector6<f64> {
        let omega = so3_log(&self.rotation);
        let v = so3_left_jacobian_inv(&omega) * self.translation;
        Vector6::new(omega[0], omega[1], omega[2], v[0], v[1], v[2])
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        Self {
            rotation: orthonormalize(&(self.rotation * rhs.rotation)),
            translation: self.rotation * rhs.translation + self.translation,
        }
    }

    /// Right perturbation `self * exp(delta)`; `delta` is expressed in the camera frame.
    pub fn retract(&self, delta: &Vector6<f64>) -> Result<Self, GeoError> {
        Ok(self.compose(&Self::exp(delta)?))
    }

    /// World point into camera coordinates.
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues rotation.
pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = hat(omega);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + w * a + w * w * b
}

/// Rotation vector of a rotation matrix, angle in `[0, pi]`.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let skew = vee(&(r - r.transpose())) * 0.5;
    let s = skew.norm();
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);
    if theta < SMALL_ANGLE {
        return skew * (1.0 + theta * theta / 6.0);
    }
    if PI - theta < 1e-4 {
        // Axis from the symmetric part: (R + R^T)/2 - cI = (1 - c) a a^T.
        let b = (r + r.transpose()) * 0.5 - Matrix3::identity() * c;
        let k = (0..3)
            .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
            .unwrap_or(0);
        let mut axis = b.column(k).into_owned();
        let n = axis.norm();
        if n > 0.0 {
            axis /= n;
        }
        if axis.dot(&skew) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    skew * (theta / s)
}

/// Left Jacobian of SO(3), the `V` matrix mapping `v` to translation in `exp`.
pub fn so3_left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = hat(omega);
    let (a, b) = if theta < 1e-5 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + w * a + w * w * b
}

pub fn so3_left_jacobian_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = hat(omega);
    let b = if theta < 1e-5 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
    };
    Matrix3::identity() - w * 0.5 + w * w * b
}

/// Nearest rotation matrix (polar decomposition via SVD).
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        return *m;
    };
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    r
}
