use serde::{Deserialize, Serialize};

use super::mat::Mat3;
use super::point::Point3;
use super::GeometryError;

/// Frobenius tolerance on `R^T R - I` (and on `det R - 1`) for a matrix to
/// count as a rotation.
pub const ROTATION_TOL: f64 = 1e-9;

/// Matrices within this tolerance are re-orthonormalized by polar projection
/// instead of rejected.
pub const ROTATION_REPAIR_TOL: f64 = 1e-6;

/// A rigid transformation anchored at a point: rotates about `origin`, then
/// translates. The anchored form keeps rotation and translation parameters
/// local to the anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchoredRigid {
    pub rotation: Mat3,
    pub origin: Point3,
    pub translation: Point3,
}

impl AnchoredRigid {
    /// Validating constructor. Rotations within [`ROTATION_REPAIR_TOL`] of
    /// SO(3) are polar-projected back; anything farther is rejected.
    pub fn new(rotation: Mat3, origin: Point3, translation: Point3) -> Result<Self, GeometryError> {
        let err = rotation.orthonormality_error();
        let det_err = (rotation.det() - 1.0).abs();
        let rotation = if err <= ROTATION_TOL && det_err <= ROTATION_TOL {
            rotation
        } else if err <= ROTATION_REPAIR_TOL && det_err <= ROTATION_REPAIR_TOL {
            rotation
                .orthonormalize_polar()
                .ok_or(GeometryError::InvalidRotation { error: err })?
        } else {
            return Err(GeometryError::InvalidRotation { error: err.max(det_err) });
        };
        if !origin.is_finite() || !translation.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(AnchoredRigid { rotation, origin, translation })
    }

    pub fn identity_at(origin: Point3) -> Self {
        AnchoredRigid { rotation: Mat3::IDENTITY, origin, translation: Point3::ZERO }
    }

    /// `R (p - v) + v + t`, evaluated as `p + (R d - d) + t` with
    /// `d = p - v` so the identity transform is exact to the bit.
    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        let d = p - self.origin;
        p + (self.rotation.mul_vec(d) - d) + self.translation
    }

    /// `R^T (p - v - t) + v`, with the same exact-identity evaluation.
    #[inline]
    pub fn apply_inverse(&self, p: Point3) -> Point3 {
        let shifted = p - self.translation;
        let d = shifted - self.origin;
        shifted + (self.rotation.transpose_mul_vec(d) - d)
    }

    /// Image of the anchor itself; algebraically `origin + translation`.
    #[inline]
    pub fn transformed_origin(&self) -> Point3 {
        self.origin + self.translation
    }

    /// The same rigid motion re-anchored at a different origin.
    pub fn rebased_at(&self, new_origin: Point3) -> AnchoredRigid {
        // R(p - v) + v + t == R(p - v') + v' + t' with
        // t' = R(v' - v) + v + t - v'
        let t = self.apply(new_origin) - new_origin;
        AnchoredRigid { rotation: self.rotation, origin: new_origin, translation: t }
    }
}
