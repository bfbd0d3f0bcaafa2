use serde::{Deserialize, Serialize};

use super::point::Point3;

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 9]", into = "[f64; 9]")]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_rows(r0: [f64; 3], r1: [f64; 3], r2: [f64; 3]) -> Self {
        Mat3 { m: [r0, r1, r2] }
    }

    /// Skew-symmetric cross-product matrix: `skew(v) * u == v.cross(u)`.
    pub fn skew(v: Point3) -> Self {
        Mat3::from_rows([0.0, -v.z, v.y], [v.z, 0.0, -v.x], [-v.y, v.x, 0.0])
    }

    /// Rotation about the z axis by `angle` radians.
    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Mat3::from_rows([c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0])
    }

    /// Rotation about the y axis by `angle` radians.
    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Mat3::from_rows([c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c])
    }

    /// Rotation about the x axis by `angle` radians.
    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Mat3::from_rows([1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c])
    }

    #[inline]
    pub fn mul_vec(&self, v: Point3) -> Point3 {
        Point3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    /// `self^T * v` without materializing the transpose.
    #[inline]
    pub fn transpose_mul_vec(&self, v: Point3) -> Point3 {
        Point3::new(
            self.m[0][0] * v.x + self.m[1][0] * v.y + self.m[2][0] * v.z,
            self.m[0][1] * v.x + self.m[1][1] * v.y + self.m[2][1] * v.z,
            self.m[0][2] * v.x + self.m[1][2] * v.y + self.m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, other: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Mat3 { m: out }
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3::from_rows(
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        )
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate; `None` when |det| is below `1e-12 * scale`.
    pub fn inverse(&self) -> Option<Mat3> {
        let m = &self.m;
        let det = self.det();
        let scale = self.frobenius_norm().powi(3).max(1e-30);
        if det.abs() < 1e-12 * scale.max(1.0) {
            return None;
        }
        let inv_det = 1.0 / det;
        let mut out = [[0.0; 3]; 3];
        out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
        out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
        out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
        out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
        out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
        out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
        out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
        out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
        out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
        Some(Mat3 { m: out })
    }

    pub fn add(&self, other: &Mat3) -> Mat3 {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat3) -> Mat3 {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Mat3, f: impl Fn(f64, f64) -> f64) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (row, (a, b)) in out.iter_mut().zip(self.m.iter().zip(&other.m)) {
            for (cell, (x, y)) in row.iter_mut().zip(a.iter().zip(b)) {
                *cell = f(*x, *y);
            }
        }
        Mat3 { m: out }
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut out = self.m;
        for row in &mut out {
            for v in row {
                *v *= s;
            }
        }
        Mat3 { m: out }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius norm of `R^T R - I`; zero for orthonormal matrices.
    pub fn orthonormality_error(&self) -> f64 {
        self.transpose().mul_mat(self).sub(&Mat3::IDENTITY).frobenius_norm()
    }

    /// Nearest orthogonal matrix via Newton iteration on the polar
    /// decomposition: `X <- (X + X^-T) / 2`. Converges quadratically for
    /// matrices already close to orthogonal.
    pub fn orthonormalize_polar(&self) -> Option<Mat3> {
        let mut x = *self;
        for _ in 0..32 {
            let inv_t = x.inverse()?.transpose();
            let next = x.add(&inv_t).scale(0.5);
            let delta = next.sub(&x).frobenius_norm();
            x = next;
            if delta < 1e-15 {
                break;
            }
        }
        Some(x)
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn from_row_major(a: [f64; 9]) -> Mat3 {
        Mat3::from_rows([a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]])
    }
}

impl From<[f64; 9]> for Mat3 {
    fn from(a: [f64; 9]) -> Self {
        Mat3::from_row_major(a)
    }
}

impl From<Mat3> for [f64; 9] {
    fn from(m: Mat3) -> Self {
        m.to_row_major()
    }
}

/// Unit quaternion (w, x, y, z) used for rotation blending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Quaternion of the rotation `exp([aa]x)`. Uses the Taylor expansion of
    /// `sin(t/2)/t` near zero so the map stays smooth.
    pub fn from_axis_angle(aa: Point3) -> Quat {
        let theta = aa.norm();
        let half = 0.5 * theta;
        // sin(theta/2)/theta
        let k = if theta < 1e-6 {
            0.5 - theta * theta / 48.0
        } else {
            half.sin() / theta
        };
        Quat { w: half.cos(), x: aa.x * k, y: aa.y * k, z: aa.z * k }
    }

    pub fn dot(self, other: Quat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn scaled(self, s: f64) -> Quat {
        Quat { w: self.w * s, x: self.x * s, y: self.y * s, z: self.z * s }
    }

    pub fn add(self, other: Quat) -> Quat {
        Quat {
            w: self.w + other.w,
            x: self.x + other.x,
            y: self.y + other.y,
            z: self.z + other.z,
        }
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Option<Quat> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self.scaled(1.0 / n))
        } else {
            None
        }
    }

    pub fn to_mat3(self) -> Mat3 {
        let Quat { w, x, y, z } = self;
        Mat3::from_rows(
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn rot_z_quarter_turn() {
        let r = Mat3::rot_z(FRAC_PI_2);
        let p = r.mul_vec(Point3::new(1.0, 0.0, 0.0));
        assert!(p.distance(Point3::new(0.0, 1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn inverse_round_trip() {
        let m = Mat3::from_rows([2.0, 1.0, 0.5], [0.0, 3.0, -1.0], [1.0, 0.0, 1.5]);
        let inv = m.inverse().unwrap();
        let id = m.mul_mat(&inv);
        assert!(id.sub(&Mat3::IDENTITY).frobenius_norm() < 1e-12);
    }

    #[test]
    fn polar_projection_restores_rotation() {
        let r = Mat3::rot_z(0.7).mul_mat(&Mat3::rot_x(-0.3));
        // Perturb slightly off SO(3), then project back.
        let mut p = r;
        p.m[0][0] += 3e-7;
        p.m[1][2] -= 2e-7;
        let q = p.orthonormalize_polar().unwrap();
        assert!(q.orthonormality_error() < 1e-14);
        assert!(q.sub(&r).frobenius_norm() < 1e-6);
    }

    #[test]
    fn quat_matches_matrix_rotation() {
        let aa = Point3::new(0.3, -0.5, 0.8);
        let q = Quat::from_axis_angle(aa);
        let m = q.to_mat3();
        assert!(m.orthonormality_error() < 1e-14);
        assert!((m.det() - 1.0).abs() < 1e-14);
        // Rotating the axis itself is a no-op.
        let axis = aa.normalized().unwrap();
        assert!(m.mul_vec(axis).distance(axis) < 1e-14);
    }
}
