//! Axis-angle rotation parameterization: exponential map, its derivative,
//! and re-canonicalization. Keeping rotations in axis-angle form means SO(3)
//! holds by construction and the optimizer needs no orthogonality penalty.

use crate::geometry::{Mat3, Point3};

/// Below this angle the trigonometric coefficient formulas lose digits to
/// cancellation; Taylor expansions take over (well before the 1e-6 scale
/// where the map must stay smooth).
const SMALL_ANGLE: f64 = 1e-4;

/// Rodrigues coefficients a = sin(t)/t and b = (1-cos(t))/t^2.
fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    }
}

/// Exponential map: the rotation matrix `exp([aa]x)`.
pub fn rotation_from_axis_angle(aa: Point3) -> Mat3 {
    let theta = aa.norm();
    let (a, b) = rodrigues_coefficients(theta);
    let w = Mat3::skew(aa);
    let w2 = w.mul_mat(&w);
    Mat3::IDENTITY.add(&w.scale(a)).add(&w2.scale(b))
}

/// Jacobian of `aa -> rotation_from_axis_angle(aa) * u` with respect to `aa`
/// (column j = derivative along aa_j).
///
/// With R(w)u = u + a (w x u) + b (w x (w x u)):
///   J = ca (w x u) w^T + cb (w x (w x u)) w^T
///       - a [u]x - b ([w x u]x + [w]x [u]x)
/// where ca = a'(t)/t and cb = b'(t)/t.
pub fn rotate_vector_jacobian(aa: Point3, u: Point3) -> Mat3 {
    let theta = aa.norm();
    let (a, b) = rodrigues_coefficients(theta);
    let (ca, cb) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (-1.0 / 3.0 + t2 / 30.0, -1.0 / 12.0 + t2 / 180.0)
    } else {
        let t2 = theta * theta;
        (
            (theta * theta.cos() - theta.sin()) / (t2 * theta),
            (theta * theta.sin() - 2.0 * (1.0 - theta.cos())) / (t2 * t2),
        )
    };

    let wxu = aa.cross(u);
    let wxwxu = aa.cross(wxu);

    let mut j = outer(wxu, aa).scale(ca).add(&outer(wxwxu, aa).scale(cb));
    j = j.sub(&Mat3::skew(u).scale(a));
    j = j.sub(&Mat3::skew(wxu).add(&Mat3::skew(aa).mul_mat(&Mat3::skew(u))).scale(b));
    j
}

fn outer(a: Point3, b: Point3) -> Mat3 {
    Mat3::from_rows(
        [a.x * b.x, a.x * b.y, a.x * b.z],
        [a.y * b.x, a.y * b.y, a.y * b.z],
        [a.z * b.x, a.z * b.y, a.z * b.z],
    )
}

/// Wrap an axis-angle vector to magnitude in [0, pi], flipping the axis when
/// the angle folds over. The represented rotation is unchanged.
pub fn canonicalize_axis_angle(aa: Point3) -> Point3 {
    let theta = aa.norm();
    if theta <= std::f64::consts::PI {
        return aa;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let wrapped = theta % two_pi;
    if wrapped <= std::f64::consts::PI {
        aa * (wrapped / theta)
    } else {
        aa * (-(two_pi - wrapped) / theta)
    }
}
