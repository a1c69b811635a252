//! Small numeric helpers shared by the renderer, the optimizer and the dynamics code.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = Quaternion<f64>;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]; `p` is clamped away from 0 and 1.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Quaternion in (w, x, y, z) order from a raw array.
#[inline]
pub fn quat_from_wxyz(q: [f64; 4]) -> Quat {
    Quaternion::new(q[0], q[1], q[2], q[3])
}

#[inline]
pub fn quat_to_wxyz(q: &Quat) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

/// Normalizes a quaternion; the zero quaternion maps to identity.
pub fn normalize_quat(q: &Quat) -> Quat {
    let n = q.norm();
    if n > 0.0 && n.is_finite() {
        q / n
    } else {
        Quaternion::identity()
    }
}

/// Rotation matrix of `q / |q|`.
pub fn quat_to_matrix(q: &Quat) -> Mat3 {
    let q = normalize_quat(q);
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient w.r.t. the rotation matrix of `q / |q|` back to the raw
/// (unnormalized) quaternion components, returned in (w, x, y, z) order.
pub fn quat_matrix_backward(q: &Quat, grad_r: &Mat3) -> [f64; 4] {
    let norm = q.norm();
    let qn = normalize_quat(q);
    let (w, x, y, z) = (qn.w, qn.i, qn.j, qn.k);
    let g = |r: usize, c: usize| grad_r[(r, c)];
    let gw = 2.0
        * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let gx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2)
            + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let gy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
            - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let gz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    if !(norm > 0.0 && norm.is_finite()) {
        return [0.0; 4];
    }
    // d(q/|q|)/dq = (I - q̂ q̂ᵀ) / |q|
    let dot = gw * w + gx * x + gy * y + gz * z;
    [
        (gw - w * dot) / norm,
        (gx - x * dot) / norm,
        (gy - y * dot) / norm,
        (gz - z * dot) / norm,
    ]
}

/// Quaternion (w, x, y, z) of a proper rotation matrix.
pub fn matrix_to_quat(m: &Mat3) -> Quat {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
    let uq = UnitQuaternion::from_rotation_matrix(&rot);
    *uq.quaternion()
}

/// Spherical interpolation along the shorter arc.
pub fn slerp(a: &Quat, b: &Quat, w: f64) -> Quat {
    let ua = UnitQuaternion::new_normalize(*a);
    let mut qb = normalize_quat(b);
    if ua.quaternion().dot(&qb) < 0.0 {
        qb = -qb;
    }
    let ub = UnitQuaternion::new_unchecked(qb);
    match ua.try_slerp(&ub, w, 1e-12) {
        Some(q) => *q.quaternion(),
        None => *ua.quaternion(),
    }
}

/// Rotation about the world z axis (yaw), z-up convention.
pub fn yaw_matrix(yaw: f64) -> Mat3 {
    let (s, c) = yaw.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Checks `Rᵀ R = I` and `det R = 1` within `tol`.
pub fn is_rotation(m: &Mat3, tol: f64) -> bool {
    let e = m.transpose() * m - Mat3::identity();
    e.iter().all(|v| v.abs() <= tol) && (m.determinant() - 1.0).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_logit_roundtrip() {
        for &x in &[-20.0, -3.0, 0.0, 0.7, 12.0] {
            assert!((logit(sigmoid(x)) - x).abs() < 1e-8);
        }
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn quaternion_backward_matches_finite_differences() {
        let q = Quaternion::new(0.9, -0.2, 0.35, 0.1) * 1.7;
        let weights = Matrix3::new(0.3, -1.0, 0.2, 0.5, 0.7, -0.4, 1.1, 0.05, -0.6);
        let f = |q: &Quat| quat_to_matrix(q).component_mul(&weights).sum();
        let analytic = quat_matrix_backward(&q, &weights);
        let h = 1e-6;
        for (k, a) in analytic.iter().enumerate() {
            let mut qp = q;
            let mut qm = q;
            qp.coords[(k + 3) % 4] += h;
            qm.coords[(k + 3) % 4] -= h;
            let fd = (f(&qp) - f(&qm)) / (2.0 * h);
            assert!((fd - a).abs() < 1e-7, "component {k}: fd {fd} vs {a}");
        }
    }

    #[test]
    fn quat_matrix_roundtrip() {
        let m = yaw_matrix(0.7) * quat_to_matrix(&Quaternion::new(0.8, 0.1, -0.3, 0.2));
        let q = matrix_to_quat(&m);
        assert!((quat_to_matrix(&q) - m).norm() < 1e-12);
        assert!(is_rotation(&m, 1e-12));
    }
}
