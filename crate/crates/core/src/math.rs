//! Small fixed-size vector and rotation helpers on `[f64; 3]`.

use libm::{cos, sin, sqrt};

pub type Vec3 = [f64; 3];
/// Row-major 3×3 matrix.
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    sqrt(dot(a, a))
}

/// Returns `a / |a|`, or `None` for the zero vector.
pub fn normalize(a: Vec3) -> Option<Vec3> {
    let n = norm(a);
    (n > 0.0).then(|| scale(a, 1.0 / n))
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub fn mat_t_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn transpose(m: &Mat3) -> Mat3 {
    [[m[0][0], m[1][0], m[2][0]], [m[0][1], m[1][1], m[2][1]], [m[0][2], m[1][2], m[2][2]]]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn rot_x(t: f64) -> Mat3 {
    let (s, c) = (sin(t), cos(t));
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rot_y(t: f64) -> Mat3 {
    let (s, c) = (sin(t), cos(t));
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rot_z(t: f64) -> Mat3 {
    let (s, c) = (sin(t), cos(t));
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Rotate a vector about +z by `t` radians.
#[inline]
pub fn rotate_z(v: Vec3, t: f64) -> Vec3 {
    let (s, c) = (sin(t), cos(t));
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

/// Intrinsic x-y-z Euler angles: `R = Rx(a) · Ry(b) · Rz(c)`.
pub fn euler_xyz(angles: Vec3) -> Mat3 {
    mat_mul(&mat_mul(&rot_x(angles[0]), &rot_y(angles[1])), &rot_z(angles[2]))
}

/// Inverse of [`euler_xyz`], returning angles in `(-π, π]` (middle angle in `[-π/2, π/2]`).
pub fn euler_xyz_angles(m: &Mat3) -> Vec3 {
    let sb = m[0][2].clamp(-1.0, 1.0);
    let b = libm::asin(sb);
    if libm::fabs(sb) < 1.0 - 1e-12 {
        let a = libm::atan2(-m[1][2], m[2][2]);
        let c = libm::atan2(-m[0][1], m[0][0]);
        [a, b, c]
    } else {
        // Gimbal lock: fold everything into the first angle.
        let a = libm::atan2(m[2][1], m[1][1]);
        [a, b, 0.0]
    }
}

/// Rotation matrix for the axis-angle vector `w` (Rodrigues).
pub fn axis_angle(w: Vec3) -> Mat3 {
    let theta = norm(w);
    if theta < 1e-300 {
        return IDENTITY;
    }
    let k = scale(w, 1.0 / theta);
    let (s, c) = (sin(theta), cos(theta));
    let v = 1.0 - c;
    [
        [c + k[0] * k[0] * v, k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s],
        [k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v, k[1] * k[2] * v - k[0] * s],
        [k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v],
    ]
}
