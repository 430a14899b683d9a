//! Continuous 6D rotation encoding and rigid bone transforms.
//!
//! A rotation is encoded by its first two columns (front, then up). Decoding
//! runs Gram-Schmidt on the two vectors and completes the frame with a cross
//! product, so every nondegenerate 6-vector maps to a proper rotation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Row-major 3×3 matrix, `m[row][col]`.
pub type Mat3<T> = [[T; 3]; 3];

pub const ORTHONORMAL_TOL: f64 = 1e-6;
const DEGENERATE_NORM: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum RotationError {
    #[error("matrix is not a rotation (orthonormality error {ortho_err:.3e}, det {det})")]
    NotOrthonormal { ortho_err: f64, det: f64 },
    #[error("6D vectors are degenerate (zero length or parallel)")]
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rot6D<T>(pub [T; 6]);

impl<T: Real> Rot6D<T> {
    pub fn front(&self) -> [T; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn up(&self) -> [T; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }
}

/// Rigid transform `x -> R x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoneTransform<T> {
    pub rotation: Mat3<T>,
    pub translation: [T; 3],
}

pub fn identity<T: Real>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn rot_x<T: Real>(angle: T) -> Mat3<T> {
    let (s, c) = angle.sin_cos();
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, c, -s], [z, s, c]]
}

pub fn rot_y<T: Real>(angle: T) -> Mat3<T> {
    let (s, c) = angle.sin_cos();
    let (o, z) = (T::one(), T::zero());
    [[c, z, s], [z, o, z], [-s, z, c]]
}

pub fn rot_z<T: Real>(angle: T) -> Mat3<T> {
    let (s, c) = angle.sin_cos();
    let (o, z) = (T::one(), T::zero());
    [[c, -s, z], [s, c, z], [z, z, o]]
}

pub fn mat_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
        }
    }
    out
}

pub fn transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut t = *a;
    for (r, row) in a.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            t[c][r] = v;
        }
    }
    t
}

pub fn mat_vec<T: Real>(m: &Mat3<T>, v: &[T; 3]) -> [T; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn determinant<T: Real>(m: &Mat3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Largest entry of `|RᵀR - I|`.
pub fn orthonormality_error<T: Real>(m: &Mat3<T>) -> T {
    let g = mat_mul(&transpose(m), m);
    let mut worst = T::zero();
    for (r, row) in g.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let target = if r == c { T::one() } else { T::zero() };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}

pub fn check_rotation<T: Real>(m: &Mat3<T>) -> Result<(), RotationError> {
    let err = orthonormality_error(m);
    let det = determinant(m);
    let tol = T::of(ORTHONORMAL_TOL);
    if !(err <= tol) || !((det - T::one()).abs() <= tol) {
        return Err(RotationError::NotOrthonormal { ortho_err: err.as_f64(), det: det.as_f64() });
    }
    Ok(())
}

fn dot3<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// First two columns of `m`, x-column then y-column.
pub fn encode_6d<T: Real>(m: &Mat3<T>) -> Result<Rot6D<T>, RotationError> {
    check_rotation(m)?;
    Ok(Rot6D([m[0][0], m[1][0], m[2][0], m[0][1], m[1][1], m[2][1]]))
}

pub fn decode_6d<T: Real>(r: &Rot6D<T>) -> Result<Mat3<T>, RotationError> {
    let eps = T::of(DEGENERATE_NORM);
    let v1 = r.front();
    let v2 = r.up();
    let n1 = dot3(&v1, &v1).sqrt();
    if !(n1 > eps) {
        return Err(RotationError::Degenerate);
    }
    let b1 = [v1[0] / n1, v1[1] / n1, v1[2] / n1];
    let p = dot3(&b1, &v2);
    let u = [v2[0] - p * b1[0], v2[1] - p * b1[1], v2[2] - p * b1[2]];
    let n2 = dot3(&u, &u).sqrt();
    if !(n2 > eps) {
        return Err(RotationError::Degenerate);
    }
    let b2 = [u[0] / n2, u[1] / n2, u[2] / n2];
    let b3 = cross3(&b1, &b2);
    Ok([[b1[0], b2[0], b3[0]], [b1[1], b2[1], b3[1]], [b1[2], b2[2], b3[2]]])
}

impl<T: Real> BoneTransform<T> {
    pub fn new(rotation: Mat3<T>, translation: [T; 3]) -> Result<Self, RotationError> {
        check_rotation(&rotation)?;
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: identity(), translation: [T::zero(); 3] }
    }

    pub fn apply(&self, p: &[T; 3]) -> [T; 3] {
        let r = mat_vec(&self.rotation, p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &Self) -> Self {
        Self { rotation: mat_mul(&self.rotation, &other.rotation), translation: self.apply(&other.translation) }
    }

    pub fn inverse(&self) -> Self {
        let rt = transpose(&self.rotation);
        let t = mat_vec(&rt, &self.translation);
        Self { rotation: rt, translation: [-t[0], -t[1], -t[2]] }
    }

    /// Rotation by `rotation` about the fixed point `pivot`.
    pub fn about_pivot(rotation: Mat3<T>, pivot: [T; 3]) -> Self {
        let r = mat_vec(&rotation, &pivot);
        Self { rotation, translation: [pivot[0] - r[0], pivot[1] - r[1], pivot[2] - r[2]] }
    }
}

/// 6D rotation followed by the translation: the matrix-attribute expansion
/// used everywhere rig inputs are packed into vectors.
pub fn encode_transform<T: Real>(t: &BoneTransform<T>) -> Result<[T; 9], RotationError> {
    let r = encode_6d(&t.rotation)?;
    let mut out = [T::zero(); 9];
    out[..6].copy_from_slice(&r.0);
    out[6..].copy_from_slice(&t.translation);
    Ok(out)
}

pub fn decode_transform<T: Real>(v: &[T]) -> Result<BoneTransform<T>, RotationError> {
    let mut six = [T::zero(); 6];
    six.copy_from_slice(&v[..6]);
    let rotation = decode_6d(&Rot6D(six))?;
    Ok(BoneTransform { rotation, translation: [v[6], v[7], v[8]] })
}

/// Uniformly distributed rotation (Shoemake's unit quaternion construction).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3<f64> {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let u3: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    quaternion_to_matrix([a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos()])
}

/// `[x, y, z, w]` unit quaternion to matrix.
pub fn quaternion_to_matrix(q: [f64; 4]) -> Mat3<f64> {
    let [x, y, z, w] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Encoders kept only to demonstrate why they are not used as network inputs:
/// both have discontinuities on a full turn.
pub mod baseline {
    use super::Mat3;

    /// XYZ Euler angles `(rx, ry, rz)` with `R = Rz Ry Rx`, each in `(-π, π]`.
    pub fn euler_xyz(m: &Mat3<f64>) -> [f64; 3] {
        let ry = (-m[2][0]).clamp(-1.0, 1.0).asin();
        let rx = m[2][1].atan2(m[2][2]);
        let rz = m[1][0].atan2(m[0][0]);
        [rx, ry, rz]
    }

    /// Unit quaternion `[x, y, z, w]` canonicalized to `w >= 0`.
    pub fn quaternion(m: &Mat3<f64>) -> [f64; 4] {
        let trace = m[0][0] + m[1][1] + m[2][2];
        let mut q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            [(m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s, 0.25 * s]
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            [0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s, (m[2][1] - m[1][2]) / s]
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            [(m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s, (m[0][2] - m[2][0]) / s]
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            [(m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s, (m[1][0] - m[0][1]) / s]
        };
        if q[3] < 0.0 {
            q.iter_mut().for_each(|v| *v = -*v);
        }
        q
    }
}
