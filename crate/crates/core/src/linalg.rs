//! Fixed-size 3-vectors, 3×3 matrices and rotation helpers.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    /// Unit vector along axis `i` (0, 1 or 2).
    pub fn axis(i: usize) -> Self {
        let mut v = Self::zero();
        v[i] = T::one();
        v
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Returns the unit vector; the zero vector maps to itself.
    pub fn normalize(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self * (T::one() / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs(self) -> T {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.z.to_f64_lossy()),
        )
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub const fn from_rows(m: [[T; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self::from_rows([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn zero() -> Self {
        Self::from_rows([[T::zero(); 3]; 3])
    }

    pub fn diagonal(d: Vec3<T>) -> Self {
        let z = T::zero();
        Self::from_rows([[d.x, z, z], [z, d.y, z], [z, z, d.z]])
    }

    /// Cross-product matrix: `skew(a) * b == a.cross(b)`.
    pub fn skew(a: Vec3<T>) -> Self {
        let z = T::zero();
        Self::from_rows([[z, -a.z, a.y], [a.z, z, -a.x], [-a.y, a.x, z]])
    }

    pub fn row(&self, i: usize) -> Vec3<T> {
        Vec3::from_array(self.m[i])
    }

    pub fn col(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self::from_rows([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let m = &self.m;
        let inv = T::one() / det;
        let c = |a: usize, b: usize, c: usize, d: usize| m[a][b] * m[c][d];
        Some(Self::from_rows([
            [
                (c(1, 1, 2, 2) - c(1, 2, 2, 1)) * inv,
                (c(0, 2, 2, 1) - c(0, 1, 2, 2)) * inv,
                (c(0, 1, 1, 2) - c(0, 2, 1, 1)) * inv,
            ],
            [
                (c(1, 2, 2, 0) - c(1, 0, 2, 2)) * inv,
                (c(0, 0, 2, 2) - c(0, 2, 2, 0)) * inv,
                (c(0, 2, 1, 0) - c(0, 0, 1, 2)) * inv,
            ],
            [
                (c(1, 0, 2, 1) - c(1, 1, 2, 0)) * inv,
                (c(0, 1, 2, 0) - c(0, 0, 2, 1)) * inv,
                (c(0, 0, 1, 1) - c(0, 1, 1, 0)) * inv,
            ],
        ]))
    }

    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    /// `selfᵀ · v` without forming the transpose.
    pub fn tr_mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        Vec3::new(self.col(0).dot(v), self.col(1).dot(v), self.col(2).dot(v))
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    /// Largest absolute entry of `selfᵀ·self − I`.
    pub fn orthonormality_error(&self) -> T {
        let g = self.transpose() * *self;
        let mut err = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { T::one() } else { T::zero() };
                err = err.max((g.m[i][j] - target).abs());
            }
        }
        err
    }

    /// Orthogonal polar factor via Newton iteration `X ← (X + X⁻ᵀ)/2`.
    ///
    /// Returns the nearest orthogonal matrix in Frobenius norm; the input
    /// must be non-singular with positive determinant for the result to be a
    /// rotation.
    pub fn orthonormalized(&self) -> Option<Self> {
        let mut x = *self;
        for _ in 0..32 {
            let inv_t = x.inverse()?.transpose();
            let next = (x + inv_t).scale(T::half());
            let delta = (next - x).max_abs();
            x = next;
            if delta <= T::epsilon() * T::lit(4.0) {
                break;
            }
        }
        Some(x)
    }

    pub fn max_abs(&self) -> T {
        self.m
            .iter()
            .flat_map(|r| r.iter())
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flat_map(|r| r.iter()).all(|v| v.is_finite())
    }

    pub fn trace(&self) -> T {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    /// Frobenius inner product `Σ aᵢⱼ bᵢⱼ`.
    pub fn frobenius_dot(&self, o: &Self) -> T {
        let mut s = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                s += self.m[i][j] * o.m[i][j];
            }
        }
        s
    }

    pub fn cast<U: Real>(&self) -> Mat3<U> {
        let mut out = Mat3::<U>::zero();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = U::lit(self.m[i][j].to_f64_lossy());
            }
        }
        out
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] += o.m[i][j];
            }
        }
        out
    }
}

impl<T: Real> Sub for Mat3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] -= o.m[i][j];
            }
        }
        out
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut s = T::zero();
                for k in 0..3 {
                    s += self.m[i][k] * o.m[k][j];
                }
                out.m[i][j] = s;
            }
        }
        out
    }
}

impl<T: Real> Mul<Vec3<T>> for Mat3<T> {
    type Output = Vec3<T>;
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        self.mul_vec(v)
    }
}

/// Rotation matrix from an axis-angle vector (Rodrigues).
pub fn so3_exp<T: Real>(omega: Vec3<T>) -> Mat3<T> {
    let theta2 = omega.norm_squared();
    let k = Mat3::skew(omega);
    let k2 = k * k;
    let (a, b) = if theta2 < T::lit(1e-12) {
        // Taylor terms of sin(θ)/θ and (1 − cos θ)/θ².
        (
            T::one() - theta2 / T::lit(6.0),
            T::half() - theta2 / T::lit(24.0),
        )
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
    };
    Mat3::identity() + k.scale(a) + k2.scale(b)
}

/// Axis-angle vector of a rotation matrix; inverse of [`so3_exp`] for angles in `[0, π)`.
pub fn so3_log<T: Real>(r: &Mat3<T>) -> Vec3<T> {
    let cos = ((r.trace() - T::one()) * T::half())
        .max(-T::one())
        .min(T::one());
    let theta = cos.acos();
    let w = Vec3::new(
        r.m[2][1] - r.m[1][2],
        r.m[0][2] - r.m[2][0],
        r.m[1][0] - r.m[0][1],
    );
    if theta < T::lit(1e-6) {
        return w * T::half();
    }
    if T::PI() - theta < T::lit(1e-6) {
        // Near π the antisymmetric part vanishes; read the axis from R + I.
        let b = (*r + Mat3::identity()).scale(T::half());
        let mut best = 0;
        for i in 1..3 {
            if b.m[i][i] > b.m[best][best] {
                best = i;
            }
        }
        let axis = b.col(best).normalize();
        return axis * theta;
    }
    w * (theta / (T::two() * theta.sin()))
}

/// Angle in radians of the relative rotation `aᵀ b`.
pub fn rotation_angle_between<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> T {
    so3_log(&(a.transpose() * *b)).norm()
}

/// Unit quaternion stored as `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quat<T> {
    pub const fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(self) -> T {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalize(self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        let a = axis.normalize();
        let (s, c) = (angle * T::half()).sin_cos();
        Self::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Rotation matrix of the (assumed unit) quaternion.
    pub fn to_matrix(self) -> Mat3<T> {
        let Self { w, x, y, z } = self;
        let two = T::two();
        let one = T::one();
        Mat3::from_rows([
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ])
    }

    /// Quaternion of a rotation matrix (Shepperd's method), `w ≥ 0`.
    pub fn from_matrix(r: &Mat3<T>) -> Self {
        let m = &r.m;
        let tr = r.trace();
        let one = T::one();
        let quarter = T::lit(0.25);
        let q = if tr > T::zero() {
            let s = (tr + one).sqrt() * T::two();
            Self::new(
                quarter * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::two();
            Self::new(
                (m[2][1] - m[1][2]) / s,
                quarter * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::two();
            Self::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                quarter * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::two();
            Self::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                quarter * s,
            )
        };
        let q = q.normalize();
        if q.w < T::zero() {
            Self::new(-q.w, -q.x, -q.y, -q.z)
        } else {
            q
        }
    }
}
