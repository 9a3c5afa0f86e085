//! Small fixed-size 3D math used by the simulator and controller.
//!
//! Everything is generic over [`Real`] so the same expressions run on plain
//! `f64` and on the 8-lane [`W8`] used by the batched simulator kernels.
//! Keeping one set of formulas for both paths is what makes the batch/scalar
//! equivalence hold to the last bit: each lane executes the identical
//! sequence of floating-point operations.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar-like arithmetic required by the dynamics and controller math.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn splat(v: f64) -> Self;
    fn zero() -> Self {
        Self::splat(0.0)
    }
    fn one() -> Self {
        Self::splat(1.0)
    }
    fn sqrt(self) -> Self;
    fn min(self, other: Self) -> Self;
    fn max(self, other: Self) -> Self;
    fn mul_add(self, a: Self, b: Self) -> Self;
}

impl Real for f64 {
    #[inline(always)]
    fn splat(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline(always)]
    fn min(self, other: Self) -> Self {
        f64::min(self, other)
    }
    #[inline(always)]
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
    #[inline(always)]
    fn mul_add(self, a: Self, b: Self) -> Self {
        f64::mul_add(self, a, b)
    }
}

/// Eight independent f64 lanes.
///
/// On x86-64 with AVX-512 (or AVX) statically enabled, the arithmetic maps
/// to explicit wide intrinsics; the per-lane fallback keeps other targets
/// working. Lane `i` always computes exactly the same f64 operation sequence
/// as the scalar path, so batch results match scalar results bit for bit.
#[derive(Clone, Copy, Debug)]
#[repr(align(64))]
pub struct W8(pub [f64; 8]);

#[cfg(all(target_arch = "x86_64", target_feature = "avx512f"))]
mod w8_impl {
    use super::W8;
    use std::arch::x86_64::*;

    #[inline(always)]
    fn ld(v: &W8) -> __m512d {
        unsafe { _mm512_loadu_pd(v.0.as_ptr()) }
    }

    #[inline(always)]
    fn st(v: __m512d) -> W8 {
        let mut out = W8([0.0; 8]);
        unsafe { _mm512_storeu_pd(out.0.as_mut_ptr(), v) };
        out
    }

    #[inline(always)]
    pub fn add(a: W8, b: W8) -> W8 {
        st(unsafe { _mm512_add_pd(ld(&a), ld(&b)) })
    }
    #[inline(always)]
    pub fn sub(a: W8, b: W8) -> W8 {
        st(unsafe { _mm512_sub_pd(ld(&a), ld(&b)) })
    }
    #[inline(always)]
    pub fn mul(a: W8, b: W8) -> W8 {
        st(unsafe { _mm512_mul_pd(ld(&a), ld(&b)) })
    }
    #[inline(always)]
    pub fn div(a: W8, b: W8) -> W8 {
        st(unsafe { _mm512_div_pd(ld(&a), ld(&b)) })
    }
    #[inline(always)]
    pub fn neg(a: W8) -> W8 {
        st(unsafe { _mm512_sub_pd(_mm512_setzero_pd(), ld(&a)) })
    }
    #[inline(always)]
    pub fn sqrt(a: W8) -> W8 {
        st(unsafe { _mm512_sqrt_pd(ld(&a)) })
    }
    // x86 min/max return the second operand when the first is NaN, which
    // matches f64::min/f64::max exactly when the second operand is non-NaN
    // (true for every clamp bound in the kernels).
    #[inline(always)]
    pub fn min(a: W8, b: W8) -> W8 {
        st(unsafe { _mm512_min_pd(ld(&a), ld(&b)) })
    }
    #[inline(always)]
    pub fn max(a: W8, b: W8) -> W8 {
        st(unsafe { _mm512_max_pd(ld(&a), ld(&b)) })
    }
    #[inline(always)]
    pub fn mul_add(a: W8, b: W8, c: W8) -> W8 {
        st(unsafe { _mm512_fmadd_pd(ld(&a), ld(&b), ld(&c)) })
    }
}

#[cfg(all(
    target_arch = "x86_64",
    target_feature = "avx",
    not(target_feature = "avx512f")
))]
mod w8_impl {
    use super::W8;
    use std::arch::x86_64::*;

    #[inline(always)]
    fn ld(v: &W8) -> (__m256d, __m256d) {
        unsafe {
            (
                _mm256_loadu_pd(v.0.as_ptr()),
                _mm256_loadu_pd(v.0.as_ptr().add(4)),
            )
        }
    }

    #[inline(always)]
    fn st(lo: __m256d, hi: __m256d) -> W8 {
        let mut out = W8([0.0; 8]);
        unsafe {
            _mm256_storeu_pd(out.0.as_mut_ptr(), lo);
            _mm256_storeu_pd(out.0.as_mut_ptr().add(4), hi);
        }
        out
    }

    macro_rules! bin {
        ($name:ident, $intr:ident) => {
            #[inline(always)]
            pub fn $name(a: W8, b: W8) -> W8 {
                let (al, ah) = ld(&a);
                let (bl, bh) = ld(&b);
                unsafe { st($intr(al, bl), $intr(ah, bh)) }
            }
        };
    }
    bin!(add, _mm256_add_pd);
    bin!(sub, _mm256_sub_pd);
    bin!(mul, _mm256_mul_pd);
    bin!(div, _mm256_div_pd);
    bin!(min, _mm256_min_pd);
    bin!(max, _mm256_max_pd);

    #[inline(always)]
    pub fn neg(a: W8) -> W8 {
        let (al, ah) = ld(&a);
        unsafe {
            let z = _mm256_setzero_pd();
            st(_mm256_sub_pd(z, al), _mm256_sub_pd(z, ah))
        }
    }
    #[inline(always)]
    pub fn sqrt(a: W8) -> W8 {
        let (al, ah) = ld(&a);
        unsafe { st(_mm256_sqrt_pd(al), _mm256_sqrt_pd(ah)) }
    }
    #[inline(always)]
    pub fn mul_add(a: W8, b: W8, c: W8) -> W8 {
        let mut out = W8([0.0; 8]);
        for i in 0..8 {
            out.0[i] = a.0[i].mul_add(b.0[i], c.0[i]);
        }
        out
    }
}

#[cfg(not(all(
    target_arch = "x86_64",
    any(target_feature = "avx", target_feature = "avx512f")
)))]
mod w8_impl {
    use super::W8;

    macro_rules! bin {
        ($name:ident, $op:tt) => {
            #[inline(always)]
            pub fn $name(a: W8, b: W8) -> W8 {
                let mut out = W8([0.0; 8]);
                for i in 0..8 {
                    out.0[i] = a.0[i] $op b.0[i];
                }
                out
            }
        };
    }
    bin!(add, +);
    bin!(sub, -);
    bin!(mul, *);
    bin!(div, /);

    #[inline(always)]
    pub fn neg(a: W8) -> W8 {
        let mut out = W8([0.0; 8]);
        for i in 0..8 {
            out.0[i] = -a.0[i];
        }
        out
    }
    #[inline(always)]
    pub fn sqrt(a: W8) -> W8 {
        let mut out = W8([0.0; 8]);
        for i in 0..8 {
            out.0[i] = a.0[i].sqrt();
        }
        out
    }
    #[inline(always)]
    pub fn min(a: W8, b: W8) -> W8 {
        let mut out = W8([0.0; 8]);
        for i in 0..8 {
            out.0[i] = a.0[i].min(b.0[i]);
        }
        out
    }
    #[inline(always)]
    pub fn max(a: W8, b: W8) -> W8 {
        let mut out = W8([0.0; 8]);
        for i in 0..8 {
            out.0[i] = a.0[i].max(b.0[i]);
        }
        out
    }
    #[inline(always)]
    pub fn mul_add(a: W8, b: W8, c: W8) -> W8 {
        let mut out = W8([0.0; 8]);
        for i in 0..8 {
            out.0[i] = a.0[i].mul_add(b.0[i], c.0[i]);
        }
        out
    }
}

impl Add for W8 {
    type Output = W8;
    #[inline(always)]
    fn add(self, rhs: W8) -> W8 {
        w8_impl::add(self, rhs)
    }
}

impl Sub for W8 {
    type Output = W8;
    #[inline(always)]
    fn sub(self, rhs: W8) -> W8 {
        w8_impl::sub(self, rhs)
    }
}

impl Mul for W8 {
    type Output = W8;
    #[inline(always)]
    fn mul(self, rhs: W8) -> W8 {
        w8_impl::mul(self, rhs)
    }
}

impl Div for W8 {
    type Output = W8;
    #[inline(always)]
    fn div(self, rhs: W8) -> W8 {
        w8_impl::div(self, rhs)
    }
}

impl Neg for W8 {
    type Output = W8;
    #[inline(always)]
    fn neg(self) -> W8 {
        w8_impl::neg(self)
    }
}

impl Real for W8 {
    #[inline(always)]
    fn splat(v: f64) -> Self {
        W8([v; 8])
    }
    #[inline(always)]
    fn sqrt(self) -> Self {
        w8_impl::sqrt(self)
    }
    #[inline(always)]
    fn min(self, other: Self) -> Self {
        w8_impl::min(self, other)
    }
    #[inline(always)]
    fn max(self, other: Self) -> Self {
        w8_impl::max(self, other)
    }
    #[inline(always)]
    fn mul_add(self, a: Self, b: Self) -> Self {
        w8_impl::mul_add(self, a, b)
    }
}

/// 3-vector, generic over the scalar type (defaults to `f64`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<R = f64> {
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> Vec3<R> {
    #[inline(always)]
    pub fn new(x: R, y: R, z: R) -> Self {
        Vec3 { x, y, z }
    }

    #[inline(always)]
    pub fn zero() -> Self {
        Vec3::new(R::zero(), R::zero(), R::zero())
    }

    #[inline(always)]
    pub fn splat3(v: [f64; 3]) -> Self {
        Vec3::new(R::splat(v[0]), R::splat(v[1]), R::splat(v[2]))
    }

    #[inline(always)]
    pub fn dot(self, rhs: Self) -> R {
        self.x.mul_add(rhs.x, self.y.mul_add(rhs.y, self.z * rhs.z))
    }

    #[inline(always)]
    pub fn cross(self, rhs: Self) -> Self {
        Vec3::new(
            self.y.mul_add(rhs.z, -(self.z * rhs.y)),
            self.z.mul_add(rhs.x, -(self.x * rhs.z)),
            self.x.mul_add(rhs.y, -(self.y * rhs.x)),
        )
    }

    /// Fused `self * h + add`, component-wise.
    #[inline(always)]
    pub fn fma_scale(self, h: R, add: Self) -> Self {
        Vec3::new(
            self.x.mul_add(h, add.x),
            self.y.mul_add(h, add.y),
            self.z.mul_add(h, add.z),
        )
    }

    #[inline(always)]
    pub fn norm_sq(self) -> R {
        self.dot(self)
    }

    #[inline(always)]
    pub fn norm(self) -> R {
        self.norm_sq().sqrt()
    }

    /// Component-wise product.
    #[inline(always)]
    pub fn mul_elem(self, rhs: Self) -> Self {
        Vec3::new(self.x * rhs.x, self.y * rhs.y, self.z * rhs.z)
    }

    #[inline(always)]
    pub fn scale(self, s: R) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Vec3<f64> {
    #[inline(always)]
    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    #[inline(always)]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector in the same direction, or `None` below `eps`.
    pub fn try_normalize(self, eps: f64) -> Option<Self> {
        let n = self.norm();
        if n > eps {
            Some(self.scale(1.0 / n))
        } else {
            None
        }
    }
}

impl<R: Real> Add for Vec3<R> {
    type Output = Self;
    #[inline(always)]
    fn add(self, rhs: Self) -> Self {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl<R: Real> Sub for Vec3<R> {
    type Output = Self;
    #[inline(always)]
    fn sub(self, rhs: Self) -> Self {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl<R: Real> Neg for Vec3<R> {
    type Output = Self;
    #[inline(always)]
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion, scalar-first, representing the body-to-world rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat<R = f64> {
    pub w: R,
    pub x: R,
    pub y: R,
    pub z: R,
}

impl<R: Real> Quat<R> {
    #[inline(always)]
    pub fn new(w: R, x: R, y: R, z: R) -> Self {
        Quat { w, x, y, z }
    }

    #[inline(always)]
    pub fn identity() -> Self {
        Quat::new(R::one(), R::zero(), R::zero(), R::zero())
    }

    /// Hamilton product.
    #[inline(always)]
    pub fn mul_quat(self, r: Self) -> Self {
        Quat::new(
            self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        )
    }

    /// Quaternion kinematics: dq/dt = 1/2 q ⊗ [0, Ω] for body rates Ω.
    /// Expanded with the zero scalar part folded away and fused
    /// multiply-adds in the inner products.
    #[inline(always)]
    pub fn rate(self, omega: Vec3<R>) -> Self {
        let half = R::splat(0.5);
        let w = self.y.mul_add(omega.y, self.z * omega.z);
        let x = self.y.mul_add(omega.z, -(self.z * omega.y));
        let y = self.z.mul_add(omega.x, -(self.x * omega.z));
        let z = self.x.mul_add(omega.y, -(self.y * omega.x));
        Quat::new(
            -self.x.mul_add(omega.x, w) * half,
            self.w.mul_add(omega.x, x) * half,
            self.w.mul_add(omega.y, y) * half,
            self.w.mul_add(omega.z, z) * half,
        )
    }

    #[inline(always)]
    pub fn norm(self) -> R {
        self.w
            .mul_add(
                self.w,
                self.x.mul_add(self.x, self.y.mul_add(self.y, self.z * self.z)),
            )
            .sqrt()
    }

    #[inline(always)]
    pub fn normalize(self) -> Self {
        let inv = R::one() / self.norm();
        Quat::new(self.w * inv, self.x * inv, self.y * inv, self.z * inv)
    }

    /// Rotate a body-frame vector into the world frame.
    #[inline(always)]
    pub fn rotate(self, v: Vec3<R>) -> Vec3<R> {
        // v' = v + 2 w (u × v) + 2 u × (u × v)  with u the vector part
        let u = Vec3::new(self.x, self.y, self.z);
        let uv = u.cross(v);
        let uuv = u.cross(uv);
        let two = R::splat(2.0);
        Vec3::new(
            v.x + two * (self.w * uv.x + uuv.x),
            v.y + two * (self.w * uv.y + uuv.y),
            v.z + two * (self.w * uv.z + uuv.z),
        )
    }

    /// Rotation by a not-necessarily-unit quaternion: the sandwich product
    /// compensated by 2/‖q‖². Algebraically equals normalizing first, but
    /// costs a division instead of a sqrt-plus-division.
    #[inline(always)]
    pub fn rotate_scaled(self, v: Vec3<R>) -> Vec3<R> {
        let u = Vec3::new(self.x, self.y, self.z);
        let uv = u.cross(v);
        let uuv = u.cross(uv);
        let nsq = self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z;
        let two_inv = R::splat(2.0) / nsq;
        Vec3::new(
            v.x + two_inv * (self.w * uv.x + uuv.x),
            v.y + two_inv * (self.w * uv.y + uuv.y),
            v.z + two_inv * (self.w * uv.z + uuv.z),
        )
    }

    /// Norm-compensated rotation of the body z axis scaled by `f`: the third
    /// column of the rotation matrix times `f`, for a not-necessarily-unit
    /// quaternion. Same value as `rotate_scaled((0,0,f))` in fewer operations.
    #[inline(always)]
    pub fn rotate_z_scaled(self, f: R) -> Vec3<R> {
        let nsq = self.w.mul_add(
            self.w,
            self.x.mul_add(self.x, self.y.mul_add(self.y, self.z * self.z)),
        );
        let a = (f + f) / nsq;
        Vec3::new(
            a * self.x.mul_add(self.z, self.w * self.y),
            a * self.y.mul_add(self.z, -(self.w * self.x)),
            (-a).mul_add(self.x.mul_add(self.x, self.y * self.y), f),
        )
    }

    /// Rotate a world-frame vector into the body frame.
    #[inline(always)]
    pub fn rotate_inv(self, v: Vec3<R>) -> Vec3<R> {
        Quat::new(self.w, -self.x, -self.y, -self.z).rotate(v)
    }
}

impl Quat<f64> {
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let half = 0.5 * angle;
        let (s, c) = half.sin_cos();
        let a = axis.try_normalize(1e-12).unwrap_or(Vec3::new(0.0, 0.0, 1.0));
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotation matrix (body→world) with columns = rotated basis vectors.
    pub fn to_mat(self) -> Mat3 {
        Mat3::from_columns(
            self.rotate(Vec3::new(1.0, 0.0, 0.0)),
            self.rotate(Vec3::new(0.0, 1.0, 0.0)),
            self.rotate(Vec3::new(0.0, 0.0, 1.0)),
        )
    }

    /// Quaternion of a rotation matrix, via the largest-pivot branch of
    /// Shepperd's method. Returns the unit quaternion with w >= 0.
    pub fn from_mat(r: &Mat3) -> Self {
        let m = &r.m;
        let trace = m[0][0] + m[1][1] + m[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat::new(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        };
        let q = q.normalize();
        if q.w < 0.0 {
            Quat::new(-q.w, -q.x, -q.y, -q.z)
        } else {
            q
        }
    }
}

/// Row-major 3×3 matrix over `f64`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub fn identity() -> Self {
        Mat3 {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Mat3 {
            m: [
                [c0.x, c1.x, c2.x],
                [c0.y, c1.y, c2.y],
                [c0.z, c1.z, c2.z],
            ],
        }
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, rhs: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[i][0] * rhs.m[0][j] + self.m[i][1] * rhs.m[1][j] + self.m[i][2] * rhs.m[2][j];
            }
        }
        Mat3 { m: out }
    }

    pub fn sub(&self, rhs: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[i][j] - rhs.m[i][j];
            }
        }
        Mat3 { m: out }
    }

    /// Inverse of the hat map: extract the vector from a skew-symmetric matrix.
    pub fn vee(&self) -> Vec3 {
        Vec3::new(self.m[2][1], self.m[0][2], self.m[1][0])
    }
}
