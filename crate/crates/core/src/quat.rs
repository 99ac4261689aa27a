//! Quaternion algebra in the scalar-last layout `[v1, v2, v3, s]`.
//!
//! A quaternion `q = s + v1·i + v2·j + v3·k` is stored as its vector part
//! followed by its scalar part, both in memory and in serialized form. The
//! product is Hamilton's (`ij = k`), and the attitude matrix is the
//! reference-to-body map `A(q)·x = q* x q`, which makes `A` reverse the
//! order of products: `A(pq) = A(q)·A(p)`.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};

/// Tolerance on `| |q| − 1 |` for operations that require a unit quaternion.
pub const UNIT_TOL: f64 = 1e-9;

/// `|Sq|` at or below which Rodrigues parameters are refused (rotation within
/// about 2e-6 degrees of 180°).
pub const GIMBAL_EPS: f64 = 1e-8;

/// Below this generator modulus `quat_exp` switches to its Taylor branch.
const EXP_SMALL_ANGLE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub v: Vec3,
    pub s: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { v: Vec3::ZERO, s: 1.0 };

    pub const fn new(v1: f64, v2: f64, v3: f64, s: f64) -> Self {
        Quaternion { v: Vec3::new(v1, v2, v3), s }
    }

    pub fn from_parts(v: Vec3, s: f64) -> Self {
        Quaternion { v, s }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.v[0], self.v[1], self.v[2], self.s]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }

    /// `Sq − Vq`.
    pub fn conjugate(&self) -> Quaternion {
        Quaternion { v: -self.v, s: self.s }
    }

    pub fn norm_squared(&self) -> f64 {
        self.s * self.s + self.v.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Euclidean inner product of the two 4-vectors.
    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.v.dot(&other.v) + self.s * other.s
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.s.is_finite()
    }

    /// Explicit normalization. Returns `None` for zero or non-finite input.
    pub fn normalized(&self) -> Option<Quaternion> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(*self * (1.0 / n))
        } else {
            None
        }
    }

    /// Checks `| |q| − 1 | ≤ UNIT_TOL` without modifying `q`.
    pub fn ensure_unit(&self) -> Result<()> {
        let norm = self.norm();
        if (norm - 1.0).abs() <= UNIT_TOL {
            Ok(())
        } else {
            Err(Error::NotUnit { norm, tol: UNIT_TOL })
        }
    }

    /// Picks the representative of `±q` with nonnegative scalar part. When the
    /// scalar part is exactly zero, the first nonzero vector component is made
    /// positive.
    pub fn canonical(&self) -> Quaternion {
        let flip = if self.s != 0.0 {
            self.s < 0.0
        } else {
            self.v.0.iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0)
        };
        if flip {
            -*self
        } else {
            *self
        }
    }

    /// Distance between the rotations `self` and `other`, blind to the sign
    /// ambiguity: `min(|self − other|, |self + other|)`.
    pub fn sign_blind_distance(&self, other: &Quaternion) -> f64 {
        (*self - *other).norm().min((*self + *other).norm())
    }

    /// The attitude matrix `A(q) = (s² − v·v)I + 2vvᵀ − 2s[v×]`.
    pub fn attitude_matrix(&self) -> Result<Mat3> {
        self.ensure_unit()?;
        Ok(attitude_matrix_unchecked(self))
    }

    /// Rodrigues parameters `Vq / Sq`.
    pub fn to_rodrigues(&self) -> Result<Vec3> {
        if self.s.abs() <= GIMBAL_EPS {
            return Err(Error::NearSingular {
                context: "Rodrigues parameters undefined near a 180° rotation",
                value: self.s,
            });
        }
        Ok(self.v * (1.0 / self.s))
    }

    /// Unit quaternion `(1 + pᵀp)^(-1/2)·[p; 1]`; the scalar part is positive.
    pub fn from_rodrigues(p: &Vec3) -> Quaternion {
        let scale = 1.0 / (1.0 + p.norm_squared()).sqrt();
        Quaternion { v: *p * scale, s: scale }
    }

    /// Generator `p` with `e^p = ±self`, `|p| ≤ π/2` after choosing the sign
    /// that makes the scalar part nonnegative.
    pub fn log(&self) -> Result<PureQuaternion> {
        self.ensure_unit()?;
        let q = if self.s < 0.0 { -*self } else { *self };
        let vn = q.v.norm();
        let theta = vn.atan2(q.s);
        let factor = if vn < 1e-8 {
            // theta/sin(theta) → 1 and sin(theta) ≈ vn
            (1.0 + theta * theta / 6.0) / q.norm()
        } else {
            theta / vn
        };
        Ok(PureQuaternion(q.v * factor))
    }
}

pub(crate) fn attitude_matrix_unchecked(q: &Quaternion) -> Mat3 {
    let v = q.v;
    let s = q.s;
    Mat3::IDENTITY * (s * s - v.norm_squared()) + v.outer(&v) * 2.0
        - Mat3::cross_matrix(&v) * (2.0 * s)
}

impl Default for Quaternion {
    fn default() -> Self {
        Quaternion::IDENTITY
    }
}

impl From<[f64; 4]> for Quaternion {
    fn from(a: [f64; 4]) -> Self {
        Quaternion::from_array(a)
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        q.to_array()
    }
}

/// Hamilton product:
/// `S(pq) = SpSq − Vp·Vq`, `V(pq) = SpVq + SqVp + Vp×Vq`.
impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        let p = self;
        Quaternion {
            s: p.s * q.s - p.v.dot(&q.v),
            v: q.v * p.s + p.v * q.s + p.v.cross(&q.v),
        }
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, k: f64) -> Quaternion {
        Quaternion { v: self.v * k, s: self.s * k }
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, rhs: Quaternion) -> Quaternion {
        Quaternion { v: self.v + rhs.v, s: self.s + rhs.s }
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, rhs: Quaternion) -> Quaternion {
        Quaternion { v: self.v - rhs.v, s: self.s - rhs.s }
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion { v: -self.v, s: -self.s }
    }
}

/// A pure quaternion (zero scalar part), the generator of a rotation. Its
/// modulus is the rotation half-angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PureQuaternion(pub Vec3);

impl PureQuaternion {
    pub const fn new(v1: f64, v2: f64, v3: f64) -> Self {
        PureQuaternion(Vec3::new(v1, v2, v3))
    }

    pub fn modulus(&self) -> f64 {
        self.0.norm()
    }

    pub fn to_quaternion(self) -> Quaternion {
        Quaternion { v: self.0, s: 0.0 }
    }

    /// `e^p = cos|p| + (sin|p|/|p|)·p`.
    pub fn exp(&self) -> Quaternion {
        let theta2 = self.0.norm_squared();
        let theta = theta2.sqrt();
        let (c, sinc) = if theta < EXP_SMALL_ANGLE {
            (1.0 - theta2 / 2.0, 1.0 - theta2 / 6.0)
        } else {
            (theta.cos(), theta.sin() / theta)
        };
        Quaternion { v: self.0 * sinc, s: c }
    }
}

impl Mul<Quaternion> for PureQuaternion {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        self.to_quaternion() * q
    }
}

/// `pq`.
pub fn quat_mul(p: Quaternion, q: Quaternion) -> Quaternion {
    p * q
}

pub fn conjugate(q: Quaternion) -> Quaternion {
    q.conjugate()
}

pub fn norm(q: Quaternion) -> f64 {
    q.norm()
}

pub fn quat_exp(p: PureQuaternion) -> Quaternion {
    p.exp()
}

pub fn quat_log(q: Quaternion) -> Result<PureQuaternion> {
    q.log()
}

pub fn from_rodrigues(p: Vec3) -> Quaternion {
    Quaternion::from_rodrigues(&p)
}

pub fn to_rodrigues(q: Quaternion) -> Result<Vec3> {
    q.to_rodrigues()
}

pub fn attitude_matrix(q: Quaternion) -> Result<Mat3> {
    q.attitude_matrix()
}
