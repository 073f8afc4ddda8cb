//! Quaternion arithmetic and the isometries of S³ given by unit quaternions.
//!
//! A quaternion `a + bi + cj + dk` is identified with the point `(a, b, c, d)`
//! of R⁴, so the unit quaternions are exactly the points of S³. Left (and
//! right) multiplication by a unit quaternion is an element of O(4) and is
//! the tool used to move designs relative to the projection point.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|q|² - 1` for a quaternion to count as unit.
pub const UNIT_TOL: f64 = 1e-12;

/// Drift beyond which composed unit quaternions are renormalized.
pub const RENORM_TOL: f64 = 1e-9;

/// Norms at or below this cannot be inverted.
pub const ZERO_NORM: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Quaternion {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Quaternion {
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Quaternion { a, b, c, d }
    }

    pub const fn real(a: f64) -> Self {
        Quaternion::new(a, 0.0, 0.0, 0.0)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Quaternion::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.a, self.b, self.c, self.d)
    }

    pub fn norm_squared(self) -> f64 {
        self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Inner product of the underlying R⁴ vectors.
    pub fn dot(self, o: Quaternion) -> f64 {
        self.a * o.a + self.b * o.b + self.c * o.c + self.d * o.d
    }

    pub fn scale(self, s: f64) -> Self {
        Quaternion::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn conj(self) -> Self {
        Quaternion::new(self.a, -self.b, -self.c, -self.d)
    }

    pub fn inverse(self) -> Result<Self> {
        let n2 = self.norm_squared();
        if n2.sqrt() <= ZERO_NORM {
            return Err(Error::ZeroQuaternion);
        }
        Ok(self.conj().scale(1.0 / n2))
    }

    pub fn is_finite(self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    /// `e^{iθ} = cos θ + i sin θ`.
    pub fn exp_i(t: f64) -> Self {
        Quaternion::new(t.cos(), t.sin(), 0.0, 0.0)
    }

    pub fn exp_j(t: f64) -> Self {
        Quaternion::new(t.cos(), 0.0, t.sin(), 0.0)
    }

    pub fn exp_k(t: f64) -> Self {
        Quaternion::new(t.cos(), 0.0, 0.0, t.sin())
    }

    pub fn approx_eq(self, o: Quaternion, tol: f64) -> bool {
        (self - o).norm() <= tol
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product, fixed by `i² = j² = k² = ijk = -1`.
    fn mul(self, q: Quaternion) -> Quaternion {
        let p = self;
        Quaternion::new(
            p.a * q.a - p.b * q.b - p.c * q.c - p.d * q.d,
            p.a * q.b + p.b * q.a + p.c * q.d - p.d * q.c,
            p.a * q.c - p.b * q.d + p.c * q.a + p.d * q.b,
            p.a * q.d + p.b * q.c - p.c * q.b + p.d * q.a,
        )
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:+}i {:+}j {:+}k", self.a, self.b, self.c, self.d)
    }
}

pub fn q_mul(p: Quaternion, q: Quaternion) -> Quaternion {
    p * q
}

pub fn q_conj(q: Quaternion) -> Quaternion {
    q.conj()
}

pub fn q_inv(q: Quaternion) -> Result<Quaternion> {
    q.inverse()
}

/// A quaternion of norm one, i.e. a point of S³.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(into = "[f64; 4]")]
pub struct UnitQuaternion(Quaternion);

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion(Quaternion::ONE);
    pub const I: UnitQuaternion = UnitQuaternion(Quaternion::I);
    pub const J: UnitQuaternion = UnitQuaternion(Quaternion::J);
    pub const K: UnitQuaternion = UnitQuaternion(Quaternion::K);

    /// Checked constructor: the input must already be unit to [`UNIT_TOL`].
    pub fn new(q: Quaternion) -> Result<Self> {
        let deviation = q.norm_squared() - 1.0;
        if !q.is_finite() || deviation.abs() > UNIT_TOL {
            return Err(Error::NotUnit { deviation });
        }
        Ok(UnitQuaternion(q))
    }

    pub fn normalize(q: Quaternion) -> Result<Self> {
        let n = q.norm();
        if !q.is_finite() || n <= ZERO_NORM {
            return Err(Error::ZeroQuaternion);
        }
        Ok(UnitQuaternion(q.scale(1.0 / n)))
    }

    pub fn from_components(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(Quaternion::new(a, b, c, d))
    }

    pub(crate) fn new_unchecked(q: Quaternion) -> Self {
        UnitQuaternion(q)
    }

    pub fn quaternion(self) -> Quaternion {
        self.0
    }

    pub fn to_vector(self) -> Vector4<f64> {
        self.0.to_vector()
    }

    pub fn inverse(self) -> Self {
        UnitQuaternion(self.0.conj())
    }

    /// Product of two unit quaternions, renormalized if rounding drift exceeds [`RENORM_TOL`].
    pub fn compose(self, o: UnitQuaternion) -> Self {
        Self::renormalized(self.0 * o.0)
    }

    fn renormalized(q: Quaternion) -> Self {
        let n2 = q.norm_squared();
        if (n2 - 1.0).abs() > RENORM_TOL {
            UnitQuaternion(q.scale(1.0 / n2.sqrt()))
        } else {
            UnitQuaternion(q)
        }
    }

    /// Rotation angle on S³ between two points, `acos⟨x, y⟩`.
    pub fn angle_to(self, o: UnitQuaternion) -> f64 {
        self.0.dot(o.0).clamp(-1.0, 1.0).acos()
    }
}

impl Neg for UnitQuaternion {
    type Output = UnitQuaternion;

    fn neg(self) -> UnitQuaternion {
        UnitQuaternion(-self.0)
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> [f64; 4] {
        [q.0.a, q.0.b, q.0.c, q.0.d]
    }
}

impl From<UnitQuaternion> for Quaternion {
    fn from(q: UnitQuaternion) -> Quaternion {
        q.0
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, o: UnitQuaternion) -> UnitQuaternion {
        self.compose(o)
    }
}

fn ensure_unit(q: Quaternion) -> Result<UnitQuaternion> {
    UnitQuaternion::new(q)
}

/// `f_q(x) = q·x`, an element of O(4).
pub fn left_isometry(q: Quaternion, x: Quaternion) -> Result<UnitQuaternion> {
    let (q, x) = (ensure_unit(q)?, ensure_unit(x)?);
    Ok(q * x)
}

/// `x ↦ x·q`; also an element of O(4).
pub fn right_isometry(x: Quaternion, q: Quaternion) -> Result<UnitQuaternion> {
    let (x, q) = (ensure_unit(x)?, ensure_unit(q)?);
    Ok(x * q)
}

/// Unit `q = b·a⁻¹`, so that left multiplication by `q` carries `a` to `b`.
pub fn mover(a: Quaternion, b: Quaternion) -> Result<UnitQuaternion> {
    let (a, b) = (ensure_unit(a)?, ensure_unit(b)?);
    Ok(b * a.inverse())
}

/// Unit `q = a⁻¹·b`, so that right multiplication by `q` carries `a` to `b`.
pub fn mover_right(a: Quaternion, b: Quaternion) -> Result<UnitQuaternion> {
    let (a, b) = (ensure_unit(a)?, ensure_unit(b)?);
    Ok(a.inverse() * b)
}
