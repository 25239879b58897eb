//! Gravity-constrained rigid transforms.
//!
//! Both the map frame `w` and the trajectory frame `a` have an upright
//! z-axis, so every transform between them is a translation plus a yaw about
//! z. [`GravityPose`] is the only pose type in the crate; votes, estimates and
//! ground truth all use it.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum horizontal field magnitude (µT) for which a magnetic frame is
/// defined.
pub const DEFAULT_HORIZONTAL_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("horizontal field {magnitude} µT is below the floor {floor} µT")]
    DegenerateHorizontalField { magnitude: f64, floor: f64 },
}

/// Plain 3-vector. Meters for positions, µT for magnetic vectors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Norm of the horizontal (x, y) part.
    #[inline]
    pub fn horizontal_norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Rotates the vector by `yaw` radians about the z-axis.
    #[inline]
    pub fn rotate_z(self, yaw: f64) -> Vec3 {
        let (s, c) = yaw.sin_cos();
        Vec3::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Wraps an angle into `[-π, π)`. Angles already in range are returned
/// untouched.
#[inline]
pub fn wrap_angle(psi: f64) -> f64 {
    if (-PI..PI).contains(&psi) {
        return psi;
    }
    let r = (psi + PI).rem_euclid(TAU);
    // rem_euclid may round up to TAU itself.
    let r = if r >= TAU { 0.0 } else { r };
    r - PI
}

/// Rigid transform with an upright z-axis: translation `(x, y, z)` and yaw
/// `psi` about z, normalized to `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub psi: f64,
}

impl Default for GravityPose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl fmt::Display for GravityPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "x={:.4} m, y={:.4} m, z={:.4} m, yaw={:.3} deg",
            self.x,
            self.y,
            self.z,
            self.psi.to_degrees()
        )
    }
}

impl GravityPose {
    pub const IDENTITY: GravityPose = GravityPose { x: 0.0, y: 0.0, z: 0.0, psi: 0.0 };

    pub fn new(x: f64, y: f64, z: f64, psi: f64) -> Self {
        GravityPose { x, y, z, psi: wrap_angle(psi) }
    }

    pub fn from_parts(t: Vec3, psi: f64) -> Self {
        Self::new(t.x, t.y, t.z, psi)
    }

    #[inline]
    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Maps a point expressed in the child frame into the parent frame.
    #[inline]
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.translation() + p.rotate_z(self.psi)
    }

    /// Rotates a free vector (no translation), e.g. a magnetic field sample.
    #[inline]
    pub fn rotate_vector(&self, v: Vec3) -> Vec3 {
        v.rotate_z(self.psi)
    }

    /// `self ∘ other`.
    #[inline]
    pub fn compose(&self, other: &GravityPose) -> GravityPose {
        compose(self, other)
    }

    #[inline]
    pub fn inverse(&self) -> GravityPose {
        invert(self)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.psi.is_finite()
    }
}

/// Composition `a ∘ b`: yaws add, `t = t_a + R(ψ_a) t_b`.
#[inline]
pub fn compose(a: &GravityPose, b: &GravityPose) -> GravityPose {
    let t = a.transform_point(b.translation());
    GravityPose { x: t.x, y: t.y, z: t.z, psi: wrap_angle(a.psi + b.psi) }
}

#[inline]
pub fn invert(p: &GravityPose) -> GravityPose {
    let t = -(p.translation().rotate_z(-p.psi));
    GravityPose { x: t.x, y: t.y, z: t.z, psi: wrap_angle(-p.psi) }
}

/// Transform from the magnetic frame anchored at `position` to its parent
/// frame. The frame's x-axis follows the horizontal part of `m`.
pub fn magnetic_frame(position: Vec3, m: Vec3, floor: f64) -> Result<GravityPose, GeometryError> {
    let magnitude = m.horizontal_norm();
    if !(magnitude >= floor) {
        return Err(GeometryError::DegenerateHorizontalField { magnitude, floor });
    }
    Ok(GravityPose::from_parts(position, m.y.atan2(m.x)))
}

/// Point of the vote manifold in R⁵: `(x, y, z, r cos ψ, r sin ψ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddedVote(pub [f64; 5]);

#[inline]
pub fn embed(v: &GravityPose, r: f64) -> EmbeddedVote {
    let (s, c) = v.psi.sin_cos();
    EmbeddedVote([v.x, v.y, v.z, r * c, r * s])
}

/// Euclidean distance between the embeddings of two votes. Equals
/// `sqrt(|Δt|² + 2r²(1 − cos Δψ))`.
pub fn vote_distance(a: &GravityPose, b: &GravityPose, r: f64) -> f64 {
    let (ea, eb) = (embed(a, r).0, embed(b, r).0);
    ea.iter().zip(eb.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}
