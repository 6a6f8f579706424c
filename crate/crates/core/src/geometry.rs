//! Rigid-body transform algebra used by every other module.
//!
//! Conventions: right-handed, `+y` is up, the ground plane is `y = 0`, yaw is a
//! rotation about `+y`, and a transform maps points as `p' = R·p + t`. A body
//! with identity orientation faces `+z`; its left side is `+x`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Smallest permitted clone scale.
pub const MIN_SCALE: f64 = 0.1;
/// Largest permitted clone scale.
pub const MAX_SCALE: f64 = 10.0;

/// A point or direction in meters. Serialized as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const FORWARD: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).length()
    }

    /// Distance in the ground plane, ignoring height.
    pub fn horizontal_distance(self, o: Vec3) -> f64 {
        let dx = self.x - o.x;
        let dz = self.z - o.z;
        (dx * dx + dz * dz).sqrt()
    }

    pub fn lerp(self, o: Vec3, u: f64) -> Vec3 {
        self + (o - self) * u
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion. Serialized as `[w, x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl From<[f64; 4]> for Quat {
    fn from(a: [f64; 4]) -> Self {
        Quat { w: a[0], x: a[1], y: a[2], z: a[3] }.normalized()
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn from_axis_angle(axis: Vec3, radians: f64) -> Quat {
        let len = axis.length();
        if len == 0.0 {
            return Quat::IDENTITY;
        }
        let a = axis * (1.0 / len);
        let (s, c) = (radians * 0.5).sin_cos();
        Quat { w: c, x: a.x * s, y: a.y * s, z: a.z * s }.normalized()
    }

    /// Rotation about `+y`.
    pub fn from_yaw(radians: f64) -> Quat {
        let (s, c) = (radians * 0.5).sin_cos();
        Quat { w: c, x: 0.0, y: s, z: 0.0 }
    }

    pub fn from_yaw_deg(degrees: f64) -> Quat {
        Quat::from_yaw(degrees.to_radians())
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Quat::IDENTITY;
        }
        Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conjugate(self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    /// Hamilton product, renormalized.
    pub fn mul(self, o: Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
        .normalized()
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w(q×v) + 2q×(q×v)
        let q = Vec3::new(self.x, self.y, self.z);
        let t = q.cross(v) * 2.0;
        v + t * self.w + q.cross(t)
    }

    /// Heading about `+y` in radians, measured from `+z` toward `+x`.
    pub fn yaw(self) -> f64 {
        let f = self.rotate(Vec3::FORWARD);
        if f.x.abs() < 1e-12 && f.z.abs() < 1e-12 {
            return 0.0;
        }
        f.x.atan2(f.z)
    }

    /// The yaw-only part of this rotation.
    pub fn yaw_only(self) -> Quat {
        Quat::from_yaw(self.yaw())
    }

    /// Shortest-arc spherical interpolation.
    pub fn slerp(self, o: Quat, u: f64) -> Quat {
        let mut b = o;
        let mut d = self.dot(o);
        if d < 0.0 {
            b = Quat { w: -o.w, x: -o.x, y: -o.y, z: -o.z };
            d = -d;
        }
        if d > 1.0 - 1e-12 {
            return Quat {
                w: self.w + (b.w - self.w) * u,
                x: self.x + (b.x - self.x) * u,
                y: self.y + (b.y - self.y) * u,
                z: self.z + (b.z - self.z) * u,
            }
            .normalized();
        }
        let theta = d.min(1.0).acos();
        let s = theta.sin();
        let wa = ((1.0 - u) * theta).sin() / s;
        let wb = (u * theta).sin() / s;
        Quat {
            w: self.w * wa + b.w * wb,
            x: self.x * wa + b.x * wb,
            y: self.y * wa + b.y * wb,
            z: self.z * wa + b.z * wb,
        }
        .normalized()
    }

    /// Whether `self` and `o` describe the same rotation within `tol`.
    pub fn approx_eq(self, o: Quat, tol: f64) -> bool {
        let same = (self.w - o.w).abs() <= tol
            && (self.x - o.x).abs() <= tol
            && (self.y - o.y).abs() <= tol
            && (self.z - o.z).abs() <= tol;
        let flipped = (self.w + o.w).abs() <= tol
            && (self.x + o.x).abs() <= tol
            && (self.y + o.y).abs() <= tol
            && (self.z + o.z).abs() <= tol;
        same || flipped
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// A located, oriented point: a tracked joint, an object, a body root.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: Vec3,
    #[serde(default)]
    pub orientation: Quat,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: Vec3::ZERO, orientation: Quat::IDENTITY };

    pub fn new(position: Vec3, orientation: Quat) -> Pose {
        Pose { position, orientation }
    }

    pub fn at(position: Vec3) -> Pose {
        Pose { position, orientation: Quat::IDENTITY }
    }

    pub fn with_yaw_deg(position: Vec3, degrees: f64) -> Pose {
        Pose { position, orientation: Quat::from_yaw_deg(degrees) }
    }

    /// This pose read as the frame it defines.
    pub fn as_transform(self) -> RigidTransform {
        RigidTransform { translation: self.position, rotation: self.orientation }
    }

    pub fn approx_eq(&self, o: &Pose, tol: f64) -> bool {
        self.position.distance(o.position) <= tol
            && self.orientation.approx_eq(o.orientation, tol)
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.orientation.is_finite()
    }
}

/// A proper rigid motion, `p' = R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidTransform {
    pub translation: Vec3,
    #[serde(default)]
    pub rotation: Quat,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform =
        RigidTransform { translation: Vec3::ZERO, rotation: Quat::IDENTITY };

    pub fn new(translation: Vec3, rotation: Quat) -> Self {
        Self { translation, rotation }
    }

    pub fn translation(v: Vec3) -> Self {
        Self { translation: v, rotation: Quat::IDENTITY }
    }

    pub fn yaw_deg(degrees: f64) -> Self {
        Self { translation: Vec3::ZERO, rotation: Quat::from_yaw_deg(degrees) }
    }

    /// A yaw-only frame located at `position`.
    pub fn from_yaw_deg(position: Vec3, degrees: f64) -> Self {
        Self { translation: position, rotation: Quat::from_yaw_deg(degrees) }
    }

    /// `self ∘ b`: applies `b` first, then `self`.
    pub fn compose(&self, b: &RigidTransform) -> RigidTransform {
        RigidTransform {
            translation: self.rotation.rotate(b.translation) + self.translation,
            rotation: self.rotation.mul(b.rotation),
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.conjugate();
        RigidTransform { translation: -inv.rotate(self.translation), rotation: inv }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn transform_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    pub fn apply(&self, p: &Pose) -> Pose {
        Pose {
            position: self.transform_point(p.position),
            orientation: self.rotation.mul(p.orientation),
        }
    }

    pub fn as_pose(&self) -> Pose {
        Pose { position: self.translation, orientation: self.rotation }
    }

    /// Same translation, rotation reduced to its heading.
    pub fn yaw_only(&self) -> RigidTransform {
        RigidTransform { translation: self.translation, rotation: self.rotation.yaw_only() }
    }

    pub fn approx_eq(&self, o: &RigidTransform, tol: f64) -> bool {
        self.as_pose().approx_eq(&o.as_pose(), tol)
    }
}

/// `a ∘ b`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn inverse(a: &RigidTransform) -> RigidTransform {
    a.inverse()
}

pub fn apply(a: &RigidTransform, p: &Pose) -> Pose {
    a.apply(p)
}

/// The vertical plane through an anchor's origin spanned by its local `y` and
/// `z` axes (anchor-local `x = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MirrorPlane {
    pub anchor: RigidTransform,
}

impl MirrorPlane {
    pub fn new(anchor: RigidTransform) -> Self {
        Self { anchor }
    }
}

/// Reflects a pose expressed in the reflecting frame's own coordinates.
pub(crate) fn mirror_local(p: &Pose) -> Pose {
    let q = p.orientation;
    Pose {
        position: Vec3::new(-p.position.x, p.position.y, p.position.z),
        orientation: Quat { w: q.w, x: q.x, y: -q.y, z: -q.z }.normalized(),
    }
}

/// Reflects `p` across `plane`: `x → −x` in anchor-local coordinates, with the
/// orientation conjugated by `diag(−1, 1, 1)`.
pub fn mirror_pose(p: &Pose, plane: &MirrorPlane) -> Pose {
    let local = plane.anchor.inverse().apply(p);
    plane.anchor.apply(&mirror_local(&local))
}

pub fn check_scale(s: f64) -> Result<(), GeometryError> {
    if s.is_finite() && (MIN_SCALE..=MAX_SCALE).contains(&s) {
        Ok(())
    } else {
        Err(GeometryError::ScaleOutOfRange(s))
    }
}

/// Multiplies the anchor-local position of `p` by `s`. Orientation is kept.
pub fn scale_position_about(p: &Pose, anchor: &RigidTransform, s: f64) -> Result<Pose, GeometryError> {
    check_scale(s)?;
    let local = anchor.inverse().transform_point(p.position);
    Ok(Pose { position: anchor.transform_point(local * s), orientation: p.orientation })
}

/// Linear position blend with shortest-arc orientation blend. `u` is clamped to `[0, 1]`.
pub fn interp_pose(a: &Pose, b: &Pose, u: f64) -> Pose {
    let u = u.clamp(0.0, 1.0);
    if u == 0.0 {
        return *a;
    }
    if u == 1.0 {
        return *b;
    }
    Pose {
        position: a.position.lerp(b.position, u),
        orientation: a.orientation.slerp(b.orientation, u),
    }
}

fn snap_axis(v: f64, cell: f64) -> f64 {
    // ties go toward +inf
    (v / cell + 0.5).floor() * cell
}

/// Snaps `x` and `z` to the nearest multiple of `cell` on a world-fixed grid.
pub fn snap_to_grid(p: Vec3, cell: f64) -> Vec3 {
    if !(cell > 0.0) {
        return p;
    }
    Vec3::new(snap_axis(p.x, cell), p.y, snap_axis(p.z, cell))
}
