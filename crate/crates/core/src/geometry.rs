//! Convention-pinned 3D math shared by every generator.
//!
//! World frame: Z-up, meters. Camera frame: +X right, +Y down, +Z forward.
//! Poses are camera-to-world: `p_world = R * p_cam + t`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for rigid-transform invariants (orthonormality, unit quaternions).
pub const TRANSFORM_TOL: f64 = 1e-9;
/// Below this planar norm a direction has no usable heading.
pub const DEGENERATE_DIR_TOL: f64 = 1e-9;

/// Human-readable statement of the axis conventions, stamped into outputs.
pub const CONVENTION: &str = "world: Z-up, meters; camera: +X right, +Y down, +Z forward; pose: camera-to-world";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate direction: floor-plane projection norm {0:e} is below tolerance")]
    DegenerateDirection(f64),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
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

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
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

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Drops the vertical component (projection onto the floor plane).
    pub fn floor(self) -> Vec3 {
        Vec3::new(self.x, self.y, 0.0)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
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

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3([[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]])
    }

    /// Rotation by `deg` degrees counter-clockwise about world +Z.
    pub fn rot_z(deg: f64) -> Mat3 {
        let (s, c) = deg.to_radians().sin_cos();
        Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([[m[0][0], m[1][0], m[2][0]], [m[0][1], m[1][1], m[2][1]], [m[0][2], m[1][2], m[2][2]]])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// `selfᵀ · v` without materializing the transpose.
    pub fn tmul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(self.column(0).dot(v), self.column(1).dot(v), self.column(2).dot(v))
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest entry of |RᵀR − I|.
    pub fn orthonormality_error(&self) -> f64 {
        let rtr = self.transpose().mul_mat(self);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((rtr.0[i][j] - target).abs());
            }
        }
        err
    }
}

/// Unit quaternion stored as (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quat {
    fn from(a: [f64; 4]) -> Self {
        Quat { w: a[0], x: a[1], y: a[2], z: a[3] }
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn from_axis_angle(axis: Vec3, deg: f64) -> Quat {
        let a = axis.normalized().unwrap_or(Vec3::Z);
        let (s, c) = (deg.to_radians() * 0.5).sin_cos();
        Quat { w: c, x: a.x * s, y: a.y * s, z: a.z * s }
    }

    /// Rotation about world +Z (yaw), counter-clockwise viewed from above.
    pub fn yaw(deg: f64) -> Quat {
        Quat::from_axis_angle(Vec3::Z, deg)
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn to_mat3(&self) -> Mat3 {
        let Quat { w, x, y, z } = *self;
        Mat3([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }

    /// Converts a proper rotation matrix to a quaternion with w ≥ 0.
    ///
    /// This is the documented path for metadata that stores rotation matrices.
    pub fn from_mat3(m: &Mat3) -> Quat {
        let r = &m.0;
        let trace = r[0][0] + r[1][1] + r[2][2];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat { w: 0.25 * s, x: (r[2][1] - r[1][2]) / s, y: (r[0][2] - r[2][0]) / s, z: (r[1][0] - r[0][1]) / s }
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
            Quat { w: (r[2][1] - r[1][2]) / s, x: 0.25 * s, y: (r[0][1] + r[1][0]) / s, z: (r[0][2] + r[2][0]) / s }
        } else if r[1][1] > r[2][2] {
            let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
            Quat { w: (r[0][2] - r[2][0]) / s, x: (r[0][1] + r[1][0]) / s, y: 0.25 * s, z: (r[1][2] + r[2][1]) / s }
        } else {
            let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
            Quat { w: (r[1][0] - r[0][1]) / s, x: (r[0][2] + r[2][0]) / s, y: (r[1][2] + r[2][1]) / s, z: 0.25 * s }
        };
        if q.w < 0.0 {
            Quat { w: -q.w, x: -q.x, y: -q.y, z: -q.z }
        } else {
            q
        }
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { rotation: Mat3::IDENTITY, translation: Vec3::ZERO };

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Pose, GeometryError> {
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(GeometryError::InvalidPose("non-finite entry".into()));
        }
        let ortho = rotation.orthonormality_error();
        if ortho > TRANSFORM_TOL {
            return Err(GeometryError::InvalidPose(format!("rotation not orthonormal (|RᵀR − I| = {ortho:e})")));
        }
        let det = rotation.det();
        if (det - 1.0).abs() > TRANSFORM_TOL {
            return Err(GeometryError::InvalidPose(format!("rotation determinant {det} is not +1")));
        }
        Ok(Pose { rotation, translation })
    }

    /// Builds a pose from 16 row-major entries of a 4x4 homogeneous matrix.
    pub fn from_row_major(m: &[f64; 16]) -> Result<Pose, GeometryError> {
        let last = [m[12], m[13], m[14], m[15]];
        let expected = [0.0, 0.0, 0.0, 1.0];
        if last.iter().zip(expected).any(|(a, b)| !((a - b).abs() <= TRANSFORM_TOL)) {
            return Err(GeometryError::InvalidPose(format!("last row {last:?} is not (0, 0, 0, 1)")));
        }
        let rotation = Mat3([[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]]);
        Pose::new(rotation, Vec3::new(m[3], m[7], m[11]))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation.0;
        let t = self.translation;
        [
            r[0][0], r[0][1], r[0][2], t.x, r[1][0], r[1][1], r[1][2], t.y, r[2][0], r[2][1], r[2][2], t.z, 0.0, 0.0, 0.0,
            1.0,
        ]
    }

    /// A camera at `eye` looking along `forward` with world +Z as the up hint.
    pub fn look_along(eye: Vec3, forward: Vec3) -> Result<Pose, GeometryError> {
        let f = forward.normalized().ok_or_else(|| GeometryError::InvalidPose("zero forward vector".into()))?;
        let right = f
            .cross(Vec3::Z)
            .normalized()
            .ok_or_else(|| GeometryError::InvalidPose("forward parallel to world up".into()))?;
        let down = f.cross(right);
        Pose::new(Mat3::from_columns(right, down, f), eye)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    /// Applies a world-frame rigid re-basing `g` to this pose: returns `g ∘ self`.
    pub fn rebased(&self, g: &Pose) -> Pose {
        Pose {
            rotation: g.rotation.mul_mat(&self.rotation),
            translation: g.rotation.mul_vec(self.translation) + g.translation,
        }
    }
}

/// `Rᵀ (p − t)`: world point into camera coordinates.
pub fn world_to_camera(p: Vec3, pose: &Pose) -> Vec3 {
    pose.rotation.tmul_vec(p - pose.translation)
}

/// `R p + t`: camera point into world coordinates.
pub fn camera_to_world(p: Vec3, pose: &Pose) -> Vec3 {
    pose.rotation.mul_vec(p) + pose.translation
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox3 {
    center: Vec3,
    size: Vec3,
    rotation: Quat,
    matrix: Mat3,
}

impl OrientedBox3 {
    pub fn new(center: Vec3, size: Vec3, rotation: Quat) -> Result<OrientedBox3, GeometryError> {
        if !center.is_finite() || !size.is_finite() {
            return Err(GeometryError::InvalidBox("non-finite center or size".into()));
        }
        if !(size.x > 0.0 && size.y > 0.0 && size.z > 0.0) {
            return Err(GeometryError::InvalidBox(format!("size components must be positive, got {size:?}")));
        }
        let n = rotation.norm();
        if !((n - 1.0).abs() <= TRANSFORM_TOL) {
            return Err(GeometryError::InvalidBox(format!("rotation quaternion norm {n} is not 1")));
        }
        Ok(OrientedBox3 { center, size, rotation, matrix: rotation.to_mat3() })
    }

    pub fn axis_aligned(center: Vec3, size: Vec3) -> Result<OrientedBox3, GeometryError> {
        OrientedBox3::new(center, size, Quat::IDENTITY)
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn size(&self) -> Vec3 {
        self.size
    }

    pub fn rotation(&self) -> Quat {
        self.rotation
    }

    pub fn rotation_matrix(&self) -> &Mat3 {
        &self.matrix
    }

    pub fn half_extents(&self) -> Vec3 {
        self.size * 0.5
    }

    pub fn to_local(&self, p: Vec3) -> Vec3 {
        self.matrix.tmul_vec(p - self.center)
    }

    pub fn to_world(&self, local: Vec3) -> Vec3 {
        self.matrix.mul_vec(local) + self.center
    }

    /// The 8 corners in world coordinates; bit `k` of the index selects the
    /// sign along local axis `k`.
    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents();
        std::array::from_fn(|i| {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            self.to_world(Vec3::new(sx * h.x, sy * h.y, sz * h.z))
        })
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let l = self.to_local(p);
        let h = self.half_extents();
        l.x.abs() <= h.x && l.y.abs() <= h.y && l.z.abs() <= h.z
    }

    /// Nearest point of the solid box to `p` (`p` itself when inside).
    pub fn project(&self, p: Vec3) -> Vec3 {
        let l = self.to_local(p);
        let h = self.half_extents();
        let c = Vec3::new(l.x.clamp(-h.x, h.x), l.y.clamp(-h.y, h.y), l.z.clamp(-h.z, h.z));
        if c == l {
            p
        } else {
            self.to_world(c)
        }
    }

    /// World-space axis-aligned bounds of the box.
    pub fn aabb(&self) -> (Vec3, Vec3) {
        let cs = self.corners();
        cs.iter().skip(1).fold((cs[0], cs[0]), |(lo, hi), c| (lo.min(*c), hi.max(*c)))
    }

    fn sort_key(&self) -> [u64; 10] {
        let c = self.center;
        let s = self.size;
        let q = self.rotation;
        [c.x, c.y, c.z, s.x, s.y, s.z, q.w, q.x, q.y, q.z].map(f64::to_bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub distance: f64,
}

/// Closest point of the solid box to `p`; distance is exactly 0 iff `p` is inside.
pub fn closest_point_on_box(p: Vec3, bx: &OrientedBox3) -> ClosestPoint {
    let point = bx.project(p);
    let distance = if point == p { 0.0 } else { (p - point).norm() };
    ClosestPoint { point, distance }
}

/// Separating-axis test for two solid boxes; touching counts as overlap.
fn boxes_overlap(a: &OrientedBox3, b: &OrientedBox3) -> bool {
    let ax = [a.matrix.column(0), a.matrix.column(1), a.matrix.column(2)];
    let bx = [b.matrix.column(0), b.matrix.column(1), b.matrix.column(2)];
    let ha = a.half_extents().to_array();
    let hb = b.half_extents().to_array();
    let d = b.center - a.center;

    let separated_on = |axis: Vec3| -> bool {
        let n2 = axis.dot(axis);
        if n2 < 1e-18 {
            return false;
        }
        let ra: f64 = (0..3).map(|i| ha[i] * ax[i].dot(axis).abs()).sum();
        let rb: f64 = (0..3).map(|i| hb[i] * bx[i].dot(axis).abs()).sum();
        d.dot(axis).abs() > ra + rb
    };

    if ax.iter().chain(bx.iter()).any(|&axis| separated_on(axis)) {
        return false;
    }
    for u in &ax {
        for v in &bx {
            if separated_on(u.cross(*v)) {
                return false;
            }
        }
    }
    true
}

/// Minimum Euclidean distance between two solid boxes; 0 when they intersect.
///
/// Overlap is decided by the separating-axis test. Disjoint boxes attain
/// their distance between a vertex and the other solid or between two
/// edges, so the minimum over those feature pairs is exact. Arguments are
/// put in a canonical order first so the result is bitwise symmetric.
pub fn box_box_distance(a: &OrientedBox3, b: &OrientedBox3) -> f64 {
    let (a, b) = if a.sort_key() <= b.sort_key() { (a, b) } else { (b, a) };
    if boxes_overlap(a, b) {
        return 0.0;
    }
    let (ca, cb) = (a.corners(), b.corners());
    let mut best = f64::INFINITY;
    for &p in &ca {
        best = best.min((b.project(p) - p).norm());
    }
    for &p in &cb {
        best = best.min((a.project(p) - p).norm());
    }
    for &(i, j) in &BOX_EDGES {
        for &(k, l) in &BOX_EDGES {
            best = best.min(segment_distance(ca[i], ca[j], cb[k], cb[l]));
        }
    }
    best
}

/// Corner index pairs of the 12 edges, for the ordering of [`OrientedBox3::corners`].
const BOX_EDGES: [(usize, usize); 12] =
    [(0, 1), (2, 3), (4, 5), (6, 7), (0, 2), (1, 3), (4, 6), (5, 7), (0, 4), (1, 5), (2, 6), (3, 7)];

/// Distance between segments `p0p1` and `q0q1` (closest points by clamped
/// parameters).
fn segment_distance(p0: Vec3, p1: Vec3, q0: Vec3, q1: Vec3) -> f64 {
    let (d1, d2, r) = (p1 - p0, q1 - q0, p0 - q0);
    let (a, e, f) = (d1.dot(d1), d2.dot(d2), d2.dot(r));
    let c = d1.dot(r);
    let b = d1.dot(d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-12 * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    ((p0 + d1 * s) - (q0 + d2 * t)).norm()
}

/// Counter-clockwise angle (viewed from +Z) from `from_dir` to `to_dir` after
/// projecting both onto the floor plane, in degrees within [−180, 180).
pub fn planar_signed_angle(from_dir: Vec3, to_dir: Vec3) -> Result<f64, GeometryError> {
    let a = from_dir.floor();
    let b = to_dir.floor();
    for v in [a, b] {
        let n = v.norm();
        if !(n >= DEGENERATE_DIR_TOL) {
            return Err(GeometryError::DegenerateDirection(n));
        }
    }
    let cross = a.x * b.y - a.y * b.x;
    let deg = cross.atan2(a.dot(b)).to_degrees();
    Ok(if deg >= 180.0 { deg - 360.0 } else { deg })
}

/// Camera intrinsics (pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return bad("focal lengths must be positive and finite");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be positive");
        }
        if !(0.0..=self.width as f64).contains(&self.cx) || !(0.0..=self.height as f64).contains(&self.cy) {
            return bad("principal point outside the image");
        }
        Ok(())
    }

    /// Pinhole projection of a camera-frame point (requires z > 0).
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}
