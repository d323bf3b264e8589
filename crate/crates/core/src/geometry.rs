//! Homogeneous projective primitives for two-view geometry.
//!
//! Points and lines are homogeneous 3-vectors. Nothing in this module
//! dehomogenizes unless a pixel quantity is explicitly requested, so
//! epipoles at (or near) infinity flow through every operation.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, Matrix3x2, Matrix4, SMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual bound for homography fits on exact pencil data.
pub const TOL_DLT_EXACT: f64 = 1e-6;
/// Residual bound used when screening noisy hypotheses. Cross norms of unit
/// vectors never exceed 1, so this effectively disables the residual check.
pub const TOL_DLT_NOISY: f64 = 10.0;
/// `|det F|` bound after unit-Frobenius normalization.
pub const RANK2_TOL: f64 = 1e-9;
/// Bound on `|F e1|` and `|F^T e2|` with unit `F` and unit epipoles.
pub const EPIPOLE_TOL: f64 = 1e-6;

/// Epipoles farther than this from the image center are sampled as parallel
/// pencils.
const FAR_EPIPOLE_PX: f64 = 1e6;

fn unit(v: &Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        *v
    }
}

/// Unit-normalizes and flips the sign so that the largest-magnitude entry is
/// positive (first one wins on ties).
fn canonical_sign<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> SMatrix<f64, R, C> {
    let n = m.norm();
    // already-unit input is left untouched so normalization is idempotent
    let mut out = if n > 0.0 && (n - 1.0).abs() > 4.0 * f64::EPSILON { m / n } else { *m };
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for v in out.iter() {
        if v.abs() > best {
            best = v.abs();
            sign = v.signum();
        }
    }
    out *= sign;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct HomPoint(Vector3<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct HomLine(Vector3<f64>);

impl HomPoint {
    pub fn new(x: f64, y: f64, w: f64) -> Self {
        Self::from_vector(Vector3::new(x, y, w)).expect("homogeneous point with all-zero coordinates")
    }

    pub fn from_pixel(x: f64, y: f64) -> Self {
        HomPoint(Vector3::new(x, y, 1.0))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        if !v.iter().all(|c| c.is_finite()) || v.iter().all(|c| *c == 0.0) {
            return Err(Error::degenerate(format!("invalid homogeneous point {v:?}")));
        }
        Ok(HomPoint(v))
    }

    pub fn coords(&self) -> Vector3<f64> {
        self.0
    }

    pub fn is_ideal(&self) -> bool {
        self.0.z.abs() <= 1e-12 * self.0.norm()
    }

    /// Pixel coordinates, or `None` for a point at infinity.
    pub fn to_pixel(&self) -> Option<[f64; 2]> {
        if self.is_ideal() {
            None
        } else {
            Some([self.0.x / self.0.z, self.0.y / self.0.z])
        }
    }

    /// Unit-norm representative with the largest entry positive.
    pub fn normalized(&self) -> HomPoint {
        HomPoint(canonical_sign(&self.0))
    }

    pub fn same_up_to_scale(&self, other: &HomPoint, tol: f64) -> bool {
        unit(&self.0).cross(&unit(&other.0)).norm() <= tol
    }
}

impl HomLine {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self::from_vector(Vector3::new(a, b, c)).expect("line with (a, b) = (0, 0)")
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self> {
        let scale = v.norm();
        if !v.iter().all(|c| c.is_finite()) || v.x.hypot(v.y) <= 1e-14 * scale || scale == 0.0 {
            return Err(Error::degenerate(format!("not a finite image line: {v:?}")));
        }
        Ok(HomLine(v))
    }

    pub fn coords(&self) -> Vector3<f64> {
        self.0
    }

    /// Scaled so that `(a, b)` is a unit normal; the sign is preserved.
    pub fn unit_normal_form(&self) -> HomLine {
        HomLine(self.0 / self.0.x.hypot(self.0.y))
    }

    /// Unit direction `(b, -a)` of the line.
    pub fn direction(&self) -> [f64; 2] {
        let n = self.0.x.hypot(self.0.y);
        [self.0.y / n, -self.0.x / n]
    }

    pub fn incidence(&self, p: &HomPoint) -> f64 {
        self.0.dot(&p.0)
    }

    /// Incidence residual after unit-normalizing both vectors.
    pub fn normalized_incidence(&self, p: &HomPoint) -> f64 {
        unit(&self.0).dot(&unit(&p.0)).abs()
    }

    pub fn distance_to_pixel(&self, x: f64, y: f64) -> f64 {
        (self.0.x * x + self.0.y * y + self.0.z).abs() / self.0.x.hypot(self.0.y)
    }

    pub fn normalized(&self) -> HomLine {
        HomLine(canonical_sign(&self.0))
    }

    pub fn same_up_to_scale(&self, other: &HomLine, tol: f64) -> bool {
        unit(&self.0).cross(&unit(&other.0)).norm() <= tol
    }

    pub fn negated(&self) -> HomLine {
        HomLine(-self.0)
    }
}

macro_rules! array_conversions {
    ($t:ident) => {
        impl From<$t> for [f64; 3] {
            fn from(v: $t) -> Self {
                [v.0.x, v.0.y, v.0.z]
            }
        }

        impl TryFrom<[f64; 3]> for $t {
            type Error = String;

            fn try_from(a: [f64; 3]) -> std::result::Result<Self, String> {
                $t::from_vector(Vector3::from(a)).map_err(|e| e.to_string())
            }
        }
    };
}

array_conversions!(HomPoint);
array_conversions!(HomLine);

impl fmt::Display for HomLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0.x, self.0.y, self.0.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageBounds {
    pub width: usize,
    pub height: usize,
}

impl ImageBounds {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::DomainError(format!(
                "image bounds must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(ImageBounds { width, height })
    }

    /// Extent of the pixel-center domain `[0, w-1] x [0, h-1]`.
    pub fn max_x(&self) -> f64 {
        (self.width - 1) as f64
    }

    pub fn max_y(&self) -> f64 {
        (self.height - 1) as f64
    }

    pub fn center(&self) -> [f64; 2] {
        [self.max_x() / 2.0, self.max_y() / 2.0]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.max_x()).contains(&x) && (0.0..=self.max_y()).contains(&y)
    }

    fn pixel_corners(&self) -> [[f64; 2]; 4] {
        let (w, h) = (self.max_x(), self.max_y());
        [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapRole {
    LineHomography,
    PointHomography,
    Skew,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectiveMap {
    m: Matrix3<f64>,
    role: MapRole,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectiveMapRepr {
    m: [f64; 9],
    role: MapRole,
}

impl Serialize for ProjectiveMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProjectiveMapRepr {
            m: row_major(&self.m),
            role: self.role,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProjectiveMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ProjectiveMapRepr::deserialize(d)?;
        Ok(ProjectiveMap {
            m: Matrix3::from_row_slice(&r.m),
            role: r.role,
        })
    }
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

impl ProjectiveMap {
    pub fn new(m: Matrix3<f64>, role: MapRole) -> Self {
        ProjectiveMap { m, role }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn role(&self) -> MapRole {
        self.role
    }

    /// Maps a line; `None` when the image is the line at infinity or zero.
    pub fn apply_line(&self, l: &HomLine) -> Option<HomLine> {
        HomLine::from_vector(self.m * l.0).ok()
    }

    pub fn apply_point(&self, p: &HomPoint) -> Option<HomPoint> {
        HomPoint::from_vector(self.m * p.0).ok()
    }

    pub fn inverse(&self) -> Option<ProjectiveMap> {
        self.m.try_inverse().map(|m| ProjectiveMap { m, role: self.role })
    }

    /// `self * other`, i.e. apply `other` first.
    pub fn compose(&self, other: &ProjectiveMap) -> ProjectiveMap {
        ProjectiveMap {
            m: self.m * other.m,
            role: self.role,
        }
    }
}

/// Join of two points.
pub fn line_through(p: &HomPoint, q: &HomPoint) -> Result<HomLine> {
    let v = p.0.cross(&q.0);
    if v.norm() <= 1e-12 * p.0.norm() * q.0.norm() {
        return Err(Error::degenerate("line_through: points coincide"));
    }
    HomLine::from_vector(v).map_err(|_| Error::degenerate("line_through: both points at infinity"))
}

/// Meet of two lines; parallel lines meet in an ideal point.
pub fn intersect(l1: &HomLine, l2: &HomLine) -> Result<HomPoint> {
    let v = l1.0.cross(&l2.0);
    if v.norm() <= 1e-12 * l1.0.norm() * l2.0.norm() {
        return Err(Error::degenerate("intersect: lines coincide"));
    }
    HomPoint::from_vector(v)
}

pub fn skew(e: &HomPoint) -> ProjectiveMap {
    let v = e.0;
    #[rustfmt::skip]
    let m = Matrix3::new(
        0.0, -v.z, v.y,
        v.z, 0.0, -v.x,
        -v.y, v.x, 0.0,
    );
    ProjectiveMap::new(m, MapRole::Skew)
}

/// Orthonormal frame of the pencil spanned by three (nearly) concurrent
/// lines: the least-squares center and a 2D basis of the pencil.
struct PencilFrame {
    center: Vector3<f64>,
    basis: Matrix3x2<f64>,
}

fn pencil_frame(lines: &[Vector3<f64>; 3], which: &str) -> Result<PencilFrame> {
    let u: Vec<Vector3<f64>> = lines.iter().map(unit).collect();
    for i in 0..3 {
        for j in (i + 1)..3 {
            if u[i].cross(&u[j]).norm() < 1e-9 {
                return Err(Error::degenerate(format!("{which} lines {i} and {j} coincide")));
            }
        }
    }
    let stacked = Matrix3::from_rows(&[u[0].transpose(), u[1].transpose(), u[2].transpose()]);
    let svd = stacked.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let basis = Matrix3x2::from_columns(&[vt.row(0).transpose(), vt.row(1).transpose()]);
    Ok(PencilFrame {
        center: vt.row(2).transpose(),
        basis,
    })
}

/// Epipolar line homography from three line correspondences.
///
/// The six cross-product rows of a full 3x3 fit leave the off-pencil part of
/// `H` unconstrained (including members that annihilate the pencil), so the
/// fit is carried out on pencil coordinates: a 2x2 projective map between the
/// two pencils, solved by DLT on the 3x4 stacked system, then lifted to 3x3
/// with a rank-one term sending the source center to the target center.
pub fn line_homography_dlt(pairs: &[(HomLine, HomLine); 3], tol: f64) -> Result<ProjectiveMap> {
    let src = pencil_frame(&[pairs[0].0 .0, pairs[1].0 .0, pairs[2].0 .0], "source")?;
    let dst = pencil_frame(&[pairs[0].1 .0, pairs[1].1 .0, pairs[2].1 .0], "target")?;

    let mut a = Matrix4::<f64>::zeros();
    for (row, (l, lt)) in pairs.iter().enumerate() {
        let s: Vector2<f64> = src.basis.transpose() * unit(&l.0);
        let t: Vector2<f64> = dst.basis.transpose() * unit(&lt.0);
        // t x (h s) = 0 in 2D
        a[(row, 0)] = -t.y * s.x;
        a[(row, 1)] = -t.y * s.y;
        a[(row, 2)] = t.x * s.x;
        a[(row, 3)] = t.x * s.y;
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let hv = vt.row(3);
    let h = nalgebra::Matrix2::new(hv[0], hv[1], hv[2], hv[3]);
    let det = h.determinant();
    if det.abs() <= 1e-12 * h.norm_squared() {
        return Err(Error::degenerate("line homography is singular on the pencil"));
    }

    let lift = det.abs().sqrt();
    let m: Matrix3<f64> = dst.basis * h * src.basis.transpose()
        + lift * unit(&dst.center) * unit(&src.center).transpose();
    let m = m / m.norm();
    let map = ProjectiveMap::new(m, MapRole::LineHomography);

    for (i, (l, lt)) in pairs.iter().enumerate() {
        let residual = unit(&lt.0).cross(&unit(&(m * l.0))).norm();
        if !(residual <= tol) {
            return Err(Error::PencilViolation(format!(
                "pair {i} residual {residual:e} exceeds {tol:e}"
            )));
        }
    }
    let back = unit(&(m.transpose() * dst.center));
    if back.cross(&unit(&src.center)).norm() > EPIPOLE_TOL {
        return Err(Error::PencilViolation("H^T e2 is not proportional to e1".into()));
    }
    Ok(map)
}

/// Closest rank-2 matrix in Frobenius norm.
pub fn enforce_rank2(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut svd = m.svd(true, true);
    svd.singular_values[2] = 0.0;
    svd.recompose().expect("u and v_t requested")
}

/// Rank-2 fundamental matrix with its epipoles, stored at unit Frobenius norm
/// with the largest-magnitude entry positive. `x2^T F x1 = 0`, `F e1 = 0`,
/// `F^T e2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix {
    f: Matrix3<f64>,
    e1: HomPoint,
    e2: HomPoint,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FundamentalRepr {
    #[serde(rename = "F")]
    f: [f64; 9],
    e1: [f64; 3],
    e2: [f64; 3],
}

impl Serialize for FundamentalMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FundamentalRepr {
            f: row_major(&self.f),
            e1: self.e1.into(),
            e2: self.e2.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FundamentalMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = FundamentalRepr::deserialize(d)?;
        let e1 = HomPoint::try_from(r.e1).map_err(D::Error::custom)?;
        let e2 = HomPoint::try_from(r.e2).map_err(D::Error::custom)?;
        FundamentalMatrix::with_epipoles(&Matrix3::from_row_slice(&r.f), &e1, &e2)
            .map_err(D::Error::custom)
    }
}

impl FundamentalMatrix {
    /// Wraps a rank-2 matrix, recovering both epipoles from its null spaces.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) || m.norm() == 0.0 {
            return Err(Error::degenerate("fundamental matrix must be finite and nonzero"));
        }
        let f = canonical_sign(m);
        let svd = f.svd(true, true);
        let u = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v_t requested");
        let e1 = HomPoint(canonical_sign(&vt.row(2).transpose()));
        let e2 = HomPoint(canonical_sign(&u.column(2).into_owned()));
        Self::checked(f, e1, e2)
    }

    /// Wraps a matrix whose epipoles are already known.
    pub fn with_epipoles(m: &Matrix3<f64>, e1: &HomPoint, e2: &HomPoint) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) || m.norm() == 0.0 {
            return Err(Error::degenerate("fundamental matrix must be finite and nonzero"));
        }
        Self::checked(canonical_sign(m), e1.normalized(), e2.normalized())
    }

    fn checked(f: Matrix3<f64>, e1: HomPoint, e2: HomPoint) -> Result<Self> {
        let det = f.determinant();
        if det.abs() > RANK2_TOL {
            return Err(Error::NotRank2 { det });
        }
        let r1 = (f * e1.0).norm();
        let r2 = (f.transpose() * e2.0).norm();
        if r1 > EPIPOLE_TOL || r2 > EPIPOLE_TOL {
            return Err(Error::PencilViolation(format!(
                "epipole residuals |F e1| = {r1:e}, |F^T e2| = {r2:e}"
            )));
        }
        Ok(FundamentalMatrix { f, e1, e2 })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.f
    }

    pub fn e1(&self) -> HomPoint {
        self.e1
    }

    pub fn e2(&self) -> HomPoint {
        self.e2
    }

    /// Epipolar line in image 2 of a point in image 1.
    pub fn line_in_second(&self, x1: &HomPoint) -> Option<HomLine> {
        HomLine::from_vector(self.f * x1.0).ok()
    }

    /// Epipolar line in image 1 of a point in image 2.
    pub fn line_in_first(&self, x2: &HomPoint) -> Option<HomLine> {
        HomLine::from_vector(self.f.transpose() * x2.0).ok()
    }

    /// Algebraic residual `x2^T F x1`.
    pub fn residual(&self, x1: &HomPoint, x2: &HomPoint) -> f64 {
        x2.0.dot(&(self.f * x1.0))
    }

    /// Frobenius distance to another fundamental matrix after both are scaled
    /// to unit norm and the relative sign is aligned.
    pub fn aligned_distance(&self, other: &FundamentalMatrix) -> f64 {
        let a = self.f / self.f.norm();
        let b = other.f / other.f.norm();
        (a - b).norm().min((a + b).norm())
    }

    pub fn determinant(&self) -> f64 {
        self.f.determinant()
    }
}

/// `F = H [e1]x` for a line homography `H` taking image-1 epipolar lines to
/// image-2 epipolar lines.
pub fn fundamental_from_line_homography(
    h: &ProjectiveMap,
    e1: &HomPoint,
    e2: &HomPoint,
) -> Result<FundamentalMatrix> {
    let e1n = HomPoint(unit(&e1.0));
    let f = h.m * skew(&e1n).m;
    if f.norm() <= 1e-14 * h.m.norm() {
        return Err(Error::PencilViolation("H annihilates the pencil of e1".into()));
    }
    FundamentalMatrix::with_epipoles(&f, e1, e2)
}

/// Mean over matches of the average point-to-epipolar-line distance in both
/// images, in pixels.
pub fn symmetric_epipolar_distance(f: &FundamentalMatrix, matches: &[(HomPoint, HomPoint)]) -> Result<f64> {
    if matches.is_empty() {
        return Err(Error::DomainError("symmetric epipolar distance needs at least one match".into()));
    }
    let mut sum = 0.0;
    for (x1, x2) in matches {
        let (Some(p1), Some(p2)) = (x1.to_pixel(), x2.to_pixel()) else {
            return Err(Error::degenerate("match point at infinity"));
        };
        let l2 = f.f * Vector3::new(p1[0], p1[1], 1.0);
        let l1 = f.f.transpose() * Vector3::new(p2[0], p2[1], 1.0);
        let n2 = l2.x.hypot(l2.y);
        let n1 = l1.x.hypot(l1.y);
        if n1 == 0.0 || n2 == 0.0 {
            return Err(Error::degenerate("transferred epipolar line has (a, b) = (0, 0)"));
        }
        let d2 = (l2.x * p2[0] + l2.y * p2[1] + l2.z).abs() / n2;
        let d1 = (l1.x * p1[0] + l1.y * p1[1] + l1.z).abs() / n1;
        sum += 0.5 * (d1 + d2);
    }
    Ok(sum / matches.len() as f64)
}

/// Clips a line to `[0, w-1] x [0, h-1]`; endpoints are ordered by x, then y.
pub fn clip_to_rect(l: &HomLine, b: ImageBounds) -> Option<([f64; 2], [f64; 2])> {
    let (a, bb, c) = (l.0.x, l.0.y, l.0.z);
    let (w, h) = (b.max_x(), b.max_y());
    let eps = 1e-9 * (w + h);
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(4);
    if bb.abs() > 0.0 {
        for x in [0.0, w] {
            let y = -(a * x + c) / bb;
            if y >= -eps && y <= h + eps {
                pts.push([x, y.clamp(0.0, h)]);
            }
        }
    }
    if a.abs() > 0.0 {
        for y in [0.0, h] {
            let x = -(bb * y + c) / a;
            if x >= -eps && x <= w + eps {
                pts.push([x.clamp(0.0, w), y]);
            }
        }
    }
    if pts.len() < 2 {
        return None;
    }
    let mut best = (0, 0, -1.0);
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let d = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (mut p, mut q) = (pts[best.0], pts[best.1]);
    if (q[0], q[1]).partial_cmp(&(p[0], p[1])) == Some(Ordering::Less) {
        std::mem::swap(&mut p, &mut q);
    }
    Some((p, q))
}

fn clip_polygon(poly: &[[f64; 2]], l: &Vector3<f64>) -> Vec<[f64; 2]> {
    let val = |p: &[f64; 2]| l.x * p[0] + l.y * p[1] + l.z;
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let (vc, vn) = (val(&cur), val(&next));
        if vc >= 0.0 {
            out.push(cur);
        }
        if (vc >= 0.0) != (vn >= 0.0) {
            let t = vc / (vc - vn);
            out.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
        }
    }
    out
}

fn shoelace(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        s += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * s.abs()
}

fn canonical_line(l: &HomLine) -> Vector3<f64> {
    let v = l.unit_normal_form().0;
    if v.x > 0.0 || (v.x == 0.0 && v.y > 0.0) {
        v
    } else {
        -v
    }
}

fn meets_rect(l: &Vector3<f64>, corners: &[[f64; 2]; 4]) -> bool {
    let vals = corners.map(|p| l.x * p[0] + l.y * p[1] + l.z);
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    lo <= 0.0 && hi >= 0.0
}

/// Image area, in pixels², between two lines: the part of the `w x h` image
/// rectangle where the lines (with aligned normals) disagree on sidedness.
/// Returns `+inf` when either line misses the image.
pub fn area_between_lines(l: &HomLine, lt: &HomLine, b: ImageBounds) -> f64 {
    let (w, h) = (b.width as f64, b.height as f64);
    let rect = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
    let (mut u, mut v) = (canonical_line(l), canonical_line(lt));
    if !meets_rect(&u, &rect) || !meets_rect(&v, &rect) {
        return f64::INFINITY;
    }
    let key = |x: &Vector3<f64>| [x.x, x.y, x.z];
    let (ku, kv) = (key(&u), key(&v));
    let ord = ku
        .iter()
        .zip(kv.iter())
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal);
    if ord == Ordering::Greater {
        std::mem::swap(&mut u, &mut v);
    }
    if u.x * v.x + u.y * v.y < 0.0 {
        v = -v;
    }
    if u == v {
        return 0.0;
    }
    let a = shoelace(&clip_polygon(&clip_polygon(&rect, &u), &-v));
    let c = shoelace(&clip_polygon(&clip_polygon(&rect, &-u), &v));
    a + c
}

/// `count` lines through `e` spread over the sub-pencil that meets the image.
///
/// Finite epipoles are sampled uniformly in angle (the full half-turn when
/// `e` lies inside the image); far or ideal epipoles are sampled as joins
/// with evenly spaced points on a transversal through the image center, which
/// degrades to parallel lines spaced by offset.
pub fn sample_pencil(e: &HomPoint, b: ImageBounds, count: usize) -> Vec<HomLine> {
    if count == 0 {
        return Vec::new();
    }
    let corners = b.pixel_corners();
    let [cx, cy] = b.center();
    let ev = unit(&e.0);
    let far = match e.to_pixel() {
        None => true,
        Some([x, y]) => (x - cx).hypot(y - cy) > FAR_EPIPOLE_PX,
    };

    if !far {
        let [ex, ey] = e.to_pixel().expect("finite");
        let (start, span) = if b.contains(ex, ey) {
            (0.0, PI)
        } else {
            // full-turn directions to the corners: seen from outside they fit
            // in less than a half-turn, the complement of the widest gap
            let mut ang: Vec<f64> = corners
                .iter()
                .map(|c| (c[1] - ey).atan2(c[0] - ex).rem_euclid(2.0 * PI))
                .collect();
            ang.sort_by(f64::total_cmp);
            let mut gap_at = 3;
            let mut gap = ang[0] + 2.0 * PI - ang[3];
            for i in 0..3 {
                if ang[i + 1] - ang[i] > gap {
                    gap = ang[i + 1] - ang[i];
                    gap_at = i;
                }
            }
            (ang[(gap_at + 1) % 4], 2.0 * PI - gap)
        };
        return (0..count)
            .filter_map(|k| {
                let t = start + (k as f64 + 0.5) * span / count as f64;
                let d = Vector3::new(t.cos(), t.sin(), 0.0);
                HomLine::from_vector(ev.cross(&d)).ok()
            })
            .collect();
    }

    let dir = Vector2::new(ev.x, ev.y).normalize();
    let normal = Vector2::new(-dir.y, dir.x);
    let proj: Vec<f64> = corners
        .iter()
        .map(|c| normal.dot(&Vector2::new(c[0] - cx, c[1] - cy)))
        .collect();
    let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (0..count)
        .filter_map(|k| {
            let s = lo + (k as f64 + 0.5) * (hi - lo) / count as f64;
            let q = Vector3::new(cx + s * normal.x, cy + s * normal.y, 1.0);
            HomLine::from_vector(ev.cross(&q)).ok()
        })
        .collect()
}

/// Unoriented angle in radians (in `[0, pi/2]`) between two lines.
pub fn angle_between(l1: &HomLine, l2: &HomLine) -> f64 {
    let a = l1.unit_normal_form().0;
    let b = l2.unit_normal_form().0;
    let c = (a.x * b.x + a.y * b.y).abs().min(1.0);
    c.acos()
}
