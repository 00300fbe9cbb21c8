//! Foundational camera types and exact geometric primitives.
//!
//! Projection convention: a world point `X` seen by a camera with rotation `R`
//! (world to camera) and center `T` lands at `π(R (X − T))`, with
//! `π(a, b, c) = (a / c, b / c)`. Every loader converts into this convention.

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Vector2, Vector3};
use thiserror::Error;

/// Image coordinates after multiplication by `K⁻¹` (and distortion removal).
pub type NormalizedPoint = Point2<f64>;
/// Raw pixel coordinates.
pub type PixelPoint = Point2<f64>;
/// A point in world coordinates.
pub type WorldPoint = Point3<f64>;

/// Tolerance on `RᵀR = I` and `det R = 1` for a valid pose.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

const UNDISTORT_MAX_ITERATIONS: usize = 20;
const UNDISTORT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("point is behind the camera (depth {depth})")]
    PointBehindCamera { depth: f64 },
    #[error("distortion inversion did not converge")]
    NoConvergence,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("matrix is not a rotation (orthonormality error {orthonormality}, det {det})")]
    NotARotation { orthonormality: f64, det: f64 },
    #[error("non-finite coordinate")]
    NonFinite,
}

/// Calibration matrix entries and Brown–Conrady distortion coefficients.
///
/// `skew` is stored as the raw `K[0][1]` entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl CameraIntrinsics {
    /// Pinhole intrinsics without skew or distortion.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeomError> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            skew: 0.0,
            k1: 0.0,
            k2: 0.0,
            p1: 0.0,
            p2: 0.0,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn with_distortion(mut self, k1: f64, k2: f64, p1: f64, p2: f64) -> Self {
        self.k1 = k1;
        self.k2 = k2;
        self.p1 = p1;
        self.p2 = p2;
        self
    }

    /// Builds intrinsics from an upper-triangular calibration matrix.
    pub fn from_matrix(k: &Matrix3<f64>) -> Result<Self, GeomError> {
        if k[(1, 0)] != 0.0 || k[(2, 0)] != 0.0 || k[(2, 1)] != 0.0 {
            return Err(GeomError::InvalidIntrinsics("K is not upper-triangular"));
        }
        if (k[(2, 2)] - 1.0).abs() > 1e-12 {
            return Err(GeomError::InvalidIntrinsics("K[2][2] must be 1"));
        }
        let intr = Self {
            fx: k[(0, 0)],
            fy: k[(1, 1)],
            cx: k[(0, 2)],
            cy: k[(1, 2)],
            skew: k[(0, 1)],
            k1: 0.0,
            k2: 0.0,
            p1: 0.0,
            p2: 0.0,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let all = [
            self.fx, self.fy, self.cx, self.cy, self.skew, self.k1, self.k2, self.p1, self.p2,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::InvalidIntrinsics("non-finite entry"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeomError::InvalidIntrinsics("focal lengths must be positive"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn has_distortion(&self) -> bool {
        self.k1 != 0.0 || self.k2 != 0.0 || self.p1 != 0.0 || self.p2 != 0.0
    }

    /// Applies `K⁻¹` only.
    pub fn pixel_to_normalized(&self, p: &PixelPoint) -> NormalizedPoint {
        let v = (p.y - self.cy) / self.fy;
        let u = (p.x - self.cx - self.skew * v) / self.fx;
        Point2::new(u, v)
    }

    /// Applies `K` only.
    pub fn normalized_to_pixel(&self, x: &NormalizedPoint) -> PixelPoint {
        Point2::new(
            self.fx * x.x + self.skew * x.y + self.cx,
            self.fy * x.y + self.cy,
        )
    }

    /// Forward Brown–Conrady model on normalized coordinates.
    pub fn distort(&self, x: &NormalizedPoint) -> NormalizedPoint {
        let (u, v) = (x.x, x.y);
        let r2 = u * u + v * v;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        let du = 2.0 * self.p1 * u * v + self.p2 * (r2 + 2.0 * u * u);
        let dv = self.p1 * (r2 + 2.0 * v * v) + 2.0 * self.p2 * u * v;
        Point2::new(u * radial + du, v * radial + dv)
    }

    /// Normalized, undistorted point to distorted pixel.
    pub fn project_to_pixel(&self, x: &NormalizedPoint) -> PixelPoint {
        self.normalized_to_pixel(&self.distort(x))
    }
}

/// Maps a pixel to normalized coordinates: `K⁻¹`, then fixed-point inversion
/// of the distortion model.
pub fn undistort_normalize(
    p: &PixelPoint,
    intr: &CameraIntrinsics,
) -> Result<NormalizedPoint, GeomError> {
    if !p.x.is_finite() || !p.y.is_finite() {
        return Err(GeomError::NonFinite);
    }
    let distorted = intr.pixel_to_normalized(p);
    if !intr.has_distortion() {
        return Ok(distorted);
    }
    let mut x = distorted;
    for _ in 0..UNDISTORT_MAX_ITERATIONS {
        let (u, v) = (x.x, x.y);
        let r2 = u * u + v * v;
        let radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2;
        let du = 2.0 * intr.p1 * u * v + intr.p2 * (r2 + 2.0 * u * u);
        let dv = intr.p1 * (r2 + 2.0 * v * v) + 2.0 * intr.p2 * u * v;
        let next = Point2::new((distorted.x - du) / radial, (distorted.y - dv) / radial);
        if !next.x.is_finite() || !next.y.is_finite() {
            return Err(GeomError::NoConvergence);
        }
        let step = (next - x).norm();
        x = next;
        if step < UNDISTORT_TOLERANCE {
            return Ok(x);
        }
    }
    Err(GeomError::NoConvergence)
}

/// Rotation (world to camera) and camera center in world units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl Default for CameraPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            center: Vector3::zeros(),
        }
    }

    /// Checked constructor; rejects matrices that are not proper rotations.
    pub fn new(rotation: Matrix3<f64>, center: Vector3<f64>) -> Result<Self, GeomError> {
        check_rotation(&rotation)?;
        if center.iter().any(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        Ok(Self { rotation, center })
    }

    pub fn new_unchecked(rotation: Matrix3<f64>, center: Vector3<f64>) -> Self {
        Self { rotation, center }
    }

    /// From the `x = R X + t` convention.
    pub fn from_rotation_translation(rotation: Matrix3<f64>, t: Vector3<f64>) -> Self {
        Self {
            rotation,
            center: -rotation.transpose() * t,
        }
    }

    /// Translation `t = −R T` of the `x = R X + t` convention.
    pub fn translation(&self) -> Vector3<f64> {
        -self.rotation * self.center
    }

    /// `R (X − T)`.
    pub fn to_camera(&self, x: &WorldPoint) -> Vector3<f64> {
        self.rotation * (x.coords - self.center)
    }

    pub fn depth(&self, x: &WorldPoint) -> f64 {
        self.rotation.row(2).transpose().dot(&(x.coords - self.center))
    }

    /// Back-projected ray direction in world coordinates (not normalized).
    pub fn ray_direction(&self, x: &NormalizedPoint) -> Vector3<f64> {
        self.rotation.transpose() * Vector3::new(x.x, x.y, 1.0)
    }

    pub fn is_valid(&self) -> bool {
        check_rotation(&self.rotation).is_ok()
    }
}

/// A 3×3 essential matrix, stored with unit Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Matrix3<f64>);

impl EssentialMatrix {
    /// Wraps `m`, rescaled to `‖m‖_F = 1`. No constraint is enforced.
    pub fn new(m: Matrix3<f64>) -> Self {
        let n = m.norm();
        if n > 0.0 {
            Self(m / n)
        } else {
            Self(m)
        }
    }

    /// Essential matrix of camera `b` relative to camera `a = (I, 0)`:
    /// `E ∝ R [T]×`, so that `x_bᵀ E x_a = 0`.
    pub fn from_relative_pose(rel: &CameraPose) -> Self {
        Self::new(rel.rotation * skew(&rel.center))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `x_bᵀ E x_a`
    pub fn epipolar_residual(&self, a: &NormalizedPoint, b: &NormalizedPoint) -> f64 {
        homogeneous(b).dot(&(self.0 * homogeneous(a)))
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Largest entry of `2 E Eᵀ E − tr(E Eᵀ) E` in absolute value.
    pub fn trace_constraint_residual(&self) -> f64 {
        let e = &self.0;
        let eet = e * e.transpose();
        (2.0 * eet * e - eet.trace() * e).amax()
    }

    /// Difference of the two largest singular values.
    pub fn singular_value_gap(&self) -> f64 {
        let mut s: Vec<f64> = self.0.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s[0] - s[1]
    }

    /// Frobenius distance to `other` after resolving the sign ambiguity.
    pub fn distance_up_to_sign(&self, other: &EssentialMatrix) -> f64 {
        (self.0 - other.0).norm().min((self.0 + other.0).norm())
    }
}

/// Verifies `RᵀR = I` (Frobenius) and `det R = 1` to [`ROTATION_TOLERANCE`].
pub fn check_rotation(r: &Matrix3<f64>) -> Result<(), GeomError> {
    let orthonormality = (r.transpose() * r - Matrix3::identity()).norm();
    let det = r.determinant();
    if !(orthonormality <= ROTATION_TOLERANCE) || !((det - 1.0).abs() <= ROTATION_TOLERANCE) {
        return Err(GeomError::NotARotation { orthonormality, det });
    }
    Ok(())
}

/// `π(R (X − T))`; fails when the depth is not positive.
pub fn project(pose: &CameraPose, x: &WorldPoint) -> Result<NormalizedPoint, GeomError> {
    let p = pose.to_camera(x);
    if !(p.z > 0.0) {
        return Err(GeomError::PointBehindCamera { depth: p.z });
    }
    Ok(Point2::new(p.x / p.z, p.y / p.z))
}

/// Pose of `b` expressed in the camera frame of `a`: `(R_b R_aᵀ, R_a (T_b − T_a))`.
pub fn compose_relative(a: &CameraPose, b: &CameraPose) -> CameraPose {
    CameraPose {
        rotation: b.rotation * a.rotation.transpose(),
        center: a.rotation * (b.center - a.center),
    }
}

/// Cross-product matrix `[v]×`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Rotation matrix of the axis-angle vector `w`.
pub fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*w).into_inner()
}

/// Axis-angle vector of a rotation matrix.
pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Projects an arbitrary 3×3 matrix onto the closest rotation.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

pub(crate) fn homogeneous(x: &NormalizedPoint) -> Vector3<f64> {
    Vector3::new(x.x, x.y, 1.0)
}

pub(crate) fn residual(pose: &CameraPose, x: &WorldPoint, obs: &NormalizedPoint) -> Option<Vector2<f64>> {
    project(pose, x).ok().map(|p| p - obs)
}
