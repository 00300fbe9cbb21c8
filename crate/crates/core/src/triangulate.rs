//! Metric triangulation from posed calibrated views, and the visual and
//! geometric compatibility predicates used to build and prune point support.

use crate::geom::{project, CameraPose, NormalizedPoint, WorldPoint};
use crate::matching::Descriptor;
use nalgebra::{Matrix2x3, Matrix3, Point3, Vector2, Vector3};
use thiserror::Error;

/// Sine of the angle below which two rays count as parallel.
pub const PARALLEL_TOLERANCE: f64 = 1e-12;

const NVIEW_GAUSS_NEWTON_STEPS: usize = 5;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum TriangulationError {
    #[error("rays are parallel or the baseline is zero")]
    ParallelRays,
    #[error("triangulated point is behind a camera")]
    BehindCamera,
}

/// One feature of one image, as used in the support of a model point.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub image_id: usize,
    pub feature_id: usize,
    pub x: NormalizedPoint,
    pub descriptor: Descriptor,
}

/// A reconstructed 3D point and the observations it was triangulated from.
///
/// The support holds at most one observation per image.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoint {
    pub position: WorldPoint,
    support: Vec<Observation>,
}

impl ModelPoint {
    /// Returns `None` if two observations share an image.
    pub fn new(position: WorldPoint, support: Vec<Observation>) -> Option<Self> {
        let mut point = Self {
            position,
            support: Vec::with_capacity(support.len()),
        };
        for obs in support {
            if !point.add_observation(obs) {
                return None;
            }
        }
        Some(point)
    }

    pub fn support(&self) -> &[Observation] {
        &self.support
    }

    /// Adds `obs` unless the point already has an observation in that image.
    pub fn add_observation(&mut self, obs: Observation) -> bool {
        if self.observes(obs.image_id) {
            return false;
        }
        self.support.push(obs);
        true
    }

    pub fn observes(&self, image_id: usize) -> bool {
        self.support.iter().any(|o| o.image_id == image_id)
    }

    pub fn observation_in(&self, image_id: usize) -> Option<&Observation> {
        self.support.iter().find(|o| o.image_id == image_id)
    }

    /// Keeps only observations for which `keep` holds.
    pub fn retain_support<F: FnMut(&Observation) -> bool>(&mut self, keep: F) {
        self.support.retain(keep);
    }
}

/// Midpoint of the common perpendicular of the two back-projected rays.
pub fn triangulate_two_view(
    pose_a: &CameraPose,
    pose_b: &CameraPose,
    xa: &NormalizedPoint,
    xb: &NormalizedPoint,
) -> Result<WorldPoint, TriangulationError> {
    let da = pose_a.ray_direction(xa);
    let db = pose_b.ray_direction(xb);
    let w0 = pose_a.center - pose_b.center;
    if w0.norm() <= PARALLEL_TOLERANCE * (1.0 + pose_a.center.norm()) {
        return Err(TriangulationError::ParallelRays);
    }
    let a = da.dot(&da);
    let b = da.dot(&db);
    let c = db.dot(&db);
    let d = da.dot(&w0);
    let e = db.dot(&w0);
    let denom = a * c - b * b;
    if !(denom > 0.0) || (denom / (a * c)).sqrt() < PARALLEL_TOLERANCE {
        return Err(TriangulationError::ParallelRays);
    }
    let s = (b * e - c * d) / denom;
    let t = (a * e - b * d) / denom;
    let p = pose_a.center + da * s;
    let q = pose_b.center + db * t;
    let x = Point3::from((p + q) * 0.5);
    if !(pose_a.depth(&x) > 0.0) || !(pose_b.depth(&x) > 0.0) {
        return Err(TriangulationError::BehindCamera);
    }
    Ok(x)
}

/// Linear least squares over the perpendicular distances to all rays,
/// followed by guarded Gauss–Newton steps on the squared reprojection error.
pub fn triangulate_nview(
    poses: &[CameraPose],
    xs: &[NormalizedPoint],
) -> Result<WorldPoint, TriangulationError> {
    assert_eq!(poses.len(), xs.len(), "one observation per pose");
    if poses.len() < 2 {
        return Err(TriangulationError::ParallelRays);
    }
    let spread = poses
        .iter()
        .map(|p| (p.center - poses[0].center).norm())
        .fold(0.0, f64::max);
    if spread <= PARALLEL_TOLERANCE * (1.0 + poses[0].center.norm()) {
        return Err(TriangulationError::ParallelRays);
    }

    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (pose, x) in poses.iter().zip(xs) {
        let n = pose.ray_direction(x).normalize();
        let proj = Matrix3::identity() - n * n.transpose();
        a += proj;
        b += proj * pose.center;
    }
    let eig = a.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > PARALLEL_TOLERANCE * PARALLEL_TOLERANCE * hi) {
        return Err(TriangulationError::ParallelRays);
    }
    let mut x = match a.cholesky() {
        Some(ch) => Point3::from(ch.solve(&b)),
        None => return Err(TriangulationError::ParallelRays),
    };
    if poses.iter().any(|p| !(p.depth(&x) > 0.0)) {
        return Err(TriangulationError::BehindCamera);
    }

    let mut cost = total_squared_error(poses, xs, &x).ok_or(TriangulationError::BehindCamera)?;
    for _ in 0..NVIEW_GAUSS_NEWTON_STEPS {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (pose, obs) in poses.iter().zip(xs) {
            let p = pose.to_camera(&x);
            let r = Vector2::new(p.x / p.z - obs.x, p.y / p.z - obs.y);
            let j = projection_jacobian(&p) * pose.rotation;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let Some(step) = jtj.cholesky().map(|ch| ch.solve(&jtr)) else {
            break;
        };
        let candidate = x - step;
        match total_squared_error(poses, xs, &candidate) {
            Some(c) if c < cost => {
                x = candidate;
                cost = c;
            }
            _ => break,
        }
    }
    Ok(x)
}

/// Derivative of `π` at a camera-frame point.
pub(crate) fn projection_jacobian(p: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    Matrix2x3::new(
        iz, 0.0, -p.x * iz * iz, //
        0.0, iz, -p.y * iz * iz,
    )
}

fn total_squared_error(poses: &[CameraPose], xs: &[NormalizedPoint], x: &WorldPoint) -> Option<f64> {
    poses.iter().zip(xs).try_fold(0.0, |acc, (pose, obs)| {
        project(pose, x).ok().map(|p| acc + (p - obs).norm_squared())
    })
}

/// `‖π(R (X − T)) − x‖` in normalized units.
pub fn reprojection_error(
    pose: &CameraPose,
    x: &WorldPoint,
    obs: &NormalizedPoint,
) -> Result<f64, TriangulationError> {
    project(pose, x)
        .map(|p| (p - obs).norm())
        .map_err(|_| TriangulationError::BehindCamera)
}

/// `‖d1 − d2‖ < tau_desc`
pub fn visually_compatible(d1: &Descriptor, d2: &Descriptor, tau_desc: f64) -> bool {
    d1.distance(d2) < tau_desc
}

/// Positive depth and reprojection error strictly below `tau_reproj`.
pub fn geometrically_compatible(
    point: &ModelPoint,
    pose: &CameraPose,
    x: &NormalizedPoint,
    tau_reproj: f64,
) -> bool {
    position_compatible(&point.position, pose, x, tau_reproj)
}

pub(crate) fn position_compatible(
    position: &WorldPoint,
    pose: &CameraPose,
    x: &NormalizedPoint,
    tau_reproj: f64,
) -> bool {
    matches!(reprojection_error(pose, position, x), Ok(e) if e < tau_reproj)
}
