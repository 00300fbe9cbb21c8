//! Pose error measures against ground truth: rotation angle, translation
//! direction angle, Horn scale and the relative camera-center error.

use crate::geom::CameraPose;
use nalgebra::{Matrix3, Vector3};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("zero-length translation vector")]
    ZeroVector,
    #[error("estimated camera centers all coincide")]
    DegenerateCloud,
    #[error("first two ground-truth centers coincide")]
    DegenerateBaseline,
    #[error("no ground truth for image {image_id}")]
    MissingGroundTruth { image_id: usize },
    #[error("need at least two cameras, got {0}")]
    TooFewCameras(usize),
    #[error("center lists differ in length ({gt} vs {est})")]
    LengthMismatch { gt: usize, est: usize },
}

/// Angle in degrees of the rotation taking `gt` to `est`.
pub fn rotation_error(gt: &Matrix3<f64>, est: &Matrix3<f64>) -> f64 {
    let c = ((gt.transpose() * est).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Angle in degrees between two translation directions.
pub fn translation_angle_error(gt: &Vector3<f64>, est: &Vector3<f64>) -> Result<f64, EvalError> {
    let (ng, ne) = (gt.norm(), est.norm());
    if ng == 0.0 || ne == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    Ok((gt.dot(est) / (ng * ne)).clamp(-1.0, 1.0).acos().to_degrees())
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

fn spread(points: &[Vector3<f64>]) -> f64 {
    let c = centroid(points);
    points.iter().map(|p| (p - c).norm_squared()).sum()
}

/// Scale that maps the estimated cloud onto the ground-truth cloud, from the
/// ratio of centroid-relative spreads.
pub fn horn_scale(gt: &[Vector3<f64>], est: &[Vector3<f64>]) -> Result<f64, EvalError> {
    if gt.len() != est.len() {
        return Err(EvalError::LengthMismatch { gt: gt.len(), est: est.len() });
    }
    if gt.len() < 2 {
        return Err(EvalError::TooFewCameras(gt.len()));
    }
    let denominator = spread(est);
    if denominator == 0.0 {
        return Err(EvalError::DegenerateCloud);
    }
    Ok((spread(gt) / denominator).sqrt())
}

/// Per-camera center error in units of the first ground-truth baseline.
///
/// `est` must already be aligned so that `est[0] == gt[0]`; the scale is
/// applied about that shared center.
pub fn camera_center_error(gt: &[Vector3<f64>], est: &[Vector3<f64>], scale: f64) -> Result<Vec<f64>, EvalError> {
    if gt.len() != est.len() {
        return Err(EvalError::LengthMismatch { gt: gt.len(), est: est.len() });
    }
    if gt.len() < 2 {
        return Err(EvalError::TooFewCameras(gt.len()));
    }
    let baseline = (gt[0] - gt[1]).norm();
    if baseline == 0.0 {
        return Err(EvalError::DegenerateBaseline);
    }
    let anchor = gt[0];
    Ok(gt
        .iter()
        .zip(est)
        .map(|(g, e)| (scale * (e - anchor) + anchor - g).norm() / baseline)
        .collect())
}

/// Applies the rigid motion that carries `est[0]` onto `gt_first` to every pose.
pub fn align_to_gt(est: &[(usize, CameraPose)], gt_first: &CameraPose) -> Vec<(usize, CameraPose)> {
    let Some((_, first)) = est.first() else {
        return Vec::new();
    };
    // X ↦ A(X − c) + t with A = R_gtᵀ R_est, c the estimated and t the true first center.
    let a = gt_first.rotation.transpose() * first.rotation;
    let map = |x: &Vector3<f64>| a * (x - first.center) + gt_first.center;
    est.iter()
        .enumerate()
        .map(|(k, (id, pose))| {
            let aligned = if k == 0 {
                *gt_first
            } else {
                CameraPose::new_unchecked(pose.rotation * a.transpose(), map(&pose.center))
            };
            (*id, aligned)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseErrorRow {
    pub image_id: usize,
    pub rotation_deg: f64,
    pub translation_deg: f64,
    pub center_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseErrorReport {
    pub scale: f64,
    pub rows: Vec<PoseErrorRow>,
}

impl PoseErrorReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("scale,{}\nimage_id,R_err_deg,T_err_deg,C_err\n", self.scale);
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.image_id, r.rotation_deg, r.translation_deg, r.center_error);
        }
        out
    }

    pub fn max_rotation_error(&self) -> f64 {
        self.rows.iter().map(|r| r.rotation_deg).fold(0.0, f64::max)
    }

    pub fn max_translation_error(&self) -> f64 {
        self.rows.iter().map(|r| r.translation_deg).fold(0.0, f64::max)
    }

    pub fn max_center_error(&self) -> f64 {
        self.rows.iter().map(|r| r.center_error).fold(0.0, f64::max)
    }
}

/// Translation of the motion from `first` to `pose`, in the frame of `pose`.
fn relative_translation(first: &CameraPose, pose: &CameraPose) -> Vector3<f64> {
    pose.rotation * (first.center - pose.center)
}

/// Scores estimated poses, ordered with the gauge camera first, against
/// ground truth indexed by image id.
pub fn evaluate(est: &[(usize, CameraPose)], gt: &[CameraPose]) -> Result<PoseErrorReport, EvalError> {
    if est.len() < 2 {
        return Err(EvalError::TooFewCameras(est.len()));
    }
    let truth: Vec<CameraPose> = est
        .iter()
        .map(|(id, _)| gt.get(*id).copied().ok_or(EvalError::MissingGroundTruth { image_id: *id }))
        .collect::<Result<_, _>>()?;
    let aligned = align_to_gt(est, &truth[0]);
    let gt_centers: Vec<Vector3<f64>> = truth.iter().map(|p| p.center).collect();
    let est_centers: Vec<Vector3<f64>> = aligned.iter().map(|(_, p)| p.center).collect();
    let scale = horn_scale(&gt_centers, &est_centers)?;
    let center_errors = camera_center_error(&gt_centers, &est_centers, scale)?;

    let rows = aligned
        .iter()
        .zip(&truth)
        .zip(center_errors)
        .enumerate()
        .map(|(k, (((id, pose), truth_pose), center_error))| {
            let translation_deg = if k == 0 {
                0.0
            } else {
                let t_gt = relative_translation(&truth[0], truth_pose);
                let t_est = relative_translation(&aligned[0].1, pose);
                translation_angle_error(&t_gt, &t_est)?
            };
            Ok(PoseErrorRow {
                image_id: *id,
                rotation_deg: rotation_error(&truth_pose.rotation, &pose.rotation),
                translation_deg,
                center_error,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(PoseErrorReport { scale, rows })
}
