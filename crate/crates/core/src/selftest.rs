//! Quick oracle checks run by `extcal selftest`.

use crate::ba::{jacobian_discrepancy, BaObservation, BaProblem};
use crate::eval::{evaluate, horn_scale, rotation_error, translation_angle_error};
use crate::five_point::{solve_essential_5pt, Correspondence2D2D};
use crate::geom::{exp_so3, project, CameraPose, EssentialMatrix};
use crate::p3p::{solve_p3p_finsterwalder, Correspondence2D3D};
use crate::pipeline::{run_sequence, PipelineConfig};
use crate::synth::generate_ring;
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_vector(rng: &mut ChaCha8Rng, r: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn point_in_front(rng: &mut ChaCha8Rng) -> Point3<f64> {
    Point3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(3.0..8.0))
}

/// Five exact correspondences between `(I, 0)` and a random second camera.
pub fn random_relative_instance(rng: &mut ChaCha8Rng) -> (CameraPose, [Correspondence2D2D; 5]) {
    loop {
        let pose = CameraPose::new_unchecked(exp_so3(&random_vector(rng, 0.5)), random_vector(rng, 1.0));
        if pose.center.norm() < 0.1 {
            continue;
        }
        let mut corrs = Vec::with_capacity(5);
        while corrs.len() < 5 {
            let x = point_in_front(rng);
            if let (Ok(a), Ok(b)) = (project(&CameraPose::identity(), &x), project(&pose, &x)) {
                corrs.push(Correspondence2D2D::new(a, b));
            }
        }
        return (pose, [corrs[0], corrs[1], corrs[2], corrs[3], corrs[4]]);
    }
}

/// Three exact 2D-3D correspondences for a random camera.
pub fn random_absolute_instance(rng: &mut ChaCha8Rng) -> (CameraPose, [Correspondence2D3D; 3]) {
    let pose = CameraPose::new_unchecked(exp_so3(&random_vector(rng, 3.0)), random_vector(rng, 2.0));
    let mut corrs = Vec::with_capacity(3);
    while corrs.len() < 3 {
        let local = point_in_front(rng);
        let world = Point3::from(pose.rotation.transpose() * local.coords + pose.center);
        corrs.push(Correspondence2D3D::new(project(&pose, &world).expect("constructed in front"), world));
    }
    (pose, [corrs[0], corrs[1], corrs[2]])
}

fn check_five_point(trials: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut misses = 0;
    for _ in 0..trials {
        let (pose, sample) = random_relative_instance(&mut rng);
        let truth = EssentialMatrix::from_relative_pose(&pose);
        let found = solve_essential_5pt(&sample)
            .map(|es| es.iter().any(|e| e.distance_up_to_sign(&truth) < 1e-6))
            .unwrap_or(false);
        misses += usize::from(!found);
    }
    CheckResult { name: "five-point completeness", passed: misses == 0, detail: format!("{misses}/{trials} misses") }
}

fn check_p3p(trials: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut misses = 0;
    for _ in 0..trials {
        let (pose, sample) = random_absolute_instance(&mut rng);
        let found = solve_p3p_finsterwalder(&sample)
            .map(|ps| {
                ps.iter()
                    .any(|p| (p.rotation - pose.rotation).amax() < 1e-6 && (p.center - pose.center).amax() < 1e-6)
            })
            .unwrap_or(false);
        misses += usize::from(!found);
    }
    CheckResult { name: "p3p completeness", passed: misses == 0, detail: format!("{misses}/{trials} misses") }
}

fn check_jacobian(problems: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..problems {
        let poses: Vec<CameraPose> = (0..3)
            .map(|i| {
                if i == 0 {
                    CameraPose::identity()
                } else {
                    CameraPose::new_unchecked(exp_so3(&random_vector(&mut rng, 0.2)), random_vector(&mut rng, 1.0))
                }
            })
            .collect();
        let points: Vec<Point3<f64>> = (0..8).map(|_| point_in_front(&mut rng)).collect();
        let mut observations = Vec::new();
        for (c, pose) in poses.iter().enumerate() {
            for (p, x) in points.iter().enumerate() {
                if let Ok(mut obs) = project(pose, x) {
                    obs.x += rng.random_range(-0.01..0.01);
                    observations.push(BaObservation { camera: c, point: p, x: obs });
                }
            }
        }
        let problem = BaProblem { poses, points, observations, fixed_cameras: BTreeSet::from([0]) };
        worst = worst.max(jacobian_discrepancy(&problem, 1e-7).unwrap_or(f64::INFINITY));
    }
    CheckResult { name: "bundle-adjustment jacobian", passed: worst < 1e-5, detail: format!("max discrepancy {worst:.3e}") }
}

fn check_metrics() -> CheckResult {
    let r = exp_so3(&Vector3::new(0.2, -0.4, 0.1));
    let axis = Vector3::new(0.3, 0.9, -0.2).normalize();
    let ten = rotation_error(&r, &(r * exp_so3(&(axis * 10f64.to_radians()))));
    let ortho = translation_angle_error(&Vector3::x(), &Vector3::z()).unwrap_or(f64::NAN);
    let cloud = [Vector3::zeros(), Vector3::x(), Vector3::new(0.0, 2.0, 1.0)];
    let half: Vec<_> = cloud.iter().map(|c| 0.5 * c).collect();
    let s = horn_scale(&cloud, &half).unwrap_or(f64::NAN);
    let passed = (ten - 10.0).abs() < 1e-9 && (ortho - 90.0).abs() < 1e-12 && (s - 2.0).abs() < 1e-12;
    CheckResult { name: "metric formulas", passed, detail: format!("10° → {ten:.12}, 90° → {ortho}, s → {s}") }
}

fn check_ring() -> CheckResult {
    let scene = generate_ring(6, 7.5, 200, 0.0, 0.0, 14);
    let outcome = run_sequence(&scene.features, &PipelineConfig::default())
        .map_err(|e| e.to_string())
        .and_then(|rec| evaluate(&rec.registered_poses(), &scene.gt_poses).map(|r| (rec, r)).map_err(|e| e.to_string()));
    match outcome {
        Ok((rec, report)) => {
            let passed = rec.registered.len() == 6 && report.max_rotation_error() < 1e-5 && report.max_center_error() < 1e-8;
            CheckResult {
                name: "noiseless ring",
                passed,
                detail: format!(
                    "{} registered, max R_err {:.2e}°, max C_err {:.2e}",
                    rec.registered.len(),
                    report.max_rotation_error(),
                    report.max_center_error()
                ),
            }
        }
        Err(e) => CheckResult { name: "noiseless ring", passed: false, detail: e },
    }
}

pub fn run_all() -> Vec<CheckResult> {
    vec![check_five_point(500), check_p3p(500), check_jacobian(10), check_metrics(), check_ring()]
}
