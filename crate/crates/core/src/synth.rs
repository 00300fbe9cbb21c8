//! Seeded synthetic scenes with known poses, points and feature files.

use crate::geom::{project, CameraIntrinsics, CameraPose, PixelPoint, WorldPoint};
use crate::matching::{Descriptor, FeatureSet, DESCRIPTOR_LEN};
use nalgebra::{Matrix3, Point3, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const IMAGE_WIDTH: f64 = 640.0;
pub const IMAGE_HEIGHT: f64 = 480.0;
pub const FOCAL_LENGTH: f64 = 700.0;

/// Largest jitter norm relative to the prototype norm.
const JITTER_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub intrinsics: CameraIntrinsics,
    pub gt_poses: Vec<CameraPose>,
    pub gt_points: Vec<WorldPoint>,
    pub features: Vec<FeatureSet>,
    /// Per image and feature: the generating point, or `None` for an outlier.
    pub sources: Vec<Vec<Option<usize>>>,
    pub outlier_rate: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(FOCAL_LENGTH, FOCAL_LENGTH, IMAGE_WIDTH / 2.0, IMAGE_HEIGHT / 2.0)
        .expect("constant intrinsics are valid")
}

/// Pose at `center` whose optical axis points at `target`.
pub fn look_at(center: Vector3<f64>, target: Vector3<f64>) -> CameraPose {
    let z = (target - center).normalize();
    let helper = if z.y.abs() < 0.9 { Vector3::y() } else { Vector3::x() };
    let x = helper.cross(&z).normalize();
    let y = z.cross(&x);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    CameraPose::new_unchecked(rotation, center)
}

fn random_descriptor(rng: &mut ChaCha8Rng) -> Descriptor {
    let mut d = [0u8; DESCRIPTOR_LEN];
    rng.fill(&mut d[..]);
    Descriptor(d)
}

/// Uniform per-component jitter whose total norm cannot exceed the allowed fraction.
fn jittered(prototype: &Descriptor, rng: &mut ChaCha8Rng) -> Descriptor {
    let amplitude = (JITTER_FRACTION * prototype.norm() / (DESCRIPTOR_LEN as f64).sqrt()).floor() as i32;
    let mut d = prototype.0;
    for v in &mut d {
        let j = rng.random_range(-amplitude..=amplitude);
        *v = (*v as i32 + j).clamp(0, 255) as u8;
    }
    Descriptor(d)
}

fn in_image(p: &PixelPoint) -> bool {
    p.x >= 0.0 && p.x <= IMAGE_WIDTH && p.y >= 0.0 && p.y <= IMAGE_HEIGHT
}

struct SceneBuilder {
    rng: ChaCha8Rng,
    intrinsics: CameraIntrinsics,
    noise_sigma: f64,
    outlier_rate: f64,
}

impl SceneBuilder {
    fn build(mut self, poses: Vec<CameraPose>, points: Vec<WorldPoint>, seed: u64) -> SyntheticScene {
        let prototypes: Vec<Descriptor> = points.iter().map(|_| random_descriptor(&mut self.rng)).collect();
        let noise = Normal::new(0.0, self.noise_sigma.max(0.0)).expect("finite sigma");
        let mut features = Vec::with_capacity(poses.len());
        let mut sources = Vec::with_capacity(poses.len());
        for (image_id, pose) in poses.iter().enumerate() {
            let mut entries: Vec<(PixelPoint, Descriptor, Option<usize>)> = Vec::new();
            for (j, x) in points.iter().enumerate() {
                let Ok(normalized) = project(pose, x) else { continue };
                let mut pixel = self.intrinsics.project_to_pixel(&normalized);
                if !in_image(&pixel) {
                    continue;
                }
                if self.noise_sigma > 0.0 {
                    // Truncated at a radius of 3σ.
                    let offset = loop {
                        let d = Vector2::new(noise.sample(&mut self.rng), noise.sample(&mut self.rng));
                        if d.norm() <= 3.0 * self.noise_sigma {
                            break d;
                        }
                    };
                    pixel += offset;
                }
                entries.push((pixel, jittered(&prototypes[j], &mut self.rng), Some(j)));
            }
            let n_outliers = if self.outlier_rate > 0.0 {
                (entries.len() as f64 * self.outlier_rate / (1.0 - self.outlier_rate)).round() as usize
            } else {
                0
            };
            for _ in 0..n_outliers {
                let pixel = PixelPoint::new(self.rng.random_range(0.0..IMAGE_WIDTH), self.rng.random_range(0.0..IMAGE_HEIGHT));
                entries.push((pixel, random_descriptor(&mut self.rng), None));
            }
            entries.shuffle(&mut self.rng);
            let raw: Vec<(PixelPoint, f64, f64)> = entries
                .iter()
                .map(|(p, _, _)| (*p, self.rng.random_range(1.0..4.0), self.rng.random_range(-3.1..3.1)))
                .collect();
            let descriptors = entries.iter().map(|(_, d, _)| *d).collect();
            features.push(
                FeatureSet::from_pixels(image_id, &raw, descriptors, &self.intrinsics)
                    .expect("synthetic keypoints normalize without distortion"),
            );
            sources.push(entries.iter().map(|(_, _, s)| *s).collect());
        }
        SyntheticScene {
            intrinsics: self.intrinsics,
            gt_poses: poses,
            gt_points: points,
            features,
            sources,
            outlier_rate: self.outlier_rate,
            noise_sigma: self.noise_sigma,
            rng_seed: seed,
        }
    }
}

fn builder(seed: u64, noise_sigma: f64, outlier_rate: f64) -> SceneBuilder {
    assert!((0.0..1.0).contains(&outlier_rate), "outlier rate must lie in [0, 1)");
    SceneBuilder {
        rng: ChaCha8Rng::seed_from_u64(seed),
        intrinsics: default_intrinsics(),
        noise_sigma,
        outlier_rate,
    }
}

pub const RING_RADIUS: f64 = 5.0;
pub const CLOUD_RADIUS: f64 = 1.0;

/// Cameras every `step_deg` on a horizontal circle, all looking at the
/// centroid of a random cloud inside the unit ball.
pub fn generate_ring(
    n_cameras: usize,
    step_deg: f64,
    n_points: usize,
    noise_sigma: f64,
    outlier_rate: f64,
    seed: u64,
) -> SyntheticScene {
    assert!(n_cameras >= 2, "a ring needs at least two cameras");
    let mut b = builder(seed, noise_sigma, outlier_rate);
    let points: Vec<WorldPoint> = (0..n_points)
        .map(|_| loop {
            let v = Vector3::new(
                b.rng.random_range(-CLOUD_RADIUS..CLOUD_RADIUS),
                b.rng.random_range(-CLOUD_RADIUS..CLOUD_RADIUS),
                b.rng.random_range(-CLOUD_RADIUS..CLOUD_RADIUS),
            );
            if v.norm() <= CLOUD_RADIUS {
                break Point3::from(v);
            }
        })
        .collect();
    let centroid = if points.is_empty() {
        Vector3::zeros()
    } else {
        points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / points.len() as f64
    };
    let poses = (0..n_cameras)
        .map(|i| {
            let angle = (i as f64 * step_deg).to_radians();
            let center = centroid + Vector3::new(RING_RADIUS * angle.sin(), -0.5, -RING_RADIUS * angle.cos());
            look_at(center, centroid)
        })
        .collect();
    b.build(poses, points, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallConfig {
    pub n_cameras: usize,
    pub n_points: usize,
    /// Lateral distance between consecutive cameras.
    pub spacing: f64,
    /// Distance from the camera line to the plane.
    pub distance: f64,
    /// Half-range of uniform offsets off the plane; zero keeps it planar.
    pub relief: f64,
    pub noise_sigma: f64,
    pub outlier_rate: f64,
    pub seed: u64,
}

impl Default for WallConfig {
    fn default() -> Self {
        Self {
            n_cameras: 5,
            n_points: 300,
            spacing: 0.4,
            distance: 5.0,
            relief: 0.0,
            noise_sigma: 0.0,
            outlier_rate: 0.0,
            seed: 0,
        }
    }
}

/// Points on the plane z = 0 (plus optional relief) seen by cameras moving
/// along the x axis, slightly turned toward the middle of the wall.
pub fn generate_wall(cfg: &WallConfig) -> SyntheticScene {
    assert!(cfg.n_cameras >= 2, "a wall scene needs at least two cameras");
    let mut b = builder(cfg.seed, cfg.noise_sigma, cfg.outlier_rate);
    let points: Vec<WorldPoint> = (0..cfg.n_points)
        .map(|_| {
            let z = if cfg.relief > 0.0 { b.rng.random_range(-cfg.relief..cfg.relief) } else { 0.0 };
            Point3::new(b.rng.random_range(-2.0..2.0), b.rng.random_range(-1.5..1.5), z)
        })
        .collect();
    let mid = (cfg.n_cameras - 1) as f64 / 2.0;
    let poses = (0..cfg.n_cameras)
        .map(|i| {
            let x = (i as f64 - mid) * cfg.spacing;
            let center = Vector3::new(x, 0.2, -cfg.distance);
            look_at(center, Vector3::new(0.3 * x, 0.0, 0.0))
        })
        .collect();
    b.build(poses, points, cfg.seed)
}
