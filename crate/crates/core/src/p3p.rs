//! Finsterwalder's three-point absolute pose solver.
//!
//! With unit rays `j₁, j₂, j₃`, unknown distances `s₁, s₂, s₃` along them and
//! the ratios `u = s₂/s₁`, `v = s₃/s₁`, the law of cosines gives two conics
//! in `(u, v)`. A degenerate member `M₁ + λM₂` of their pencil is found from a
//! cubic in `λ`; it splits into two lines, each of which meets a conic in at
//! most two points. The recovered camera-frame points are aligned to the
//! world points with Horn's quaternion method.

use crate::geom::{homogeneous, project, CameraPose, NormalizedPoint, WorldPoint};
use crate::poly::real_roots;
use crate::triangulate::reprojection_error;
use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

/// Maximum normalized reprojection error of a returned pose on its own sample.
pub const SAMPLE_REPROJECTION_TOLERANCE: f64 = 1e-6;

const NEWTON_STEPS: usize = 6;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum P3pError {
    #[error("degenerate sample: collinear world points or coincident rays")]
    DegenerateSample,
    #[error("no real solution")]
    NoRealSolution,
}

/// A normalized image point and the world point it observes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence2D3D {
    pub image: NormalizedPoint,
    pub world: WorldPoint,
}

impl Correspondence2D3D {
    pub fn new(image: NormalizedPoint, world: WorldPoint) -> Self {
        Self { image, world }
    }
}

/// Symmetric conic `A u² + 2B uv + C v² + 2D u + 2E v + F`.
#[derive(Debug, Clone, Copy)]
struct Conic {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
    f: f64,
}

impl Conic {
    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.a, self.b, self.d, self.b, self.c, self.e, self.d, self.e, self.f)
    }

    fn from_matrix(m: &Matrix3<f64>) -> Self {
        Conic {
            a: m[(0, 0)],
            b: m[(0, 1)],
            c: m[(1, 1)],
            d: m[(0, 2)],
            e: m[(1, 2)],
            f: m[(2, 2)],
        }
    }

    fn swapped(&self) -> Self {
        Conic {
            a: self.c,
            b: self.b,
            c: self.a,
            d: self.e,
            e: self.d,
            f: self.f,
        }
    }

    /// Points where the line `u = m v + n` meets the conic, as `(u, v)`.
    fn intersect_line(&self, m: f64, n: f64) -> Vec<(f64, f64)> {
        let qa = self.a * m * m + 2.0 * self.b * m + self.c;
        let qb = 2.0 * (self.a * m * n + self.b * n + self.d * m + self.e);
        let qc = self.a * n * n + 2.0 * self.d * n + self.f;
        real_roots(&[qc, qb, qa])
            .into_iter()
            .map(|v| (m * v + n, v))
            .collect()
    }

    /// Splits a degenerate conic into lines `u = m v + n`. Empty if the lines are complex.
    fn split_lines(&self) -> Vec<(f64, f64)> {
        let Conic { a, b, c, d, e, f } = *self;
        if a == 0.0 {
            return Vec::new();
        }
        let pp = b * b - a * c;
        let qq = d * d - a * f;
        let pq = b * d - a * e;
        let scale = (b * b).max((a * c).abs()).max((d * d).max((a * f).abs()));
        if pp < -1e-9 * scale || qq < -1e-9 * scale {
            return Vec::new();
        }
        let (p, q) = if pp >= qq {
            let p = pp.max(0.0).sqrt();
            (p, if p > 0.0 { pq / p } else { 0.0 })
        } else {
            let q = qq.max(0.0).sqrt();
            (if q > 0.0 { pq / q } else { 0.0 }, q)
        };
        vec![((-b + p) / a, (-d + q) / a), ((-b - p) / a, (-d - q) / a)]
    }
}

/// Coefficients of `det(A + λB)` in ascending powers of `λ`.
fn pencil_determinant(a: &Matrix3<f64>, b: &Matrix3<f64>) -> [f64; 4] {
    let mixed = |cols: [bool; 3]| -> f64 {
        let m = Matrix3::from_columns(&[
            if cols[0] { b.column(0) } else { a.column(0) },
            if cols[1] { b.column(1) } else { a.column(1) },
            if cols[2] { b.column(2) } else { a.column(2) },
        ]);
        m.determinant()
    };
    [
        a.determinant(),
        mixed([true, false, false]) + mixed([false, true, false]) + mixed([false, false, true]),
        mixed([true, true, false]) + mixed([true, false, true]) + mixed([false, true, true]),
        b.determinant(),
    ]
}

/// Newton refinement of the three distances on the law-of-cosines system.
fn polish_distances(mut s: Vector3<f64>, cosines: [f64; 3], squared: [f64; 3]) -> Vector3<f64> {
    // Equation k ties the rays PAIRS[k] through cosines[k] and squared[k].
    const PAIRS: [(usize, usize); 3] = [(1, 2), (0, 2), (0, 1)];
    let eval = |s: &Vector3<f64>| -> Vector3<f64> {
        Vector3::from_fn(|k, _| {
            let (i, j) = PAIRS[k];
            s[i] * s[i] + s[j] * s[j] - 2.0 * s[i] * s[j] * cosines[k] - squared[k]
        })
    };
    let mut r = eval(&s);
    for _ in 0..NEWTON_STEPS {
        let mut jac = Matrix3::zeros();
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            jac[(k, i)] = 2.0 * s[i] - 2.0 * s[j] * cosines[k];
            jac[(k, j)] = 2.0 * s[j] - 2.0 * s[i] * cosines[k];
        }
        let Some(step) = jac.lu().solve(&r) else { break };
        let candidate = s - step;
        let rc = eval(&candidate);
        if !(rc.norm() < r.norm()) {
            break;
        }
        s = candidate;
        r = rc;
    }
    s
}

/// Rotation `R` and center `T` with `camera_i = R (world_i − T)` in the least-squares sense.
pub(crate) fn absolute_orientation(world: &[Vector3<f64>], camera: &[Vector3<f64>]) -> CameraPose {
    let n = world.len() as f64;
    let wc = world.iter().sum::<Vector3<f64>>() / n;
    let cc = camera.iter().sum::<Vector3<f64>>() / n;
    let mut s = Matrix3::zeros();
    for (w, c) in world.iter().zip(camera) {
        s += (w - wc) * (c - cc).transpose();
    }
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let nmat = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx, //
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz, //
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy, //
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    );
    let eig = nmat.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(k);
    let rotation = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner();
    CameraPose::new_unchecked(rotation, wc - rotation.transpose() * cc)
}

/// All physically valid poses (points in front of the camera) consistent with
/// three 2D–3D correspondences; at most four.
pub fn solve_p3p_finsterwalder(sample: &[Correspondence2D3D; 3]) -> Result<Vec<CameraPose>, P3pError> {
    let p: [Vector3<f64>; 3] = std::array::from_fn(|i| sample[i].world.coords);
    let j: [Vector3<f64>; 3] = std::array::from_fn(|i| homogeneous(&sample[i].image).normalize());
    if p.iter().chain(j.iter()).any(|v| !v.iter().all(|x| x.is_finite())) {
        return Err(P3pError::DegenerateSample);
    }

    let a2 = (p[1] - p[2]).norm_squared();
    let b2 = (p[0] - p[2]).norm_squared();
    let c2 = (p[0] - p[1]).norm_squared();
    let longest = a2.max(b2).max(c2);
    let area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
    if !(area > 1e-10 * longest) {
        return Err(P3pError::DegenerateSample);
    }
    let min_ray_sine = [(1, 2), (0, 2), (0, 1)]
        .iter()
        .map(|&(a, b)| j[a].cross(&j[b]).norm())
        .fold(f64::INFINITY, f64::min);
    if !(min_ray_sine > 1e-10) {
        return Err(P3pError::DegenerateSample);
    }

    let cos_a = j[1].dot(&j[2]);
    let cos_b = j[0].dot(&j[2]);
    let cos_c = j[0].dot(&j[1]);

    // b²(u² + v² − 2uv cα) = a²(1 + v² − 2v cβ)
    let g1 = Conic {
        a: b2,
        b: -b2 * cos_a,
        c: b2 - a2,
        d: 0.0,
        e: a2 * cos_b,
        f: -a2,
    };
    // b²(1 + u² − 2u cγ) = c²(1 + v² − 2v cβ)
    let g2 = Conic {
        a: b2,
        b: 0.0,
        c: -c2,
        d: -b2 * cos_c,
        e: c2 * cos_b,
        f: b2 - c2,
    };
    let (m1, m2) = (g1.matrix(), g2.matrix());

    let mut ratios: Vec<(f64, f64)> = Vec::new();
    for lambda in real_roots(&pencil_determinant(&m1, &m2)) {
        let degenerate = Conic::from_matrix(&(m1 + m2 * lambda));
        let target = if lambda.abs() < 1.0 { g2 } else { g1 };
        let solve_for_u = degenerate.a.abs() >= degenerate.c.abs();
        let (split, conic) = if solve_for_u {
            (degenerate, target)
        } else {
            (degenerate.swapped(), target.swapped())
        };
        for (m, n) in split.split_lines() {
            for (first, second) in conic.intersect_line(m, n) {
                let (u, v) = if solve_for_u { (first, second) } else { (second, first) };
                ratios.push((u, v));
            }
        }
    }

    let cosines = [cos_a, cos_b, cos_c];
    let squared = [a2, b2, c2];
    let mut poses: Vec<(Vector3<f64>, CameraPose)> = Vec::new();
    for (u, v) in ratios {
        if !(u > 0.0 && v > 0.0) {
            continue;
        }
        let denom = 1.0 + v * v - 2.0 * v * cos_b;
        if !(denom > 0.0) {
            continue;
        }
        let s1 = (b2 / denom).sqrt();
        let s = polish_distances(Vector3::new(s1, u * s1, v * s1), cosines, squared);
        if !(s.iter().all(|x| *x > 0.0 && x.is_finite())) {
            continue;
        }
        let scale = s.amax();
        if poses.iter().any(|(other, _)| (other - s).amax() <= 1e-7 * scale) {
            continue;
        }
        let camera: Vec<Vector3<f64>> = (0..3).map(|i| j[i] * s[i]).collect();
        let pose = absolute_orientation(&p, &camera);
        let consistent = sample.iter().all(|c| {
            matches!(reprojection_error(&pose, &c.world, &c.image), Ok(e) if e < SAMPLE_REPROJECTION_TOLERANCE)
        });
        if consistent {
            poses.push((s, pose));
        }
    }
    if poses.is_empty() {
        return Err(P3pError::NoRealSolution);
    }
    Ok(poses.into_iter().map(|(_, p)| p).collect())
}

/// Candidate with the most `extra` correspondences below `tol`; ties go to
/// the smaller truncated total error `Σ min(e, tol)`.
pub fn disambiguate_pose(candidates: &[CameraPose], extra: &[Correspondence2D3D], tol: f64) -> CameraPose {
    assert!(!candidates.is_empty(), "at least one candidate pose");
    let score = |pose: &CameraPose| -> (usize, f64) {
        extra.iter().fold((0, 0.0), |(count, total), c| match project(pose, &c.world) {
            Ok(x) => {
                let e = (x - c.image).norm();
                if e < tol {
                    (count + 1, total + e)
                } else {
                    (count, total + tol)
                }
            }
            Err(_) => (count, total + tol),
        })
    };
    let mut best = candidates[0];
    let mut best_score = score(&best);
    for cand in &candidates[1..] {
        let s = score(cand);
        if s.0 > best_score.0 || (s.0 == best_score.0 && s.1 < best_score.1) {
            best = *cand;
            best_score = s;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::exp_so3;
    use nalgebra::{Point2, Point3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn observe(pose: &CameraPose, points: &[Point3<f64>]) -> Vec<Correspondence2D3D> {
        points.iter().map(|p| Correspondence2D3D::new(project(pose, p).unwrap(), *p)).collect()
    }

    fn pose_distance(a: &CameraPose, b: &CameraPose) -> f64 {
        (a.rotation - b.rotation).norm() + (a.center - b.center).norm()
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (CameraPose, [Correspondence2D3D; 3]) {
        loop {
            let pose = CameraPose::new_unchecked(
                exp_so3(&Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))),
                Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0)),
            );
            let points: Vec<Point3<f64>> = (0..3)
                .map(|_| {
                    let local = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(2.0..8.0));
                    Point3::from(pose.rotation.transpose() * local + pose.center)
                })
                .collect();
            let s = observe(&pose, &points);
            let sample = [s[0], s[1], s[2]];
            if solve_p3p_finsterwalder(&sample) != Err(P3pError::DegenerateSample) {
                return (pose, sample);
            }
        }
    }

    #[test]
    fn identity_pose_recovered() {
        let points = [Point3::new(1.0, 0.0, 5.0), Point3::new(0.0, 1.0, 5.0), Point3::new(-1.0, -1.0, 5.0)];
        let s = observe(&CameraPose::identity(), &points);
        let poses = solve_p3p_finsterwalder(&[s[0], s[1], s[2]]).unwrap();
        assert!(poses.iter().any(|p| pose_distance(p, &CameraPose::identity()) < 1e-9));
    }

    #[test]
    fn random_instances_contain_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let (truth, sample) = random_instance(&mut rng);
            let poses = solve_p3p_finsterwalder(&sample).unwrap();
            assert!(poses.len() <= 4);
            let best = poses.iter().map(|p| pose_distance(p, &truth)).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6, "best {best}");
            for p in &poses {
                assert!(p.is_valid());
                for c in &sample {
                    assert!(p.depth(&c.world) > 0.0);
                }
            }
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let points = [Point3::new(0.0, 0.0, 5.0), Point3::new(1.0, 0.0, 5.0), Point3::new(2.0, 0.0, 5.0)];
        let s = observe(&CameraPose::identity(), &points);
        assert_eq!(solve_p3p_finsterwalder(&[s[0], s[1], s[2]]), Err(P3pError::DegenerateSample));
    }

    #[test]
    fn coincident_rays_are_degenerate() {
        let x = Point2::new(0.1, 0.2);
        let sample = [
            Correspondence2D3D::new(x, Point3::new(0.0, 0.0, 1.0)),
            Correspondence2D3D::new(x, Point3::new(1.0, 0.0, 1.0)),
            Correspondence2D3D::new(Point2::new(0.0, 0.0), Point3::new(0.0, 1.0, 1.0)),
        ];
        assert_eq!(solve_p3p_finsterwalder(&sample), Err(P3pError::DegenerateSample));
    }

    #[test]
    fn similarity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let (truth, sample) = random_instance(&mut rng);
            let s = rng.random_range(0.2..5.0);
            let scaled = sample.map(|c| Correspondence2D3D::new(c.image, Point3::from(c.world.coords * s)));
            let poses = solve_p3p_finsterwalder(&scaled).unwrap();
            let expected = CameraPose::new_unchecked(truth.rotation, truth.center * s);
            let best = poses
                .iter()
                .map(|p| (p.rotation - expected.rotation).norm() + (p.center - expected.center).norm() / s)
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6);
        }
    }

    #[test]
    fn disambiguation_rules() {
        let a = CameraPose::identity();
        let b = CameraPose::new_unchecked(exp_so3(&Vector3::new(0.0, 0.1, 0.0)), Vector3::new(0.5, 0.0, 0.0));
        assert_eq!(disambiguate_pose(&[b], &[], 1e-3), b);
        let points: Vec<_> = (0..6).map(|i| Point3::new(i as f64 * 0.2 - 0.5, 0.1 * i as f64, 5.0 + i as f64 * 0.3)).collect();
        assert_eq!(disambiguate_pose(&[a, b], &observe(&b, &points), 1e-3), b);
    }

    #[test]
    fn tie_on_support_prefers_smaller_error() {
        let a = CameraPose::identity();
        let b = CameraPose::new_unchecked(Matrix3::identity(), Vector3::new(0.01, 0.0, 0.0));
        let points: Vec<_> = (0..5).map(|i| Point3::new(i as f64 * 0.3 - 0.6, 0.2, 5.0)).collect();
        // Observations offset slightly from a's projections: both candidates support all, `a` has the smaller error.
        let extra: Vec<_> = points
            .iter()
            .map(|p| {
                let x = project(&a, p).unwrap();
                Correspondence2D3D::new(Point2::new(x.x + 1e-4, x.y), *p)
            })
            .collect();
        assert_eq!(disambiguate_pose(&[b, a], &extra, 1.0), a);
        assert_eq!(disambiguate_pose(&[a, b], &extra, 1.0), a);
    }
}
