//! Minimal relative pose from five calibrated correspondences.
//!
//! The essential matrix is written as `E = x X + y Y + z Z + W` over the
//! four-dimensional nullspace of the epipolar constraints. Substituting into
//! the rank constraint `det E = 0` and the trace constraint
//! `2 E Eᵀ E − tr(E Eᵀ) E = 0` gives ten cubic equations in `x, y, z`.
//! Gauss–Jordan elimination on the 10×20 coefficient matrix leaves three
//! equations linear in `x, y` whose 3×3 determinant is a degree-10
//! polynomial in `z`. Each real root yields one candidate.

use crate::geom::{homogeneous, CameraPose, EssentialMatrix, NormalizedPoint};
use crate::poly::Poly;
use crate::triangulate::{reprojection_error, triangulate_two_view};
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use thiserror::Error;

/// Smallest relative singular value of the 5×9 design matrix for a usable sample.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FivePointError {
    #[error("degenerate sample: epipolar design matrix is rank deficient")]
    DegenerateSample,
    #[error("no factorization places a strict majority of points in front of both cameras")]
    AmbiguousCheirality,
    #[error("at least one correspondence is required")]
    NoCorrespondences,
}

/// A normalized point in image `a` and its match in image `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence2D2D {
    pub a: NormalizedPoint,
    pub b: NormalizedPoint,
}

impl Correspondence2D2D {
    pub fn new(a: NormalizedPoint, b: NormalizedPoint) -> Self {
        Self { a, b }
    }
}

/// Rotation of camera `b` and the unit direction of its center, both in the
/// frame of camera `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: Matrix3<f64>,
    pub direction: Vector3<f64>,
}

impl RelativePose {
    /// Pose of camera `b` when camera `a` sits at `(I, 0)` and the baseline has unit length.
    pub fn to_camera_pose(&self) -> CameraPose {
        CameraPose::new_unchecked(self.rotation, self.direction)
    }
}

// Monomials of degree ≤ 3 in (x, y, z), in the elimination order. The first
// ten are eliminated; the remaining ten are grouped as
// [x·(z², z, 1), y·(z², z, 1), (z³, z², z, 1)].
const MONOMIALS: [(u8, u8, u8); 20] = [
    (3, 0, 0),
    (0, 3, 0),
    (2, 1, 0),
    (1, 2, 0),
    (2, 0, 1),
    (2, 0, 0),
    (0, 2, 1),
    (0, 2, 0),
    (1, 1, 1),
    (1, 1, 0),
    (1, 0, 2),
    (1, 0, 1),
    (1, 0, 0),
    (0, 1, 2),
    (0, 1, 1),
    (0, 1, 0),
    (0, 0, 3),
    (0, 0, 2),
    (0, 0, 1),
    (0, 0, 0),
];

const fn monomial_table() -> [[[u8; 4]; 4]; 4] {
    let mut table = [[[u8::MAX; 4]; 4]; 4];
    let mut i = 0;
    while i < MONOMIALS.len() {
        let (a, b, c) = MONOMIALS[i];
        table[a as usize][b as usize][c as usize] = i as u8;
        i += 1;
    }
    table
}

const MONOMIAL_INDEX: [[[u8; 4]; 4]; 4] = monomial_table();

/// Polynomial of total degree ≤ 3 in (x, y, z).
#[derive(Clone, Copy)]
struct Cubic([f64; 20]);

impl Cubic {
    fn zero() -> Self {
        Cubic([0.0; 20])
    }

    /// `a x + b y + c z + d`
    fn linear(a: f64, b: f64, c: f64, d: f64) -> Self {
        let mut p = Cubic::zero();
        p.0[12] = a;
        p.0[15] = b;
        p.0[18] = c;
        p.0[19] = d;
        p
    }

    fn mul(&self, other: &Cubic) -> Cubic {
        let mut out = Cubic::zero();
        for (i, &ca) in self.0.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            let (a0, a1, a2) = MONOMIALS[i];
            for (j, &cb) in other.0.iter().enumerate() {
                if cb == 0.0 {
                    continue;
                }
                let (b0, b1, b2) = MONOMIALS[j];
                let (e0, e1, e2) = (a0 + b0, a1 + b1, a2 + b2);
                debug_assert!(e0 + e1 + e2 <= 3, "product exceeds degree 3");
                let k = MONOMIAL_INDEX[e0 as usize][e1 as usize][e2 as usize] as usize;
                out.0[k] += ca * cb;
            }
        }
        out
    }

    fn add(&self, other: &Cubic) -> Cubic {
        let mut out = *self;
        out.0.iter_mut().zip(other.0.iter()).for_each(|(a, b)| *a += b);
        out
    }

    fn scale(&self, s: f64) -> Cubic {
        let mut out = *self;
        out.0.iter_mut().for_each(|a| *a *= s);
        out
    }
}

type PolyMatrix = [[Cubic; 3]; 3];

fn poly_matmul(a: &PolyMatrix, b: &PolyMatrix) -> PolyMatrix {
    let mut out = [[Cubic::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = Cubic::zero();
            for k in 0..3 {
                acc = acc.add(&a[i][k].mul(&b[k][j]));
            }
            out[i][j] = acc;
        }
    }
    out
}

fn transpose(a: &PolyMatrix) -> PolyMatrix {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// Ten cubic constraints on (x, y, z), one row per equation.
fn constraint_matrix(basis: &[Matrix3<f64>; 4]) -> SMatrix<f64, 10, 20> {
    let [bx, by, bz, bw] = basis;
    let mut e = [[Cubic::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            e[i][j] = Cubic::linear(bx[(i, j)], by[(i, j)], bz[(i, j)], bw[(i, j)]);
        }
    }

    let det = e[0][1]
        .mul(&e[1][2])
        .add(&e[0][2].mul(&e[1][1]).scale(-1.0))
        .mul(&e[2][0])
        .add(&e[0][2].mul(&e[1][0]).add(&e[0][0].mul(&e[1][2]).scale(-1.0)).mul(&e[2][1]))
        .add(&e[0][0].mul(&e[1][1]).add(&e[0][1].mul(&e[1][0]).scale(-1.0)).mul(&e[2][2]));

    let eet = poly_matmul(&e, &transpose(&e));
    let trace = eet[0][0].add(&eet[1][1]).add(&eet[2][2]);
    let eete = poly_matmul(&eet, &e);

    let mut m = SMatrix::<f64, 10, 20>::zeros();
    m.row_mut(0).copy_from_slice(&det.0);
    for i in 0..3 {
        for j in 0..3 {
            let c = eete[i][j].add(&trace.mul(&e[i][j]).scale(-0.5));
            m.row_mut(1 + 3 * i + j).copy_from_slice(&c.0);
        }
    }
    m
}

/// Reduces the leading 10×10 block to the identity. Returns `None` when it is singular.
fn gauss_jordan(m: &mut SMatrix<f64, 10, 20>) -> Option<()> {
    let scale = m.amax();
    if scale == 0.0 {
        return None;
    }
    for col in 0..10 {
        let (pivot, value) = (col..10)
            .map(|r| (r, m[(r, col)].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        if value <= scale * 1e-14 {
            return None;
        }
        m.swap_rows(col, pivot);
        let inv = 1.0 / m[(col, col)];
        for c in col..20 {
            m[(col, c)] *= inv;
        }
        for r in 0..10 {
            if r == col {
                continue;
            }
            let f = m[(r, col)];
            if f != 0.0 {
                for c in col..20 {
                    m[(r, c)] -= f * m[(col, c)];
                }
            }
        }
    }
    Some(())
}

/// Coefficients of `x`, `y` and `1` of `row_a − z · row_b` as polynomials in `z`.
fn eliminated_row(m: &SMatrix<f64, 10, 20>, row_a: usize, row_b: usize) -> [Poly; 3] {
    let tail = |r: usize, cols: &[usize]| -> Poly {
        // Highest power first in `cols`.
        Poly(cols.iter().rev().map(|&c| m[(r, c)]).collect())
    };
    let z = Poly::linear(0.0, 1.0);
    let groups: [&[usize]; 3] = [&[10, 11, 12], &[13, 14, 15], &[16, 17, 18, 19]];
    groups.map(|cols| &tail(row_a, cols) - &(&z * &tail(row_b, cols)))
}

fn det3(b: &[[Poly; 3]; 3]) -> Poly {
    let minor = |i: usize, j: usize, k: usize, l: usize| &(&b[1][i] * &b[2][j]) - &(&b[1][k] * &b[2][l]);
    let t0 = &b[0][0] * &minor(1, 2, 2, 1);
    let t1 = &b[0][1] * &minor(0, 2, 2, 0);
    let t2 = &b[0][2] * &minor(0, 1, 1, 0);
    &(&t0 - &t1) + &t2
}

fn eval_cubic_row(m: &SMatrix<f64, 10, 20>, r: usize, x: f64, y: f64, z: f64) -> (f64, [f64; 3]) {
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    for (k, &(a, b, c)) in MONOMIALS.iter().enumerate() {
        let coef = m[(r, k)];
        if coef == 0.0 {
            continue;
        }
        let (a, b, c) = (a as i32, b as i32, c as i32);
        value += coef * x.powi(a) * y.powi(b) * z.powi(c);
        if a > 0 {
            grad[0] += coef * a as f64 * x.powi(a - 1) * y.powi(b) * z.powi(c);
        }
        if b > 0 {
            grad[1] += coef * b as f64 * x.powi(a) * y.powi(b - 1) * z.powi(c);
        }
        if c > 0 {
            grad[2] += coef * c as f64 * x.powi(a) * y.powi(b) * z.powi(c - 1);
        }
    }
    (value, grad)
}

/// Guarded Gauss–Newton on the ten original cubics.
fn refine(m: &SMatrix<f64, 10, 20>, xyz: Vector3<f64>) -> Vector3<f64> {
    let residual = |v: &Vector3<f64>| -> (SVector<f64, 10>, SMatrix<f64, 10, 3>) {
        let mut r = SVector::<f64, 10>::zeros();
        let mut j = SMatrix::<f64, 10, 3>::zeros();
        for row in 0..10 {
            let (val, g) = eval_cubic_row(m, row, v.x, v.y, v.z);
            r[row] = val;
            j[(row, 0)] = g[0];
            j[(row, 1)] = g[1];
            j[(row, 2)] = g[2];
        }
        (r, j)
    };
    let mut current = xyz;
    let (mut r, mut j) = residual(&current);
    let mut cost = r.norm_squared();
    for _ in 0..4 {
        if cost == 0.0 {
            break;
        }
        let jtj = j.transpose() * j;
        let Some(step) = jtj.lu().solve(&(j.transpose() * r)) else {
            break;
        };
        let candidate = current - step;
        let (rc, jc) = residual(&candidate);
        let cc = rc.norm_squared();
        if !(cc < cost) {
            break;
        }
        current = candidate;
        r = rc;
        j = jc;
        cost = cc;
    }
    current
}

/// All essential matrices consistent with five correspondences (0 to 10).
pub fn solve_essential_5pt(
    sample: &[Correspondence2D2D; 5],
) -> Result<Vec<EssentialMatrix>, FivePointError> {
    // Rows q with qᵀ vec(E) = b̃ᵀ E ã, vec(E) row-major; padded to 9×9 for a full right basis.
    let mut design = SMatrix::<f64, 9, 9>::zeros();
    for (r, c) in sample.iter().enumerate() {
        let (a, b) = (homogeneous(&c.a), homogeneous(&c.b));
        for i in 0..3 {
            for j in 0..3 {
                design[(r, 3 * i + j)] = b[i] * a[j];
            }
        }
    }
    if design.iter().any(|v| !v.is_finite()) {
        return Err(FivePointError::DegenerateSample);
    }
    let svd = design.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv = |k: usize| svd.singular_values[order[k]];
    if !(sv(4) > RANK_TOLERANCE * sv(0)) {
        return Err(FivePointError::DegenerateSample);
    }
    let basis: [Matrix3<f64>; 4] = std::array::from_fn(|k| {
        let row = v_t.row(order[5 + k]);
        Matrix3::from_fn(|i, j| row[3 * i + j])
    });

    let original = constraint_matrix(&basis);
    let mut m = original;
    if gauss_jordan(&mut m).is_none() {
        return Ok(Vec::new());
    }

    // Rows of x²z, x²; y²z, y²; xyz, xy.
    let b = [
        eliminated_row(&m, 4, 5),
        eliminated_row(&m, 6, 7),
        eliminated_row(&m, 8, 9),
    ];
    let poly = det3(&b);

    let mut solutions = Vec::new();
    for z in poly.real_roots() {
        let bz = Matrix3::from_fn(|i, j| b[i][j].eval(z));
        let rows = [bz.row(0).transpose(), bz.row(1).transpose(), bz.row(2).transpose()];
        let null = [
            rows[0].cross(&rows[1]),
            rows[0].cross(&rows[2]),
            rows[1].cross(&rows[2]),
        ]
        .into_iter()
        .max_by(|p, q| p.norm_squared().total_cmp(&q.norm_squared()))
        .expect("three candidates");
        if null.z == 0.0 || !null.iter().all(|v| v.is_finite()) {
            continue;
        }
        let xyz = refine(&original, Vector3::new(null.x / null.z, null.y / null.z, z));
        let e = basis[0] * xyz.x + basis[1] * xyz.y + basis[2] * xyz.z + basis[3];
        if e.iter().all(|v| v.is_finite()) && e.norm() > 0.0 {
            solutions.push(EssentialMatrix::new(nearest_essential(&e)));
        }
    }
    Ok(solutions)
}

/// Closest matrix with two equal singular values and a zero third one.
/// Roots of an ill-conditioned polynomial can leave a visible constraint
/// residual; snapping removes it without moving good solutions.
fn nearest_essential(e: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = e.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut sigma = svd.singular_values;
    let smallest = sigma.imin();
    let level = (sigma.sum() - sigma[smallest]) / 2.0;
    sigma.fill(level);
    sigma[smallest] = 0.0;
    u * Matrix3::from_diagonal(&sigma) * v_t
}

/// First-order geometric epipolar error `(bᵀEa)² / (‖(Ea)₁,₂‖² + ‖(Eᵀb)₁,₂‖²)`.
pub fn sampson_error(e: &EssentialMatrix, c: &Correspondence2D2D) -> f64 {
    let (a, b) = (homogeneous(&c.a), homogeneous(&c.b));
    let m = e.matrix();
    let ea = m * a;
    let etb = m.transpose() * b;
    let num = b.dot(&ea);
    let den = ea.x * ea.x + ea.y * ea.y + etb.x * etb.x + etb.y * etb.y;
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    num * num / den
}

/// The four `(R, ±t)` factorizations of `E`, as poses of camera `b` with unit baseline.
pub fn essential_factorizations(e: &EssentialMatrix) -> [CameraPose; 4] {
    let svd = e.matrix().svd(true, true);
    let mut u = svd.u.expect("left singular vectors requested");
    let mut v_t = svd.v_t.expect("right singular vectors requested");
    // Order singular values descending so the null direction is the last column.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    u = Matrix3::from_columns(&[u.column(order[0]), u.column(order[1]), u.column(order[2])]);
    v_t = Matrix3::from_rows(&[v_t.row(order[0]), v_t.row(order[1]), v_t.row(order[2])]);
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let ra = u * w * v_t;
    let rb = u * w.transpose() * v_t;
    let t: Vector3<f64> = u.column(2).into_owned();
    [(ra, t), (ra, -t), (rb, t), (rb, -t)]
        .map(|(r, t)| CameraPose::new_unchecked(r, -r.transpose() * t))
}

/// Picks the factorization of `E` with the most correspondences triangulating
/// in front of both cameras. Ties go to the smaller total reprojection error.
pub fn decompose_essential(
    e: &EssentialMatrix,
    inliers: &[Correspondence2D2D],
) -> Result<RelativePose, FivePointError> {
    if inliers.is_empty() {
        return Err(FivePointError::NoCorrespondences);
    }
    let reference = CameraPose::identity();
    let mut best: Option<(usize, f64, CameraPose)> = None;
    for candidate in essential_factorizations(e) {
        let mut count = 0usize;
        let mut error = 0.0;
        for c in inliers {
            if let Ok(x) = triangulate_two_view(&reference, &candidate, &c.a, &c.b) {
                count += 1;
                error += reprojection_error(&reference, &x, &c.a).unwrap_or(0.0)
                    + reprojection_error(&candidate, &x, &c.b).unwrap_or(0.0);
            }
        }
        let better = match &best {
            None => true,
            Some((bc, be, _)) => count > *bc || (count == *bc && error < *be),
        };
        if better {
            best = Some((count, error, candidate));
        }
    }
    let (count, _, pose) = best.expect("four candidates");
    if 2 * count <= inliers.len() {
        return Err(FivePointError::AmbiguousCheirality);
    }
    Ok(RelativePose {
        rotation: pose.rotation,
        direction: pose.center.normalize(),
    })
}
