//! Univariate polynomials with real coefficients and real-root extraction
//! through companion-matrix eigenvalues.

use nalgebra::DMatrix;
use std::ops::{Add, Mul, Neg, Sub};

/// Roots whose imaginary part is below this fraction of `1 + |re|` are real.
pub const IMAGINARY_TOLERANCE: f64 = 1e-8;

const POLISH_STEPS: usize = 3;

/// Dense polynomial, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn zero() -> Self {
        Poly(vec![0.0])
    }

    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    /// `a + b z`
    pub fn linear(a: f64, b: f64) -> Self {
        Poly(vec![a, b])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    /// Degree ignoring exact trailing zeros.
    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::zero();
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    /// Real roots, see [`real_roots`].
    pub fn real_roots(&self) -> Vec<f64> {
        real_roots(&self.0)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.0.len().max(rhs.0.len());
        Poly(
            (0..n)
                .map(|i| self.0.get(i).unwrap_or(&0.0) + rhs.0.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.0.len().max(rhs.0.len());
        Poly(
            (0..n)
                .map(|i| self.0.get(i).unwrap_or(&0.0) - rhs.0.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + rhs.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in rhs.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

/// Real roots of `Σ coeffs[i] zⁱ`, sorted ascending.
///
/// Leading coefficients that are negligible relative to the largest one are
/// dropped, the polynomial is made monic and the eigenvalues of its balanced
/// companion matrix are computed. Roots with imaginary part below
/// `IMAGINARY_TOLERANCE · (1 + |re|)` are kept and polished with a few guarded
/// Newton steps.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    let mut n = coeffs.len();
    while n > 0 && coeffs[n - 1].abs() <= scale * 1e-14 {
        n -= 1;
    }
    if n <= 1 {
        return Vec::new();
    }
    let degree = n - 1;
    let lead = coeffs[degree];

    // Zero roots are split off so the companion matrix stays well scaled.
    let zeros = coeffs[..degree].iter().take_while(|&&c| c == 0.0).count();
    let reduced: Vec<f64> = coeffs[zeros..n].iter().map(|c| c / lead).collect();
    let reduced_degree = reduced.len() - 1;

    let mut roots = Vec::with_capacity(degree);
    if zeros > 0 {
        roots.push(0.0);
    }
    match reduced_degree {
        0 => {}
        1 => roots.push(-reduced[0]),
        _ => {
            let mut companion = DMatrix::<f64>::zeros(reduced_degree, reduced_degree);
            for i in 1..reduced_degree {
                companion[(i, i - 1)] = 1.0;
            }
            for i in 0..reduced_degree {
                companion[(i, reduced_degree - 1)] = -reduced[i];
            }
            balance(&mut companion);
            let poly = Poly(coeffs[..n].to_vec());
            let deriv = poly.derivative();
            for ev in companion.complex_eigenvalues().iter() {
                if ev.im.abs() < IMAGINARY_TOLERANCE * (1.0 + ev.re.abs()) {
                    roots.push(polish(&poly, &deriv, ev.re));
                }
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    roots
}

fn polish(poly: &Poly, deriv: &Poly, mut z: f64) -> f64 {
    let mut value = poly.eval(z).abs();
    for _ in 0..POLISH_STEPS {
        let d = deriv.eval(z);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let candidate = z - poly.eval(z) / d;
        let cv = poly.eval(candidate).abs();
        if !(cv < value) {
            break;
        }
        z = candidate;
        value = cv;
    }
    z
}

/// Parlett–Reinsch diagonal similarity balancing, radix 2.
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let radix = 2.0f64;
    let sq = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= sq;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sq;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= inv;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}
