//! Integer matrices, eigen-data and lift/torus coordinate bookkeeping.

use nalgebra::{Matrix2, Vector2};
use num_integer::{Integer, Roots};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("complex spectrum: discriminant {0} < 0")]
    ComplexSpectrum(i64),
    #[error("rational spectrum: discriminant {0} is a perfect square")]
    RationalSpectrum(i64),
    #[error("eigenvalues have equal modulus {0}")]
    EqualModuli(f64),
    #[error("not expanding: |lambda_c| = {0} <= 1")]
    NotExpanding(f64),
}

/// A 2x2 integer matrix acting on Z^2, stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeMatrix(pub [[i64; 2]; 2]);

impl LatticeMatrix {
    pub const IDENTITY: LatticeMatrix = LatticeMatrix([[1, 0], [0, 1]]);

    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        LatticeMatrix([[a, b], [c, d]])
    }

    pub fn trace(&self) -> i64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> i64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn discriminant(&self) -> i64 {
        let t = self.trace();
        t * t - 4 * self.det()
    }

    pub fn to_f64(&self) -> Mat2 {
        let m = &self.0;
        Mat2::new(m[0][0] as f64, m[0][1] as f64, m[1][0] as f64, m[1][1] as f64)
    }

    pub fn apply(&self, v: [i64; 2]) -> [i64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn checked_mul(&self, o: &LatticeMatrix) -> Option<LatticeMatrix> {
        let (a, b) = (&self.0, &o.0);
        let mut out = [[0i64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0]
                    .checked_mul(b[0][j])?
                    .checked_add(a[i][1].checked_mul(b[1][j])?)?;
            }
        }
        Some(LatticeMatrix(out))
    }

    pub fn checked_pow(&self, n: u32) -> Option<LatticeMatrix> {
        let mut acc = LatticeMatrix::IDENTITY;
        for _ in 0..n {
            acc = acc.checked_mul(self)?;
        }
        Some(acc)
    }

    pub fn minus_identity(&self) -> LatticeMatrix {
        let m = &self.0;
        LatticeMatrix([[m[0][0] - 1, m[0][1]], [m[1][0], m[1][1] - 1]])
    }

    /// Representatives of Z^2 / M Z^2, read off the Hermite normal form of the column lattice.
    /// Empty when M is singular.
    pub fn coset_representatives(&self) -> Vec<[i64; 2]> {
        let m = &self.0;
        let (a, b, c, d) = (m[0][0] as i128, m[0][1] as i128, m[1][0] as i128, m[1][1] as i128);
        let det = a * d - b * c;
        if det == 0 {
            return Vec::new();
        }
        let eg = a.extended_gcd(&b);
        let g = eg.gcd.abs();
        let h22 = (det / eg.gcd).abs();
        let mut reps = Vec::with_capacity((g * h22) as usize);
        for i in 0..g {
            for j in 0..h22 {
                reps.push([i as i64, j as i64]);
            }
        }
        reps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    pub trace: i64,
    pub det: i64,
    pub discriminant: i64,
    pub lambda_u: f64,
    pub lambda_c: f64,
    pub e_u: Vec2,
    pub e_c: Vec2,
    /// Slope dy/dx of e_u.
    pub theta: f64,
}

impl EigenData {
    /// Coordinates of v in the (e_u, e_c) basis.
    pub fn eigen_coords(&self, v: Vec2) -> (f64, f64) {
        let det = self.e_u.x * self.e_c.y - self.e_u.y * self.e_c.x;
        let u = (v.x * self.e_c.y - v.y * self.e_c.x) / det;
        let c = (self.e_u.x * v.y - self.e_u.y * v.x) / det;
        (u, c)
    }
}

pub fn is_perfect_square(n: i64) -> bool {
    if n < 0 {
        return false;
    }
    let r = (n as u64).sqrt();
    r * r == n as u64
}

fn eigenvector(m: &LatticeMatrix, lambda: f64) -> Vec2 {
    let [[a, b], [c, d]] = m.0;
    let v1 = Vec2::new(b as f64, lambda - a as f64);
    let v2 = Vec2::new(lambda - d as f64, c as f64);
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    orient(v.normalize())
}

fn orient(v: Vec2) -> Vec2 {
    if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
        -v
    } else {
        v
    }
}

pub fn eigen_decompose(m: &LatticeMatrix) -> Result<EigenData, SpectrumError> {
    let t = m.trace();
    let d = m.det();
    let disc = m.discriminant();
    if disc < 0 {
        return Err(SpectrumError::ComplexSpectrum(disc));
    }
    if is_perfect_square(disc) {
        return Err(SpectrumError::RationalSpectrum(disc));
    }
    let s = (disc as f64).sqrt();
    // Pick the root without cancellation, recover the other from the product.
    let big = if t >= 0 { (t as f64 + s) / 2.0 } else { (t as f64 - s) / 2.0 };
    let small = d as f64 / big;
    let (lambda_u, lambda_c) = if big.abs() >= small.abs() { (big, small) } else { (small, big) };
    if t == 0 {
        return Err(SpectrumError::EqualModuli(lambda_u.abs()));
    }
    if lambda_c.abs() <= 1.0 {
        return Err(SpectrumError::NotExpanding(lambda_c.abs()));
    }
    let e_u = eigenvector(m, lambda_u);
    let e_c = eigenvector(m, lambda_c);
    Ok(EigenData {
        trace: t,
        det: d,
        discriminant: disc,
        lambda_u,
        lambda_c,
        e_u,
        e_c,
        theta: e_u.y / e_u.x,
    })
}

/// Reduce a lift point to [0,1)^2.
pub fn wrap(x: Vec2) -> Vec2 {
    Vec2::new(wrap1(x.x), wrap1(x.y))
}

pub fn wrap1(t: f64) -> f64 {
    let r = t - t.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Representative of y - x with both components in [-1/2, 1/2).
pub fn min_displacement(x: Vec2, y: Vec2) -> Vec2 {
    let d = y - x;
    Vec2::new(d.x - (d.x + 0.5).floor(), d.y - (d.y + 0.5).floor())
}

pub fn torus_distance(x: Vec2, y: Vec2) -> f64 {
    min_displacement(x, y).norm()
}

/// Unsigned angle between the lines spanned by u and v, in [0, pi/2].
pub fn line_angle(u: Vec2, v: Vec2) -> f64 {
    let cross = (u.x * v.y - u.y * v.x).abs();
    let dot = u.dot(&v).abs();
    cross.atan2(dot)
}
