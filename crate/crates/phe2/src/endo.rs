//! Torus endomorphisms f = A + eps*g with g a trigonometric polynomial.

use crate::lattice::{
    eigen_decompose, torus_distance, wrap, EigenData, LatticeMatrix, Mat2, SpectrumError, Vec2,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const SINGULAR_DET: f64 = 1e-8;
pub const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EndoError {
    #[error(transparent)]
    BadSpectrum(#[from] SpectrumError),
    #[error("|det Df| = {min_det:e} <= 1e-8 at {at:?}")]
    Singular { min_det: f64, at: [f64; 2] },
    #[error("mode {index} has a coefficient not parallel to the {axis} eigendirection")]
    NotAligned { index: usize, axis: &'static str },
    #[error("Newton inverse did not converge for target {target:?} (residual {residual:e})")]
    NoConvergence { target: [f64; 2], residual: f64 },
    #[error("found {found} of {expected} preimages")]
    MissedBranch { found: usize, expected: usize },
    #[error("recomputed homotopy class {found:?} differs from {expected:?}")]
    ClassMismatch { found: LatticeMatrix, expected: LatticeMatrix },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    General,
    CenterAligned,
    UnstableAligned,
}

/// One Fourier mode: cos_coef*cos(2 pi k.x) + sin_coef*sin(2 pi k.x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: [i64; 2],
    pub cos: Vec2,
    pub sin: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub modes: Vec<Mode>,
    pub epsilon: f64,
    pub direction_mode: DirectionMode,
}

impl PerturbationSpec {
    pub fn zero() -> Self {
        PerturbationSpec { modes: Vec::new(), epsilon: 0.0, direction_mode: DirectionMode::General }
    }
}

#[derive(Clone, Debug)]
struct ScaledMode {
    k2pi: Vec2,
    cos: Vec2,
    sin: Vec2,
}

#[derive(Clone, Debug)]
pub struct TorusEndomorphism {
    linear: LatticeMatrix,
    eigen: EigenData,
    pert: PerturbationSpec,
    a: Mat2,
    a_inv: Mat2,
    degree: usize,
    min_det: f64,
    modes: Vec<ScaledMode>,
    branches: Vec<[i64; 2]>,
}

fn parallel(v: Vec2, dir: Vec2) -> bool {
    (v.x * dir.y - v.y * dir.x).abs() <= 1e-12 * v.norm().max(1e-300)
}

impl TorusEndomorphism {
    /// Builds f and checks the local-diffeomorphism property on an n x n grid.
    pub fn new(
        linear: LatticeMatrix,
        pert: PerturbationSpec,
        grid: usize,
    ) -> Result<Self, EndoError> {
        let eigen = eigen_decompose(&linear)?;
        let axis = match pert.direction_mode {
            DirectionMode::General => None,
            DirectionMode::CenterAligned => Some((eigen.e_c, "center")),
            DirectionMode::UnstableAligned => Some((eigen.e_u, "unstable")),
        };
        if let Some((dir, name)) = axis {
            for (index, m) in pert.modes.iter().enumerate() {
                if !parallel(m.cos, dir) || !parallel(m.sin, dir) {
                    return Err(EndoError::NotAligned { index, axis: name });
                }
            }
        }
        let mut f = Self::build(linear, eigen, pert);
        let dets: Vec<(f64, Vec2)> = (0..grid * grid)
            .into_par_iter()
            .map(|idx| {
                let x = crate::field::node(grid, idx / grid, idx % grid);
                (f.jacobian(x).determinant(), x)
            })
            .collect();
        let (min_det, at) = dets
            .iter()
            .map(|&(d, x)| (d.abs(), x))
            .fold((f64::INFINITY, Vec2::zeros()), |acc, v| if v.0 < acc.0 { v } else { acc });
        // A sign change on the grid means det Df vanishes between nodes.
        let sign_change = dets.iter().any(|d| d.0 > 0.0) && dets.iter().any(|d| d.0 < 0.0);
        if min_det <= SINGULAR_DET || sign_change {
            return Err(EndoError::Singular { min_det, at: [at.x, at.y] });
        }
        f.min_det = min_det;
        Ok(f)
    }

    fn build(linear: LatticeMatrix, eigen: EigenData, pert: PerturbationSpec) -> Self {
        let a = linear.to_f64();
        let a_inv = a.try_inverse().expect("expanding matrix is invertible");
        let modes = pert
            .modes
            .iter()
            .map(|m| ScaledMode {
                k2pi: Vec2::new(m.k[0] as f64, m.k[1] as f64) * (2.0 * PI),
                cos: m.cos * pert.epsilon,
                sin: m.sin * pert.epsilon,
            })
            .collect();
        let branches = linear.coset_representatives();
        TorusEndomorphism {
            linear,
            degree: branches.len(),
            eigen,
            pert,
            a,
            a_inv,
            min_det: f64::NAN,
            modes,
            branches,
        }
    }

    /// The map with its perturbation multiplied by s; no grid validation.
    pub fn scaled(&self, s: f64) -> Self {
        let mut pert = self.pert.clone();
        pert.epsilon *= s;
        let mut f = Self::build(self.linear, self.eigen.clone(), pert);
        f.min_det = self.min_det;
        f
    }

    pub fn linear(&self) -> LatticeMatrix {
        self.linear
    }
    pub fn eigen(&self) -> &EigenData {
        &self.eigen
    }
    pub fn perturbation(&self) -> &PerturbationSpec {
        &self.pert
    }
    pub fn a(&self) -> Mat2 {
        self.a
    }
    pub fn a_inv(&self) -> Mat2 {
        self.a_inv
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    /// Minimum |det Df| over the construction grid.
    pub fn min_det(&self) -> f64 {
        self.min_det
    }
    pub fn is_linear(&self) -> bool {
        self.modes.is_empty() || self.pert.epsilon == 0.0
    }

    /// eps*g(x), the periodic part of the lift.
    pub fn displacement(&self, x: Vec2) -> Vec2 {
        let mut s = Vec2::zeros();
        for m in &self.modes {
            let ph = m.k2pi.dot(&x);
            s += m.cos * ph.cos() + m.sin * ph.sin();
        }
        s
    }

    pub fn apply_lift(&self, x: Vec2) -> Vec2 {
        self.a * x + self.displacement(x)
    }

    pub fn apply(&self, x: Vec2) -> Vec2 {
        wrap(self.apply_lift(x))
    }

    pub fn jacobian(&self, x: Vec2) -> Mat2 {
        let mut j = self.a;
        for m in &self.modes {
            let ph = m.k2pi.dot(&x);
            let col = m.sin * ph.cos() - m.cos * ph.sin();
            j += col * m.k2pi.transpose();
        }
        j
    }

    fn newton(&self, y: Vec2, guess: Vec2) -> Option<Vec2> {
        let tol = 1e-12 * y.norm().max(1.0);
        let mut x = guess;
        let mut r = self.apply_lift(x) - y;
        for _ in 0..NEWTON_MAX_ITER {
            if r.norm() < tol {
                return Some(x);
            }
            let step = self.jacobian(x).try_inverse()? * r;
            let mut t = 1.0;
            loop {
                let xn = x - step * t;
                let rn = self.apply_lift(xn) - y;
                if rn.norm() < r.norm() || t < 1e-6 {
                    x = xn;
                    r = rn;
                    break;
                }
                t *= 0.5;
            }
        }
        (r.norm() < tol).then_some(x)
    }

    /// Solves f~(x) = y by Newton from `guess`.
    pub fn inverse_lift(&self, y: Vec2, guess: Vec2) -> Result<Vec2, EndoError> {
        self.newton(y, guess).ok_or_else(|| EndoError::NoConvergence {
            target: [y.x, y.y],
            residual: (self.apply_lift(guess) - y).norm(),
        })
    }

    /// The lifted inverse f~^{-1}(y). Falls back to continuation in eps when Newton from A^{-1}y fails.
    pub fn lift_inverse(&self, y: Vec2) -> Result<Vec2, EndoError> {
        let guess = self.a_inv * y;
        if let Some(x) = self.newton(y, guess) {
            return Ok(x);
        }
        let steps = 16;
        let mut x = guess;
        for s in 1..=steps {
            let fs = self.scaled(s as f64 / steps as f64);
            x = fs.inverse_lift(y, x)?;
        }
        Ok(x)
    }

    /// The preimage of torus point y on branch `b` (index into the coset representatives of A).
    pub fn preimage_on_branch(&self, y: Vec2, b: usize) -> Result<Vec2, EndoError> {
        let m = self.branches[b];
        let target = y + Vec2::new(m[0] as f64, m[1] as f64);
        Ok(wrap(self.lift_inverse(target)?))
    }

    pub fn preimages(&self, y: Vec2) -> Result<Vec<Vec2>, EndoError> {
        let mut out: Vec<Vec2> = Vec::with_capacity(self.degree);
        for b in 0..self.degree {
            let x = self.preimage_on_branch(y, b)?;
            if out.iter().all(|&z| torus_distance(z, x) > 1e-4) {
                out.push(x);
            }
        }
        if out.len() < self.degree {
            return Err(EndoError::MissedBranch { found: out.len(), expected: self.degree });
        }
        Ok(out)
    }

    /// Recomputes A from f~(x + e_i) - f~(x) at a few points.
    pub fn verify_homotopy_class(&self) -> Result<LatticeMatrix, EndoError> {
        let probes = [Vec2::new(0.0, 0.0), Vec2::new(0.3141, 0.2718), Vec2::new(0.77, 0.123)];
        let mut found = [[0i64; 2]; 2];
        for (pi, x) in probes.iter().enumerate() {
            for i in 0..2 {
                let mut e = Vec2::zeros();
                e[i] = 1.0;
                let col = self.apply_lift(x + e) - self.apply_lift(*x);
                for r in 0..2 {
                    let snapped = col[r].round();
                    if (col[r] - snapped).abs() > 1e-10 {
                        return Err(EndoError::ClassMismatch { found: LatticeMatrix(found), expected: self.linear });
                    }
                    if pi == 0 {
                        found[r][i] = snapped as i64;
                    } else if found[r][i] != snapped as i64 {
                        return Err(EndoError::ClassMismatch {
                            found: LatticeMatrix(found),
                            expected: self.linear,
                        });
                    }
                }
            }
        }
        let found = LatticeMatrix(found);
        if found != self.linear {
            return Err(EndoError::ClassMismatch { found, expected: self.linear });
        }
        Ok(found)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Vec2;

    fn cat() -> LatticeMatrix {
        LatticeMatrix::new(3, 1, 1, 2)
    }

    fn center_family(eps: f64) -> TorusEndomorphism {
        let e = eigen_decompose(&cat()).unwrap();
        let pert = PerturbationSpec {
            modes: vec![Mode { k: [1, 0], cos: e.e_c, sin: Vec2::zeros() }],
            epsilon: eps,
            direction_mode: DirectionMode::CenterAligned,
        };
        TorusEndomorphism::new(cat(), pert, 64).unwrap()
    }

    #[test]
    fn unperturbed_is_linear() {
        let f = TorusEndomorphism::new(cat(), PerturbationSpec::zero(), 16).unwrap();
        let x = Vec2::new(0.5, 0.5);
        assert_eq!(f.apply_lift(x), cat().to_f64() * x);
        assert_eq!(f.jacobian(x), cat().to_f64());
        assert!((f.min_det() - 5.0).abs() < 1e-12);
        let y = Vec2::new(1.3, -0.4);
        let z = f.inverse_lift(y, f.a_inv() * y).unwrap();
        assert!((z - f.a_inv() * y).norm() < 1e-15);
    }

    #[test]
    fn center_family_det_bound() {
        let f = center_family(0.05);
        let bound = 5.0 - 0.05 * 2.0 * PI * f.eigen().lambda_u;
        assert!(f.min_det() >= bound);
    }

    #[test]
    fn singular_for_large_eps() {
        let e = eigen_decompose(&cat()).unwrap();
        let pert = PerturbationSpec {
            modes: vec![Mode { k: [1, 0], cos: e.e_c, sin: Vec2::zeros() }],
            epsilon: 2.0,
            direction_mode: DirectionMode::CenterAligned,
        };
        assert!(matches!(TorusEndomorphism::new(cat(), pert, 128), Err(EndoError::Singular { .. })));
    }

    #[test]
    fn alignment_is_checked() {
        let pert = PerturbationSpec {
            modes: vec![Mode { k: [1, 0], cos: Vec2::new(1.0, 0.0), sin: Vec2::zeros() }],
            epsilon: 0.01,
            direction_mode: DirectionMode::CenterAligned,
        };
        assert!(matches!(
            TorusEndomorphism::new(cat(), pert, 8),
            Err(EndoError::NotAligned { index: 0, .. })
        ));
    }

    #[test]
    fn five_preimages() {
        for eps in [0.0, 0.05] {
            let f = center_family(eps);
            let y = Vec2::new(0.21, 0.83);
            let pre = f.preimages(y).unwrap();
            assert_eq!(pre.len(), 5);
            for x in pre {
                assert!(torus_distance(f.apply(x), y) < 1e-10);
            }
        }
    }

    #[test]
    fn homotopy_class_roundtrip() {
        assert_eq!(center_family(0.05).verify_homotopy_class().unwrap(), cat());
        assert_eq!(center_family(0.0).verify_homotopy_class().unwrap(), cat());
    }

    #[test]
    fn det_matches_expansion() {
        // For a rank-one perturbation v k^T, det(A + t v k^T) = det A (1 + t k^T A^{-1} v).
        let f = center_family(0.05);
        let e = f.eigen().clone();
        let k = Vec2::new(2.0 * PI, 0.0);
        for x in [Vec2::new(0.1, 0.2), Vec2::new(0.7, 0.9)] {
            let t = -0.05 * (2.0 * PI * x.x).sin();
            let expected = 5.0 * (1.0 + t * k.dot(&(f.a_inv() * e.e_c)));
            assert!((f.jacobian(x).determinant() - expected).abs() < 1e-12);
        }
    }
}
