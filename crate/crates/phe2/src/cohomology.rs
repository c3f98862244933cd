//! Fourier inversion of phi(x + theta) - phi(x) + B(x) = 0, Diophantine constants of the
//! eigen-slope, and the transverse distance function on a vertical circle.

use crate::bundles::{LineField, Sigma};
use crate::foliation::{global_product_intersection, integrate_leaf_both, poincare_return, FolError, Leaf, TransverseCircle};
use crate::lattice::Vec2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohomError {
    #[error("B has mean {mean:e}; no continuous solution")]
    ObstructedMean { mean: f64 },
    #[error("sample count {0} is not a power of two")]
    BadSampleCount(usize),
    #[error(transparent)]
    Foliation(#[from] FolError),
}

/// Mean tolerance below which B is treated as a coboundary candidate.
pub const TOL_MEAN: f64 = 1e-8;

/// Coefficients c_k for -K <= k <= K, stored at index k + K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierSeries {
    pub k_max: usize,
    pub coeffs: Vec<Complex64>,
}

impl FourierSeries {
    pub fn zero(k_max: usize) -> Self {
        FourierSeries { k_max, coeffs: vec![Complex64::new(0.0, 0.0); 2 * k_max + 1] }
    }

    pub fn coeff(&self, k: i64) -> Complex64 {
        if k.unsigned_abs() as usize > self.k_max {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[(k + self.k_max as i64) as usize]
    }

    fn set(&mut self, k: i64, v: Complex64) {
        self.coeffs[(k + self.k_max as i64) as usize] = v;
    }

    /// Discrete Fourier coefficients of N equispaced samples on [0, 1), truncated to |k| <= K.
    pub fn from_samples(samples: &[f64], k_max: usize) -> Result<Self, CohomError> {
        let n = samples.len();
        if !n.is_power_of_two() {
            return Err(CohomError::BadSampleCount(n));
        }
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let k_max = k_max.min(n / 2 - 1);
        let mut out = FourierSeries::zero(k_max);
        for k in -(k_max as i64)..=k_max as i64 {
            out.set(k, buf[k.rem_euclid(n as i64) as usize] / n as f64);
        }
        Ok(out)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut s = self.coeff(0).re;
        for k in 1..=self.k_max as i64 {
            let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 * x);
            s += 2.0 * (self.coeff(k) * e).re;
        }
        s
    }

    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        (1..=self.k_max as i64).all(|k| (self.coeff(k) - self.coeff(-k).conj()).norm() <= tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohomSolution {
    pub phi: FourierSeries,
    /// max_{0<|k|<=K} |1 - e^{2 pi i k theta}|^{-1}.
    pub amplification: f64,
}

/// max_{1<=k<=K} |1 - e^{2 pi i k theta}|^{-1}.
pub fn amplification(theta: f64, k_max: usize) -> f64 {
    (1..=k_max)
        .map(|k| 1.0 / (2.0 * (PI * k as f64 * theta).sin().abs()))
        .fold(0.0, f64::max)
}

/// phi_k = B_k / (1 - e^{2 pi i k theta}), phi_0 = 0.
pub fn cohomological_solve(b: &FourierSeries, theta: f64, tol_mean: f64) -> Result<CohomSolution, CohomError> {
    let mean = b.coeff(0).re;
    if mean.abs() >= tol_mean {
        return Err(CohomError::ObstructedMean { mean });
    }
    let mut phi = FourierSeries::zero(b.k_max);
    for k in 1..=b.k_max as i64 {
        for kk in [k, -k] {
            let d = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, 2.0 * PI * kk as f64 * theta);
            phi.set(kk, b.coeff(kk) / d);
        }
    }
    Ok(CohomSolution { phi, amplification: amplification(theta, b.k_max) })
}

/// Samples B on N points and solves.
pub fn cohomological_solve_samples(samples: &[f64], theta: f64, tol_mean: f64) -> Result<CohomSolution, CohomError> {
    let b = FourierSeries::from_samples(samples, samples.len() / 2 - 1)?;
    cohomological_solve(&b, theta, tol_mean)
}

/// max_x |phi(x + theta) - phi(x) + B(x)| over `n` points.
pub fn solution_residual<B: Fn(f64) -> f64>(phi: &FourierSeries, b: B, theta: f64, n: usize) -> f64 {
    (0..n)
        .map(|i| {
            let x = i as f64 / n as f64;
            (phi.eval(x + theta) - phi.eval(x) + b(x)).abs()
        })
        .fold(0.0, f64::max)
}

/// min over 1 <= p <= p_max of p |p theta - q| with q the nearest integer.
pub fn diophantine_constant(theta: f64, p_max: u64) -> f64 {
    diophantine_window(theta, 1, p_max)
}

/// The same minimum over p_min <= p <= p_max; tends to liminf p |p theta - q| as p_min grows.
pub fn diophantine_window(theta: f64, p_min: u64, p_max: u64) -> f64 {
    (p_min.max(1)..=p_max)
        .map(|p| {
            let x = p as f64 * theta;
            p as f64 * (x - x.round()).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseReport {
    pub t: Vec<f64>,
    /// Signed unstable distance from (c, t) to the center leaf through x0.
    pub phi: Vec<f64>,
    /// Unstable length from (c, t) to its first return.
    pub return_length: Vec<f64>,
    /// Central-difference derivative of return_length in t.
    pub b: Vec<f64>,
}

fn arclength_of(leaf: &Leaf, z: Vec2) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for (i, w) in leaf.points.windows(2).enumerate() {
        let d = w[1] - w[0];
        let t = ((z - w[0]).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        let dist = (z - (w[0] + d * t)).norm();
        if dist < best.0 {
            best = (dist, leaf.arclengths[i] + t * (leaf.arclengths[i + 1] - leaf.arclengths[i]));
        }
    }
    best.1
}

/// Weighted length along `leaf` between arclengths s0 and s1 (signed), by Simpson on the polyline.
fn weighted_length(leaf: &Leaf, weight: &dyn Fn(Vec2) -> f64, s0: f64, s1: f64) -> f64 {
    let (lo, hi, sign) = if s1 >= s0 { (s0, s1, 1.0) } else { (s1, s0, -1.0) };
    let n = (((hi - lo) / 0.005).ceil() as usize).max(2) & !1usize;
    let n = n.max(2);
    let h = (hi - lo) / n as f64;
    let mut total = 0.0;
    for i in 0..=n {
        let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        total += c * weight(leaf.point_at(lo + i as f64 * h));
    }
    sign * total * h / 3.0
}

/// Phi_{x0}(c, t) = d^u((c, t), z) with z = F^u(c, t) meet F^c(x0), and the return length d^u(x, R x).
#[allow(clippy::too_many_arguments)]
pub fn transverse_distance_function(
    unstable: &dyn LineField,
    center: &dyn LineField,
    weight: &dyn Fn(Vec2) -> f64,
    circle: &TransverseCircle,
    x0: Vec2,
    ts: &[f64],
    reach: f64,
    step: f64,
) -> Result<TransverseReport, CohomError> {
    let lc = integrate_leaf_both(center, Sigma::Center, x0, reach, step)?;
    let mut phi = Vec::with_capacity(ts.len());
    let mut return_length = Vec::with_capacity(ts.len());
    let length_at = |t: f64| -> Result<(f64, f64), CohomError> {
        let x = Vec2::new(circle.c, t);
        let lu = integrate_leaf_both(unstable, Sigma::Unstable, x, reach, step)?;
        let z = global_product_intersection(&lu, &lc)?;
        let sz = arclength_of(&lu, z);
        let p = weighted_length(&lu, weight, reach, sz);
        let r = poincare_return(unstable, circle, t, step)?;
        let y = Vec2::new(circle.c + 1.0, t + r.displacement);
        let sy = arclength_of(&lu, y);
        let d = weighted_length(&lu, weight, reach, sy);
        Ok((p, d))
    };
    for &t in ts {
        let (p, d) = length_at(t)?;
        phi.push(p);
        return_length.push(d);
    }
    let dt = 1e-4;
    let mut b = Vec::with_capacity(ts.len());
    for &t in ts {
        let (_, dp) = length_at(t + dt)?;
        let (_, dm) = length_at(t - dt)?;
        b.push((dp - dm) / (2.0 * dt));
    }
    Ok(TransverseReport { t: ts.to_vec(), phi, return_length, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundles::ConstantLine;
    use crate::families;

    fn theta() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    #[test]
    fn fft_of_cosine() {
        let n = 64;
        let s: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / n as f64).cos()).collect();
        let fs = FourierSeries::from_samples(&s, 8).unwrap();
        assert!((fs.coeff(1).re - 0.5).abs() < 1e-14 && (fs.coeff(-1).re - 0.5).abs() < 1e-14);
        assert!(fs.coeff(2).norm() < 1e-14);
        assert!(fs.is_conjugate_symmetric(1e-14));
        assert!((fs.eval(0.3) - (0.6 * PI).cos()).abs() < 1e-13);
        assert!(FourierSeries::from_samples(&[0.0; 6], 2).is_err());
    }

    #[test]
    fn manufactured_coboundary() {
        let th = theta();
        let b = |x: f64| (2.0 * PI * x).cos() - (2.0 * PI * (x + th)).cos();
        let s: Vec<f64> = (0..64).map(|i| b(i as f64 / 64.0)).collect();
        let sol = cohomological_solve_samples(&s, th, TOL_MEAN).unwrap();
        for i in 0..50 {
            let x = i as f64 / 50.0;
            assert!((sol.phi.eval(x) - (2.0 * PI * x).cos()).abs() < 1e-10);
        }
        assert!(solution_residual(&sol.phi, b, th, 100) < 1e-10);
    }

    #[test]
    fn zero_and_obstructed() {
        let sol = cohomological_solve_samples(&[0.0; 32], theta(), TOL_MEAN).unwrap();
        assert!(sol.phi.coeffs.iter().all(|c| c.norm() == 0.0));
        assert!(matches!(
            cohomological_solve_samples(&[1.0; 32], theta(), TOL_MEAN),
            Err(CohomError::ObstructedMean { .. })
        ));
    }

    #[test]
    fn golden_diophantine_constant() {
        let c10 = diophantine_constant(theta(), 10);
        let c1000 = diophantine_constant(theta(), 1000);
        assert!(c10 >= c1000 && c1000 > 0.0);
        // p = 1 already gives 1 - theta = theta^2
        assert!((c1000 - theta() * theta()).abs() < 1e-15);
        // Fibonacci denominators give (1 -+ theta^{2n}) / sqrt 5
        let tail = diophantine_window(theta(), 1000, 100_000);
        assert!((tail - 1.0 / 5f64.sqrt()).abs() < 1e-7);
        assert!(diophantine_window(theta(), 100, 100_000) <= diophantine_window(theta(), 1000, 100_000));
    }

    #[test]
    fn linear_transverse_distance_is_affine() {
        let f = families::linear();
        let e = f.eigen().clone();
        let circle = TransverseCircle::new(0.0, &e).unwrap();
        let ts: Vec<f64> = (0..5).map(|i| 0.1 + 0.2 * i as f64).collect();
        let one = |_: Vec2| 1.0;
        let (u, c) = (ConstantLine(e.e_u), ConstantLine(e.e_c));
        let r0 = transverse_distance_function(&u, &c, &one, &circle, Vec2::new(0.3, 0.2), &ts, 3.0, 0.01).unwrap();
        let r1 = transverse_distance_function(&u, &c, &one, &circle, Vec2::new(0.7, 0.6), &ts, 3.0, 0.01).unwrap();
        for w in r0.phi.windows(3) {
            assert!((w[0] - 2.0 * w[1] + w[2]).abs() < 1e-8);
        }
        for i in 1..ts.len() {
            let d0 = r0.phi[i] - r0.phi[0];
            let d1 = r1.phi[i] - r1.phi[0];
            assert!((d0 - d1).abs() < 1e-8);
        }
        assert!(r0.b.iter().all(|b| b.abs() < 1e-6));
    }
}
