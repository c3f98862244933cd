//! Periodic orbits, their center/unstable multipliers and the periodic-data rigidity check.

use crate::bundles::LineField;
use crate::endo::TorusEndomorphism;
use crate::hyperbolic::HyperbolicityCert;
use crate::lattice::{wrap, LatticeMatrix, Mat2, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub points: Vec<Vec2>,
    pub period: usize,
    /// f~^n(points[0]) = points[0] + m.
    pub m: [i64; 2],
    pub lambda_c: f64,
    pub lambda_u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountCheck {
    pub n: usize,
    pub found: usize,
    pub expected: Option<i64>,
}

impl CountCheck {
    pub fn matches(&self) -> bool {
        self.expected == Some(self.found as i64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicReport {
    pub orbits: Vec<PeriodicOrbit>,
    /// Distinct fixed points of f^n against |det(A^n - I)|.
    pub counts: Vec<CountCheck>,
    pub seed_failures: usize,
}

/// f~^n(x) - x reduced to the nearest lattice translate, and D(f^n)(x) - I.
fn period_residual(f: &TorusEndomorphism, x: Vec2, n: usize) -> (Vec2, Mat2, Vec2) {
    let mut y = x;
    let mut j = Mat2::identity();
    for _ in 0..n {
        j = f.jacobian(y) * j;
        y = f.apply_lift(y);
    }
    let d = y - x;
    let m = d.map(f64::round);
    (d - m, j - Mat2::identity(), m)
}

/// Newton on f~^n(x) - x - m = 0 with the lattice translate m held fixed.
fn newton_periodic(f: &TorusEndomorphism, seed: Vec2, m: Vec2, n: usize) -> Option<Vec2> {
    let residual = |x: Vec2| {
        let (r, jm, k) = period_residual(f, x, n);
        (r + k - m, jm)
    };
    // f~^n(x) has size ~|m|, so roundoff in the residual scales with it
    let tol = 1e-12 * (1.0 + m.norm());
    let mut x = seed;
    for _ in 0..60 {
        let (r, jm) = residual(x);
        if r.norm() < tol {
            return Some(x);
        }
        x -= jm.try_inverse()? * r;
    }
    (residual(x).0.norm() < 10.0 * tol).then_some(x)
}

/// The lift with f~^n(x) = x + m. Newton from the linear seed first; if that fails, iterate
/// x <- f~^{-n}(x + m), which contracts along both directions, and polish with Newton.
/// Distinct cosets of m give distinct points on the torus.
fn solve_periodic(f: &TorusEndomorphism, b_inv: &Mat2, m: Vec2, n: usize) -> Option<Vec2> {
    let seed = b_inv * m;
    if let Some(x) = newton_periodic(f, seed, m, n) {
        return Some(wrap(x));
    }
    let mut x = seed;
    for _ in 0..200 {
        let mut y = x + m;
        for _ in 0..n {
            y = f.lift_inverse(y).ok()?;
        }
        let moved = (y - x).norm();
        x = y;
        if moved < 1e-9 {
            break;
        }
    }
    newton_periodic(f, x, m, n).map(wrap)
}

fn key(x: Vec2) -> (i64, i64) {
    let snap = |t: f64| {
        let k = (t * 1e8).round() as i64;
        if k >= 100_000_000 {
            0
        } else {
            k
        }
    };
    (snap(x.x), snap(x.y))
}

fn minimal_period(f: &TorusEndomorphism, x: Vec2, n: usize) -> usize {
    (1..=n)
        .filter(|d| n.is_multiple_of(*d))
        .find(|&d| period_residual(f, x, d).0.norm() < 1e-9)
        .unwrap_or(n)
}

/// ||Df|E^c|| averaged geometrically around the orbit; the unstable multiplier from the
/// dominant eigenvalue of D(f^n).
pub fn orbit_multipliers(f: &TorusEndomorphism, points: &[Vec2], center: &dyn LineField) -> (f64, f64) {
    let n = points.len();
    let mut log_c = 0.0;
    let mut jn = Mat2::identity();
    for &x in points {
        let j = f.jacobian(x);
        log_c += (j * center.direction(x)).norm().ln();
        jn = j * jn;
    }
    let tr = jn.trace();
    let det = jn.determinant();
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let mu = if tr >= 0.0 { 0.5 * (tr + disc) } else { 0.5 * (tr - disc) };
    ((log_c / n as f64).exp(), mu.abs().powf(1.0 / n as f64))
}

/// All orbits of period <= p_max, seeded from (A^n - I)^{-1} m over the cosets of (A^n - I) Z^2.
pub fn find_periodic_orbits(f: &TorusEndomorphism, p_max: usize, center: &dyn LineField) -> PeriodicReport {
    let a = f.linear();
    let mut orbits = Vec::new();
    let mut counts = Vec::new();
    let mut seed_failures = 0;
    for n in 1..=p_max {
        let an = a.checked_pow(n as u32);
        let expected = an.map(|m| m.minus_identity().det().abs());
        let Some(b) = an.map(|m| m.minus_identity()) else {
            counts.push(CountCheck { n, found: 0, expected });
            continue;
        };
        let b_inv = match b.to_f64().try_inverse() {
            Some(m) => m,
            None => {
                counts.push(CountCheck { n, found: 0, expected });
                continue;
            }
        };
        let reps = b.coset_representatives();
        let solved: Vec<Option<Vec2>> = reps
            .par_iter()
            .map(|m| solve_periodic(f, &b_inv, Vec2::new(m[0] as f64, m[1] as f64), n))
            .collect();
        seed_failures += solved.iter().filter(|s| s.is_none()).count();
        let mut seen = HashSet::new();
        let mut points: Vec<Vec2> = Vec::new();
        for x in solved.into_iter().flatten() {
            if seen.insert(key(x)) {
                points.push(x);
            }
        }
        counts.push(CountCheck { n, found: points.len(), expected });

        let mut assigned = HashSet::new();
        points.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
        for &x in &points {
            if assigned.contains(&key(x)) || minimal_period(f, x, n) != n {
                continue;
            }
            let mut orbit = vec![x];
            for _ in 1..n {
                orbit.push(f.apply(*orbit.last().unwrap()));
            }
            for y in &orbit {
                assigned.insert(key(*y));
            }
            let (_, _, m) = period_residual(f, x, n);
            let (lambda_c, lambda_u) = orbit_multipliers(f, &orbit, center);
            orbits.push(PeriodicOrbit {
                points: orbit,
                period: n,
                m: [m.x as i64, m.y as i64],
                lambda_c,
                lambda_u,
            });
        }
    }
    PeriodicReport { orbits, counts, seed_failures }
}

/// |det(A^n - I)|, the number of fixed points of A^n on the torus.
pub fn linear_fixed_point_count(a: &LatticeMatrix, n: u32) -> Option<i64> {
    Some(a.checked_pow(n)?.minus_identity().det().abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityCheck {
    pub gate_passed: bool,
    pub max_center_deviation: f64,
    pub max_period: usize,
    pub threshold: f64,
    pub alarm: Option<String>,
}

/// When the hypotheses pass, every center multiplier must equal lambda_c(A).
pub fn periodic_rigidity(
    cert: &HyperbolicityCert,
    orbits: &[PeriodicOrbit],
    lambda_ref: f64,
    specialness_delta: f64,
    threshold: f64,
) -> RigidityCheck {
    let gate_passed = cert.cone_ok
        && cert.area_ok
        && cert.specialness_defect < specialness_delta
        && (cert.ec_constant || cert.c2_flag);
    let max_center_deviation = orbits
        .iter()
        .map(|o| (o.lambda_c - lambda_ref).abs())
        .fold(0.0, f64::max);
    let alarm = (gate_passed && max_center_deviation >= threshold).then(|| {
        format!(
            "center multiplier deviates from lambda_c(A) by {max_center_deviation:.3e} although the hypotheses pass"
        )
    });
    RigidityCheck {
        gate_passed,
        max_center_deviation,
        max_period: orbits.iter().map(|o| o.period).max().unwrap_or(0),
        threshold,
        alarm,
    }
}

/// Lift of the fixed point of f with f~(x0) = x0 (no lattice shift), if A - I is unimodular.
pub fn lifted_fixed_point(f: &TorusEndomorphism) -> Option<Vec2> {
    let b = f.linear().minus_identity();
    let seed = Vec2::zeros();
    let mut x = seed;
    let id = Mat2::identity();
    let solve = |g: &TorusEndomorphism, mut x: Vec2| -> Option<Vec2> {
        for _ in 0..60 {
            let r = g.apply_lift(x) - x;
            if r.norm() < 1e-14 {
                return Some(x);
            }
            x -= (g.jacobian(x) - id).try_inverse()? * r;
        }
        ((g.apply_lift(x) - x).norm() < 1e-12).then_some(x)
    };
    if b.det().abs() != 1 {
        return None;
    }
    if let Some(y) = solve(f, x) {
        return Some(y);
    }
    for s in 1..=8 {
        x = solve(&f.scaled(s as f64 / 8.0), x)?;
    }
    Some(x)
}
