//! Leaves of the invariant foliations, their geometry in the lift, and the unstable return map.

use crate::bundles::{LineField, Sigma};
use crate::endo::TorusEndomorphism;
use crate::lattice::{line_angle, wrap1, EigenData, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FolError {
    #[error("direction field turns by {angle:.3} rad within one step near {at:?}")]
    StepRejected { angle: f64, at: [f64; 2] },
    #[error("leaves do not intersect")]
    NoIntersection,
    #[error("leaves intersect {count} times")]
    MultipleIntersections { count: usize },
    #[error("circle x1 = c is not transverse to the eigendirections")]
    NotTransverse,
}

/// Largest direction change tolerated inside one integration step.
pub const MAX_TURN: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub points: Vec<Vec2>,
    pub arclengths: Vec<f64>,
    pub sigma: Sigma,
    pub orientation: i8,
}

impl Leaf {
    pub fn length(&self) -> f64 {
        *self.arclengths.last().unwrap_or(&0.0)
    }

    /// Linear interpolation along the polyline at arclength s.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let i = match self.arclengths.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => return self.points[i],
            Err(i) => i.max(1),
        };
        let (s0, s1) = (self.arclengths[i - 1], self.arclengths[i]);
        let t = (s - s0) / (s1 - s0);
        self.points[i - 1] * (1.0 - t) + self.points[i] * t
    }

    /// Distance from x to the polyline.
    pub fn distance_to(&self, x: Vec2) -> f64 {
        self.points
            .windows(2)
            .map(|w| point_segment_distance(x, w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn point_segment_distance(x: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let l2 = d.norm_squared();
    if l2 == 0.0 {
        return (x - a).norm();
    }
    let t = ((x - a).dot(&d) / l2).clamp(0.0, 1.0);
    (x - (a + d * t)).norm()
}

pub(crate) fn oriented(field: &dyn LineField, x: Vec2, prev: Vec2) -> Vec2 {
    let d = field.direction(x);
    if d.dot(&prev) < 0.0 {
        -d
    } else {
        d
    }
}

/// One classical RK4 step of length h; returns (new point, exit direction, turning angle).
pub(crate) fn rk4_step(field: &dyn LineField, x: Vec2, dir: Vec2, h: f64) -> (Vec2, Vec2, f64) {
    let k1 = oriented(field, x, dir);
    let k2 = oriented(field, x + k1 * (0.5 * h), k1);
    let k3 = oriented(field, x + k2 * (0.5 * h), k2);
    let k4 = oriented(field, x + k3 * h, k3);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let turn = line_angle(k1, k4);
    (next, k4, if turn.is_nan() { f64::INFINITY } else { turn })
}

/// Integrates the oriented unit field from x0 for arclength `length`.
pub fn integrate_leaf(
    field: &dyn LineField,
    sigma: Sigma,
    x0: Vec2,
    length: f64,
    step: f64,
    orientation: i8,
) -> Result<Leaf, FolError> {
    let steps = (length / step).ceil().max(1.0) as usize;
    let h = length / steps as f64;
    let mut dir = field.direction(x0) * orientation as f64;
    let mut x = x0;
    let mut points = Vec::with_capacity(steps + 1);
    let mut arclengths = Vec::with_capacity(steps + 1);
    points.push(x);
    arclengths.push(0.0);
    for k in 1..=steps {
        let (next, d, turn) = rk4_step(field, x, dir, h);
        if turn > MAX_TURN {
            return Err(FolError::StepRejected { angle: turn, at: [x.x, x.y] });
        }
        x = next;
        dir = d;
        points.push(x);
        arclengths.push(k as f64 * h);
    }
    Ok(Leaf { points, arclengths, sigma, orientation })
}

/// Leaf through x0 extending `half` in both directions, ordered along the positive orientation.
pub fn integrate_leaf_both(
    field: &dyn LineField,
    sigma: Sigma,
    x0: Vec2,
    half: f64,
    step: f64,
) -> Result<Leaf, FolError> {
    let fwd = integrate_leaf(field, sigma, x0, half, step, 1)?;
    let back = integrate_leaf(field, sigma, x0, half, step, -1)?;
    let mut points: Vec<Vec2> = back.points.iter().rev().copied().collect();
    points.extend_from_slice(&fwd.points[1..]);
    let mut arclengths: Vec<f64> = back.arclengths.iter().rev().map(|s| half - s).collect();
    arclengths.extend(fwd.arclengths[1..].iter().map(|s| half + s));
    Ok(Leaf { points, arclengths, sigma, orientation: 1 })
}

/// Sup distance of the leaf from its least-squares translate of the line along `direction`.
pub fn linear_shadow_distance(leaf: &Leaf, direction: Vec2) -> f64 {
    let d = direction.normalize();
    let normal = Vec2::new(-d.y, d.x);
    let offsets: Vec<f64> = leaf.points.iter().map(|p| p.dot(&normal)).collect();
    let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
    offsets.iter().map(|o| (o - mean).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiIsometry {
    pub a: f64,
    pub b: f64,
}

/// Envelope fit d_F <= a |x - y| + b: a is the largest ratio over pairs at distance >= 1, b the remaining offset.
pub fn quasi_isometry_constants(leaves: &[Leaf]) -> QuasiIsometry {
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for leaf in leaves {
        let stride = (leaf.points.len() / 400).max(1);
        let idx: Vec<usize> = (0..leaf.points.len()).step_by(stride).collect();
        for (ii, &i) in idx.iter().enumerate() {
            for &j in &idx[ii + 1..] {
                let df = leaf.arclengths[j] - leaf.arclengths[i];
                let d = (leaf.points[j] - leaf.points[i]).norm();
                pairs.push((d, df));
            }
        }
    }
    let a = pairs
        .iter()
        .filter(|p| p.0 >= 1.0)
        .map(|p| p.1 / p.0)
        .fold(1.0, f64::max);
    let b = pairs.iter().map(|p| p.1 - a * p.0).fold(0.0, f64::max);
    QuasiIsometry { a, b }
}

fn segment_intersection(p: Vec2, p2: Vec2, q: Vec2, q2: Vec2) -> Option<Vec2> {
    let r = p2 - p;
    let s = q2 - q;
    let denom = r.x * s.y - r.y * s.x;
    if denom == 0.0 {
        return None;
    }
    let qp = q - p;
    let t = (qp.x * s.y - qp.y * s.x) / denom;
    let u = (qp.x * r.y - qp.y * r.x) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then(|| p + r * t)
}

/// (x_min, x_max, y_min, y_max) of a segment.
type BBox = (f64, f64, f64, f64);

/// The unique crossing of two leaves; every segment pair is scanned to establish uniqueness.
pub fn global_product_intersection(leaf_u: &Leaf, leaf_c: &Leaf) -> Result<Vec2, FolError> {
    let bbox = |a: Vec2, b: Vec2| (a.x.min(b.x), a.x.max(b.x), a.y.min(b.y), a.y.max(b.y));
    let segs_c: Vec<(Vec2, Vec2, BBox)> = leaf_c
        .points
        .windows(2)
        .map(|w| (w[0], w[1], bbox(w[0], w[1])))
        .collect();
    let found: Vec<Vec2> = leaf_u
        .points
        .par_windows(2)
        .flat_map_iter(|w| {
            let bu = bbox(w[0], w[1]);
            segs_c
                .iter()
                .filter(move |(_, _, bc)| bu.0 <= bc.1 && bc.0 <= bu.1 && bu.2 <= bc.3 && bc.2 <= bu.3)
                .filter_map(move |(q, q2, _)| segment_intersection(w[0], w[1], *q, *q2))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut distinct: Vec<Vec2> = Vec::new();
    for x in found {
        if distinct.iter().all(|y| (x - y).norm() > 1e-9) {
            distinct.push(x);
        }
    }
    match distinct.len() {
        0 => Err(FolError::NoIntersection),
        1 => Ok(distinct[0]),
        count => Err(FolError::MultipleIntersections { count }),
    }
}

/// The vertical circle x_1 = c, parameterized by x_2 in [0,1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseCircle {
    pub c: f64,
}

impl TransverseCircle {
    pub fn new(c: f64, eigen: &EigenData) -> Result<Self, FolError> {
        if eigen.e_u.x.abs() < 0.1 || eigen.e_c.x.abs() < 0.1 {
            return Err(FolError::NotTransverse);
        }
        Ok(TransverseCircle { c })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnPoint {
    pub t: f64,
    pub level: i64,
    /// Lifted displacement x_2(return) - t.
    pub displacement: f64,
}

/// First return of the leaf through (c, t), followed with increasing x_1, to x_1 = c + 1.
pub fn poincare_return(
    field: &dyn LineField,
    circle: &TransverseCircle,
    t: f64,
    step: f64,
) -> Result<ReturnPoint, FolError> {
    let target = circle.c + 1.0;
    let mut x = Vec2::new(circle.c, t);
    let d0 = field.direction(x);
    let mut dir = if d0.x < 0.0 { -d0 } else { d0 };
    let max_steps = (1000.0 / step) as usize;
    for _ in 0..max_steps {
        let (next, d, turn) = rk4_step(field, x, dir, step);
        if turn > MAX_TURN {
            return Err(FolError::StepRejected { angle: turn, at: [x.x, x.y] });
        }
        if next.x >= target {
            let (mut lo, mut hi) = (0.0, step);
            let mut y = next;
            for _ in 0..60 {
                let h = 0.5 * (lo + hi);
                let (z, _, _) = rk4_step(field, x, dir, h);
                if z.x >= target {
                    hi = h;
                    y = z;
                } else {
                    lo = h;
                }
            }
            let displacement = y.y - t;
            return Ok(ReturnPoint { t: wrap1(y.y), level: y.y.floor() as i64, displacement });
        }
        x = next;
        dir = d;
    }
    Err(FolError::StepRejected { angle: 0.0, at: [x.x, x.y] })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    pub theta_hat: f64,
    pub iterations: usize,
    pub error_bound: f64,
    pub equidistribution_gap: f64,
    pub seed_estimates: Vec<f64>,
}

/// Birkhoff average of lifted displacements of a circle map from `seeds` evenly spaced starts.
pub fn rotation_number<R>(r: R, n_iters: usize, seeds: usize) -> RotationEstimate
where
    R: Fn(f64) -> f64 + Sync,
{
    let runs: Vec<(f64, Vec<f64>)> = (0..seeds.max(1))
        .into_par_iter()
        .map(|k| {
            let mut t = k as f64 / seeds.max(1) as f64;
            let mut total = 0.0;
            let mut orbit = if k == 0 { Vec::with_capacity(n_iters) } else { Vec::new() };
            for _ in 0..n_iters {
                let d = r(t);
                total += d;
                t = wrap1(t + d);
                if k == 0 {
                    orbit.push(t);
                }
            }
            (total / n_iters as f64, orbit)
        })
        .collect();
    let estimates: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let lo = estimates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let mut orbit = runs.into_iter().next().map(|r| r.1).unwrap_or_default();
    orbit.sort_by(f64::total_cmp);
    let mut gap = if orbit.is_empty() { 1.0 } else { orbit[0] + 1.0 - orbit[orbit.len() - 1] };
    for w in orbit.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    RotationEstimate {
        theta_hat: wrap1(mean),
        iterations: n_iters,
        error_bound: (hi - lo) + 1.0 / n_iters as f64,
        equidistribution_gap: gap,
        seed_estimates: estimates,
    }
}

/// Whether t -> t + d(t) is increasing on the sample grid.
pub fn return_map_monotone<R: Fn(f64) -> f64>(r: R, samples: usize) -> bool {
    let lifted: Vec<f64> = (0..=samples)
        .map(|i| {
            let t = i as f64 / samples as f64;
            t + r(t)
        })
        .collect();
    lifted.windows(2).all(|w| w[1] > w[0])
}

/// Searches for R^q(t) = t + p (mod tolerance) with q <= q_max from the sample starts.
pub fn periodic_scan<R: Fn(f64) -> f64>(r: R, samples: usize, q_max: usize, tol: f64) -> Option<(f64, usize)> {
    for i in 0..samples {
        let t0 = i as f64 / samples as f64;
        let mut lifted = t0;
        for q in 1..=q_max {
            lifted += r(wrap1(lifted));
            let frac = lifted - t0 - (lifted - t0).round();
            if frac.abs() < tol {
                return Some((t0, q));
            }
        }
    }
    None
}

/// Sup distance of the f~-image of a leaf from the leaf recomputed through f~(x0).
pub fn leaf_invariance_error(
    f: &TorusEndomorphism,
    field: &dyn LineField,
    leaf: &Leaf,
    step: f64,
) -> Result<f64, FolError> {
    let x0 = leaf.points[0];
    let image: Vec<Vec2> = leaf.points.iter().map(|&x| f.apply_lift(x)).collect();
    let mut image_len = 0.0;
    for w in image.windows(2) {
        image_len += (w[1] - w[0]).norm();
    }
    let fx0 = f.apply_lift(x0);
    let first = f.jacobian(x0) * field.direction(x0) * leaf.orientation as f64;
    let probe = field.direction(fx0);
    let orientation = if probe.dot(&first) >= 0.0 { 1 } else { -1 };
    let fresh = integrate_leaf(field, leaf.sigma, fx0, image_len * 1.05 + step, step, orientation)?;
    Ok(image.par_iter().map(|&y| fresh.distance_to(y)).collect::<Vec<_>>().into_iter().fold(0.0, f64::max))
}
