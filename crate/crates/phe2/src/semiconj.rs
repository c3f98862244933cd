//! The semi-conjugacy h~ = id + p with h~ f~ = A h~, its fibers, and the conjugacy verdict.

use crate::bundles::LineField;
use crate::endo::TorusEndomorphism;
use crate::field::{node, PeriodicField};
use crate::lattice::{min_displacement, EigenData, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemiError {
    #[error("update ratio >= 1 for 5 consecutive sweeps (last ratio {ratio})")]
    NoContraction { ratio: f64 },
    #[error("no convergence after {iterations} sweeps (last update {update:e})")]
    NotConverged { iterations: usize, update: f64 },
    #[error("no grid point within 2/M of the target at M = {resolution}")]
    EmptyFiber { resolution: usize },
}

#[derive(Clone, Debug)]
pub struct SemiConjugacy {
    pub p: PeriodicField<Vec2>,
    pub tol: f64,
    pub iterations: usize,
    /// Largest update ratio over the sweeps.
    pub kappa: f64,
    pub update_norms: Vec<f64>,
    /// Sup-norm of h f - A h on the verification grid.
    pub defect: f64,
    pub verify_resolution: usize,
    /// tol (1 + ||A||) / (1 - kappa): the part of the defect owed to stopping early.
    pub contraction_tail: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiConjMeta {
    pub resolution: usize,
    pub tol: f64,
    pub iterations: usize,
    pub kappa: f64,
    pub update_ratios: Vec<f64>,
    pub defect: f64,
    pub verify_resolution: usize,
    pub contraction_tail: f64,
    pub interpolation_part: f64,
}

impl SemiConjugacy {
    pub fn eval_h(&self, x: Vec2) -> Vec2 {
        x + self.p.eval(x)
    }

    pub fn update_ratios(&self) -> Vec<f64> {
        self.update_norms
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }

    pub fn meta(&self) -> SemiConjMeta {
        SemiConjMeta {
            resolution: self.p.n(),
            tol: self.tol,
            iterations: self.iterations,
            kappa: self.kappa,
            update_ratios: self.update_ratios(),
            defect: self.defect,
            verify_resolution: self.verify_resolution,
            contraction_tail: self.contraction_tail,
            interpolation_part: (self.defect - self.contraction_tail).max(0.0),
        }
    }

    /// Wraps an externally supplied displacement field; the defect is recomputed.
    pub fn from_field(f: &TorusEndomorphism, p: PeriodicField<Vec2>, tol: f64) -> Self {
        let verify = 2 * p.n();
        let defect = measure_defect(f, &p, verify);
        SemiConjugacy {
            p,
            tol,
            // not produced by iteration: no contraction data
            iterations: 0,
            kappa: 0.0,
            update_norms: Vec::new(),
            defect,
            verify_resolution: verify,
            contraction_tail: 0.0,
        }
    }
}

/// Residual h~(f~x) - A h~(x) = eps g(x) + p(f~x) - A p(x).
pub fn residual(f: &TorusEndomorphism, p: &PeriodicField<Vec2>, x: Vec2) -> Vec2 {
    f.displacement(x) + p.eval(f.apply_lift(x)) - f.a() * p.eval(x)
}

/// Sup-norm of the residual on the m x m grid, evaluated directly from f and p.
pub fn measure_defect(f: &TorusEndomorphism, p: &PeriodicField<Vec2>, m: usize) -> f64 {
    (0..m * m)
        .into_par_iter()
        .map(|idx| residual(f, p, node(m, idx / m, idx % m)).norm())
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

pub fn solve_semiconjugacy(
    f: &TorusEndomorphism,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<SemiConjugacy, SemiError> {
    solve_semiconjugacy_from(f, PeriodicField::constant(n, Vec2::zeros()), tol, max_iter)
}

/// Iterates p <- A^{-1} (p o f + eps g) on the grid of `init` until the sup-norm update drops below tol.
pub fn solve_semiconjugacy_from(
    f: &TorusEndomorphism,
    init: PeriodicField<Vec2>,
    tol: f64,
    max_iter: usize,
) -> Result<SemiConjugacy, SemiError> {
    let n = init.n();
    let a_inv = f.a_inv();
    let nodes: Vec<(Vec2, Vec2)> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let x = node(n, idx / n, idx % n);
            (f.apply_lift(x), f.displacement(x))
        })
        .collect();
    let mut p = init;
    let mut norms = Vec::new();
    let mut bad_streak = 0;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next: Vec<Vec2> =
            nodes.par_iter().map(|&(fx, g)| a_inv * (p.eval(fx) + g)).collect();
        let next = PeriodicField::from_values(n, next).expect("grid size");
        let update = next.max_diff(&p);
        p = next;
        if let Some(&prev) = norms.last() {
            if prev > 0.0 && update / prev >= 1.0 {
                bad_streak += 1;
                if bad_streak >= 5 {
                    return Err(SemiError::NoContraction { ratio: update / prev });
                }
            } else {
                bad_streak = 0;
            }
        }
        norms.push(update);
        if update < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(SemiError::NotConverged { iterations, update });
        }
    }
    let kappa = norms
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    let verify = 2 * n;
    let defect = measure_defect(f, &p, verify);
    let a_norm = f.a().norm();
    let contraction_tail = if kappa < 1.0 { tol * (1.0 + a_norm) / (1.0 - kappa) } else { f64::INFINITY };
    Ok(SemiConjugacy {
        p,
        tol,
        iterations,
        kappa,
        update_norms: norms,
        defect,
        verify_resolution: verify,
        contraction_tail,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberReport {
    pub target: [f64; 2],
    pub resolution: usize,
    pub diameter: f64,
    pub direction_alignment: f64,
    pub samples: usize,
    pub roots: usize,
}

fn fiber_residual(h: &SemiConjugacy, x: Vec2, y: Vec2) -> Vec2 {
    min_displacement(y, h.eval_h(x))
}

fn refine_root(h: &SemiConjugacy, x0: Vec2, y: Vec2, m: usize) -> Option<Vec2> {
    let fd = 0.25 / m as f64;
    let mut x = x0;
    let mut r = fiber_residual(h, x, y);
    for _ in 0..40 {
        if r.norm() < 1e-3 / m as f64 {
            break;
        }
        let jx = (fiber_residual(h, x + Vec2::new(fd, 0.0), y) - fiber_residual(h, x - Vec2::new(fd, 0.0), y)) / (2.0 * fd);
        let jy = (fiber_residual(h, x + Vec2::new(0.0, fd), y) - fiber_residual(h, x - Vec2::new(0.0, fd), y)) / (2.0 * fd);
        let j = crate::lattice::Mat2::from_columns(&[jx, jy]);
        // Levenberg-Marquardt step; the damping keeps the step bounded where h is flat.
        let jt = j.transpose();
        let lambda = 1e-8 + 1e-3 * (jt * j).trace();
        let Some(inv) = (jt * j + crate::lattice::Mat2::identity() * lambda).try_inverse() else {
            break;
        };
        let step = inv * (jt * r);
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-4 {
            let xn = x - step * t;
            let rn = fiber_residual(h, xn, y);
            if rn.norm() < r.norm() {
                x = xn;
                r = rn;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (r.norm() <= 1.0 / m as f64).then_some(x)
}

/// Walks from a root along +-E_c while |h(x) - y| <= 1/M and returns the boundary crossing.
fn march(h: &SemiConjugacy, root: Vec2, y: Vec2, m: usize, center: &dyn LineField, sign: f64) -> Vec2 {
    let radius = 1.0 / m as f64;
    let step = 0.25 / m as f64;
    let inside = |x: Vec2| fiber_residual(h, x, y).norm() <= radius;
    let mut x = root;
    let mut dir = center.direction(x) * sign;
    for _ in 0..(8 * m) {
        let mid = x + dir * (0.5 * step);
        let mut d = center.direction(mid);
        if d.dot(&dir) < 0.0 {
            d = -d;
        }
        let next = x + d * step;
        if !inside(next) {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..40 {
                let t = 0.5 * (lo + hi);
                if inside(x + d * (step * t)) {
                    lo = t;
                } else {
                    hi = t;
                }
            }
            return x + d * (step * lo);
        }
        x = next;
        dir = d;
    }
    x
}

/// Probes h^{-1}(y): grid cells that can contain a root, refined to roots and extended along E_c.
pub fn fiber_diameter(
    h: &SemiConjugacy,
    y: Vec2,
    m: usize,
    center: &dyn LineField,
) -> Result<FiberReport, SemiError> {
    let res: Vec<Vec2> = (0..m * m)
        .into_par_iter()
        .map(|idx| fiber_residual(h, node(m, idx / m, idx % m), y))
        .collect();
    // a bilinear cell image lies in the hull of its corner values, so a cell can hold a root
    // only if 0 is in the (slightly widened) box of its corner residuals
    let margin = 1.0 / m as f64;
    let mut cands: Vec<(f64, Vec2)> = (0..m * m)
        .into_par_iter()
        .filter_map(|idx| {
            let (i, j) = (idx / m, idx % m);
            let corners = [(i, j), ((i + 1) % m, j), (i, (j + 1) % m), ((i + 1) % m, (j + 1) % m)];
            let rs = corners.map(|(a, b)| res[a * m + b]);
            let lo = rs.iter().fold(Vec2::repeat(f64::INFINITY), |acc, r| acc.inf(r));
            let hi = rs.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |acc, r| acc.sup(r));
            let inside = lo.x <= margin && hi.x >= -margin && lo.y <= margin && hi.y >= -margin;
            inside.then(|| {
                let k = (0..4).min_by(|&a, &b| rs[a].norm().total_cmp(&rs[b].norm())).unwrap();
                (rs[k].norm(), node(m, corners[k].0, corners[k].1))
            })
        })
        .collect();
    if cands.is_empty() {
        return Err(SemiError::EmptyFiber { resolution: m });
    }
    let samples = cands.len();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.x.total_cmp(&b.1.x)).then(a.1.y.total_cmp(&b.1.y)));
    let mut picks: Vec<Vec2> = Vec::new();
    for &(_, x) in &cands {
        if picks.len() >= 32 {
            break;
        }
        if picks.iter().all(|&q| min_displacement(q, x).norm() > 4.0 / m as f64) {
            picks.push(x);
        }
    }
    let roots: Vec<Vec2> = picks.iter().filter_map(|&x| refine_root(h, x, y, m)).collect();
    let roots = if roots.is_empty() { vec![cands[0].1] } else { roots };
    let anchor = roots[0];
    let mut pts: Vec<Vec2> = Vec::new();
    for &r in &roots {
        let r = anchor + min_displacement(anchor, r);
        pts.push(r);
        pts.push(march(h, r, y, m, center, 1.0));
        pts.push(march(h, r, y, m, center, -1.0));
    }
    let mut best = (0.0, 0usize, 0usize);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = (pts[i] - pts[j]).norm();
            if d > best.0 {
                best = (d, i, j);
            }
        }
    }
    let (diameter, i, j) = best;
    let direction_alignment = if diameter > 0.0 {
        let chord = (pts[j] - pts[i]) / diameter;
        let mid = 0.5 * (pts[i] + pts[j]);
        chord.dot(&center.direction(mid)).abs()
    } else {
        1.0
    };
    Ok(FiberReport {
        target: [y.x, y.y],
        resolution: m,
        diameter,
        direction_alignment,
        samples,
        roots: roots.len(),
    })
}

/// Checks that the e_u-coordinate of h strictly increases along each polyline (oriented along E^u).
pub fn monotone_along(h: &SemiConjugacy, eigen: &EigenData, leaves: &[Vec<Vec2>]) -> (bool, f64) {
    let mut min_step = f64::INFINITY;
    for leaf in leaves {
        let us: Vec<f64> = leaf.iter().map(|&x| eigen.eigen_coords(h.eval_h(x)).0).collect();
        for w in us.windows(2) {
            min_step = min_step.min(w[1] - w[0]);
        }
    }
    (min_step > 0.0, min_step)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictThresholds {
    pub fiber_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub conjugate: bool,
    pub area_ok: bool,
    pub max_fiber_diameter: f64,
    pub fiber_ok: bool,
    pub monotone_ok: bool,
    pub min_monotone_step: f64,
    pub fibers: Vec<FiberReport>,
    /// Set when the area gate and the fiber evidence disagree.
    pub alarm: Option<String>,
}

pub fn conjugacy_verdict(
    area_ok: bool,
    fibers: Vec<FiberReport>,
    monotone: (bool, f64),
    thresholds: &VerdictThresholds,
) -> Verdict {
    let max_fiber_diameter = fibers.iter().map(|r| r.diameter).fold(0.0, f64::max);
    let fiber_ok = max_fiber_diameter < thresholds.fiber_threshold;
    let alarm = (area_ok != fiber_ok).then(|| {
        format!(
            "area gate says {} but max fiber diameter is {:.3e} (threshold {:.3e})",
            if area_ok { "area expanding" } else { "not area expanding" },
            max_fiber_diameter,
            thresholds.fiber_threshold
        )
    });
    Verdict {
        conjugate: area_ok && fiber_ok && monotone.0,
        area_ok,
        max_fiber_diameter,
        fiber_ok,
        monotone_ok: monotone.0,
        min_monotone_step: monotone.1,
        fibers,
        alarm,
    }
}
