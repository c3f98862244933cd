//! The Livschitz potential psi, the leafwise metric d' = int e^psi, dynamical densities,
//! unstable holonomy, and derivative diagnostics of h along center leaves.

use crate::bundles::{center_direction, orient_like, LineField, PointwiseBundle, Sigma};
use crate::endo::{EndoError, TorusEndomorphism};
use crate::field::node;
use crate::foliation::{global_product_intersection, integrate_leaf, integrate_leaf_both, rk4_step, FolError, MAX_TURN};
use crate::periodic::lifted_fixed_point;
use crate::semiconj::SemiConjugacy;
use crate::lattice::Vec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LivError {
    #[error("backward series does not converge: {reason}")]
    SeriesDiverging { reason: String },
    #[error(transparent)]
    Foliation(#[from] FolError),
    #[error(transparent)]
    Endo(#[from] EndoError),
}

/// Cap on the number of backward steps in any series.
pub const MAX_TERMS: usize = 800;

fn diverging(reason: impl Into<String>) -> LivError {
    LivError::SeriesDiverging { reason: reason.into() }
}

/// Backward lifted orbit z_0 = y, z_i = f~^{-1} z_{i-1}, with ln||Df|E^sigma|| at z_1..z_n.
/// Center directions are pulled back from E^c(y), which is stable under Df^{-1}; unstable
/// directions are pushed forward from deeper along the same branch.
fn backward_logs(
    f: &TorusEndomorphism,
    sigma: Sigma,
    y: Vec2,
    n: usize,
    depth: usize,
) -> Result<(Vec<Vec2>, Vec<f64>), LivError> {
    let extra = if sigma == Sigma::Unstable { depth } else { 0 };
    let mut orbit = Vec::with_capacity(n + extra + 1);
    orbit.push(y);
    for _ in 0..n + extra {
        let z = f.lift_inverse(*orbit.last().unwrap())?;
        orbit.push(z);
    }
    let mut logs = vec![0.0; n + 1];
    match sigma {
        Sigma::Center => {
            let mut v = center_direction(f, y, depth);
            for i in 1..=n {
                let j = f.jacobian(orbit[i]);
                let w = j.try_inverse().ok_or_else(|| diverging("singular Jacobian on the backward orbit"))? * v;
                v = w.normalize();
                logs[i] = (j * v).norm().ln();
            }
        }
        Sigma::Unstable => {
            let mut v = f.eigen().e_u;
            for i in (1..orbit.len()).rev() {
                let j = f.jacobian(orbit[i]);
                if i <= n {
                    logs[i] = (j * v).norm().ln();
                }
                v = orient_like((j * v).normalize(), f.eigen().e_u);
            }
        }
    }
    orbit.truncate(n + 1);
    Ok((orbit, logs))
}

fn reference_lambda(f: &TorusEndomorphism, sigma: Sigma) -> f64 {
    match sigma {
        Sigma::Center => f.eigen().lambda_c.abs(),
        Sigma::Unstable => f.eigen().lambda_u.abs(),
    }
}

/// Smallest singular value of Df on a 64x64 grid; f~^{-1} contracts by its inverse.
fn min_singular_value(f: &TorusEndomorphism) -> f64 {
    let n = 64;
    (0..n * n)
        .map(|k| {
            let j = f.jacobian(node(n, k / n, k % n));
            let ata = j.transpose() * j;
            let (tr, det) = (ata.trace(), ata.determinant());
            (0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt())).max(0.0).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiValue {
    pub value: f64,
    pub terms: usize,
    pub tail_bound: f64,
}

/// psi(y) = -sum_{i>=1} g(f~^{-i} y) with g = ln||Df|E^sigma|| - ln lambda^sigma(A), normalized by psi(x0) = 0
/// at the lifted fixed point x0 that every backward lifted orbit converges to.
pub struct LivschitzPotential<'a> {
    pub f: &'a TorusEndomorphism,
    pub sigma: Sigma,
    pub x0: Vec2,
    pub lambda_ref: f64,
    pub depth: usize,
    /// Contraction rate of f~^{-1}.
    pub kappa: f64,
}

impl<'a> LivschitzPotential<'a> {
    pub fn new(f: &'a TorusEndomorphism, sigma: Sigma, depth: usize) -> Result<Self, LivError> {
        let x0 = lifted_fixed_point(f).ok_or_else(|| diverging("no isolated lifted fixed point"))?;
        let s = min_singular_value(f);
        if s <= 1.0 {
            return Err(diverging(format!("f~^-1 is not a contraction (min singular value {s:.4})")));
        }
        let pot = LivschitzPotential { f, sigma, x0, lambda_ref: reference_lambda(f, sigma), depth, kappa: 1.0 / s };
        let g0 = pot.g(x0);
        if g0.abs() > 1e-9 {
            return Err(diverging(format!(
                "multiplier at the fixed point differs from lambda(A): g(x0) = {g0:.3e}"
            )));
        }
        Ok(pot)
    }

    pub fn bundle(&self) -> PointwiseBundle<'a> {
        PointwiseBundle::new(self.f, self.sigma, self.depth)
    }

    /// ln||Df(x)|E^sigma(x)|| - ln lambda^sigma(A).
    pub fn g(&self, x: Vec2) -> f64 {
        let v = self.bundle().direction(x);
        (self.f.jacobian(x) * v).norm().ln() - self.lambda_ref.ln()
    }

    fn terms_needed(&self, y: Vec2) -> usize {
        let d = (y - self.x0).norm().max(1e-300);
        let n = ((1e-17 / d).ln() / self.kappa.ln()).ceil();
        (n.max(1.0) as usize).min(MAX_TERMS)
    }

    pub fn psi(&self, y: Vec2) -> Result<PsiValue, LivError> {
        let n = self.terms_needed(y);
        let (orbit, logs) = backward_logs(self.f, self.sigma, y, n, self.depth)?;
        let l = self.lambda_ref.ln();
        let value = -logs[1..].iter().map(|v| v - l).sum::<f64>();
        let last = (logs[n] - l).abs();
        let dist = (orbit[n] - self.x0).norm();
        if !value.is_finite() || dist > 1e-6 {
            return Err(diverging(format!("backward orbit of {y:?} stays {dist:.2e} away from x0")));
        }
        let tail_bound = 2.0 * last * self.kappa / (1.0 - self.kappa);
        Ok(PsiValue { value, terms: n, tail_bound })
    }

    /// |g(x) - psi(x) + psi(f~ x)|.
    pub fn cocycle_residual(&self, x: Vec2) -> Result<f64, LivError> {
        let a = self.psi(x)?.value;
        let b = self.psi(self.f.apply_lift(x))?.value;
        Ok((self.g(x) - a + b).abs())
    }

    /// Sum of all the terms' bounds: |psi| <= ln K with K the series bound.
    pub fn series_bound(&self, y: Vec2) -> Result<f64, LivError> {
        let n = self.terms_needed(y);
        let (_, logs) = backward_logs(self.f, self.sigma, y, n, self.depth)?;
        let l = self.lambda_ref.ln();
        Ok(logs[1..].iter().map(|v| (v - l).abs()).sum())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub value: f64,
    pub terms: usize,
    pub tail_bound: f64,
}

/// rho_x(y) = prod_{i>=1} ||Df|E^sigma(f~^{-i} x)|| / ||Df|E^sigma(f~^{-i} y)||.
pub fn dynamical_density(
    f: &TorusEndomorphism,
    sigma: Sigma,
    depth: usize,
    x: Vec2,
    y: Vec2,
) -> Result<Density, LivError> {
    if x == y {
        return Ok(Density { value: 1.0, terms: 0, tail_bound: 0.0 });
    }
    let kappa = 1.0 / min_singular_value(f);
    if kappa >= 1.0 {
        return Err(diverging("f~^-1 is not a contraction"));
    }
    let d = (x - y).norm();
    let n = (((1e-17 / d).ln() / kappa.ln()).ceil().max(1.0) as usize).min(MAX_TERMS);
    let (ox, lx) = backward_logs(f, sigma, x, n, depth)?;
    let (oy, ly) = backward_logs(f, sigma, y, n, depth)?;
    let log_rho: f64 = (1..=n).map(|i| lx[i] - ly[i]).sum();
    let gap = (ox[n] - oy[n]).norm();
    if gap > 1e-6 * d.max(1e-300) && gap > 1e-12 {
        return Err(diverging("backward orbits do not converge together"));
    }
    let tail_bound = 2.0 * (lx[n] - ly[n]).abs() * kappa / (1.0 - kappa);
    Ok(Density { value: log_rho.exp(), terms: n, tail_bound })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnProduct {
    /// F_1, ..., F_n.
    pub values: Vec<f64>,
    /// Median ratio of successive increments |F_{k+1} - F_k| / |F_k - F_{k-1}|.
    pub alpha: f64,
}

/// F_n(y) = prod_{i=1}^n ||Df|E^sigma(f~^{-i} y)|| / lambda^sigma(A): the derivative of the
/// leaf dynamics along the invariant leaf through the fixed point, normalized by lambda.
pub fn fn_product(pot: &LivschitzPotential, y: Vec2, n: usize) -> Result<FnProduct, LivError> {
    let (_, logs) = backward_logs(pot.f, pot.sigma, y, n, pot.depth)?;
    let l = pot.lambda_ref.ln();
    let mut acc = 0.0;
    let values: Vec<f64> = logs[1..]
        .iter()
        .map(|v| {
            acc += v - l;
            acc.exp()
        })
        .collect();
    let mut ratios: Vec<f64> = values
        .windows(3)
        .filter_map(|w| {
            let (d0, d1) = ((w[1] - w[0]).abs(), (w[2] - w[1]).abs());
            (d0 > 1e-14 && d1 > 1e-15).then(|| d1 / d0)
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    let alpha = ratios.get(ratios.len() / 2).copied().unwrap_or(0.0);
    if values.last().is_some_and(|v| !v.is_finite()) {
        return Err(diverging("F_n overflow"));
    }
    Ok(FnProduct { values, alpha })
}

/// A stretch of center leaf from `start` to the foot of a target point, kept as RK4 steps so
/// intermediate points are recovered to integrator accuracy.
#[derive(Clone, Debug)]
pub struct LeafPath {
    steps: Vec<(Vec2, Vec2, f64)>,
    pub start: Vec2,
    pub end: Vec2,
    pub length: f64,
    /// Distance from the path's end to the target.
    pub miss: f64,
}

impl LeafPath {
    pub fn point_at(&self, field: &dyn LineField, s: f64) -> Vec2 {
        let mut s = s.clamp(0.0, self.length);
        for &(x, d, h) in &self.steps {
            if s <= h {
                return rk4_step(field, x, d, s).0;
            }
            s -= h;
        }
        self.end
    }

    /// Gauss-Legendre (4 nodes per step) integral of w along the path.
    pub fn integrate<W: Fn(Vec2) -> Result<f64, LivError>>(
        &self,
        field: &dyn LineField,
        w: W,
    ) -> Result<f64, LivError> {
        let mut total = 0.0;
        for &(x, d, h) in &self.steps {
            total += gauss_legendre(h, |s| w(rk4_step(field, x, d, s).0))?;
        }
        Ok(total)
    }

    fn integrate_to<W: Fn(Vec2) -> Result<f64, LivError>>(
        &self,
        field: &dyn LineField,
        w: &W,
        s_end: f64,
    ) -> Result<f64, LivError> {
        let mut total = 0.0;
        let mut rest = s_end;
        for &(x, d, h) in &self.steps {
            let len = rest.min(h);
            total += gauss_legendre(len, |s| w(rk4_step(field, x, d, s).0))?;
            rest -= len;
            if rest <= 0.0 {
                break;
            }
        }
        Ok(total)
    }
}

const GL_NODES: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL_WEIGHTS: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

fn gauss_legendre<W: Fn(f64) -> Result<f64, LivError>>(h: f64, w: W) -> Result<f64, LivError> {
    if h <= 0.0 {
        return Ok(0.0);
    }
    let mut s = 0.0;
    for (t, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
        s += wt * w(0.5 * h * (1.0 + t))?;
    }
    Ok(0.5 * h * s)
}

/// Follows the leaf of `field` from a toward b until it passes the foot of b.
pub fn path_to_foot(field: &dyn LineField, a: Vec2, b: Vec2, step: f64) -> Result<LeafPath, LivError> {
    let d0 = field.direction(a);
    let mut dir = if d0.dot(&(b - a)) < 0.0 { -d0 } else { d0 };
    let mut x = a;
    let mut steps = Vec::new();
    let mut length = 0.0;
    let ahead = |z: Vec2, d: Vec2| (b - z).dot(&d);
    if (b - a).norm() == 0.0 {
        return Ok(LeafPath { steps, start: a, end: a, length: 0.0, miss: 0.0 });
    }
    let max_steps = ((b - a).norm() * 10.0 / step) as usize + 100;
    for _ in 0..max_steps {
        let (next, d, turn) = rk4_step(field, x, dir, step);
        if turn > MAX_TURN {
            return Err(FolError::StepRejected { angle: turn, at: [x.x, x.y] }.into());
        }
        if ahead(next, d) <= 0.0 {
            let (mut lo, mut hi) = (0.0, step);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let (z, dz, _) = rk4_step(field, x, dir, mid);
                if ahead(z, dz) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let h = 0.5 * (lo + hi);
            let end = rk4_step(field, x, dir, h).0;
            steps.push((x, dir, h));
            length += h;
            return Ok(LeafPath { steps, start: a, end, length, miss: (end - b).norm() });
        }
        steps.push((x, dir, step));
        length += step;
        x = next;
        dir = d;
    }
    Err(FolError::NoIntersection.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DPrime {
    pub value: f64,
    pub arclength: f64,
    pub miss: f64,
}

/// d'(a, b) = int e^psi along the center leaf from a to b.
pub fn dprime_distance(pot: &LivschitzPotential, a: Vec2, b: Vec2, step: f64) -> Result<DPrime, LivError> {
    let field = pot.bundle();
    let path = path_to_foot(&field, a, b, step)?;
    let value = path.integrate(&field, |z| Ok(pot.psi(z)?.value.exp()))?;
    Ok(DPrime { value, arclength: path.length, miss: path.miss })
}

/// Point at arclength s from x along the oriented sigma-leaf.
pub fn leaf_point(field: &dyn LineField, x: Vec2, s: f64, step: f64) -> Result<Vec2, LivError> {
    let orientation = if s >= 0.0 { 1 } else { -1 };
    let leaf = integrate_leaf(field, Sigma::Center, x, s.abs(), step, orientation)?;
    Ok(*leaf.points.last().unwrap())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSample {
    pub dprime: f64,
    pub dprime_image: f64,
    pub relative_error: f64,
}

/// Compares d'(f~x, f~y) with lambda d'(x, y) for y at center arclength `len` from x.
pub fn dprime_scaling(pot: &LivschitzPotential, x: Vec2, len: f64, step: f64) -> Result<ScalingSample, LivError> {
    let field = pot.bundle();
    let y = leaf_point(&field, x, len, step)?;
    let d = dprime_distance(pot, x, y, step)?;
    let di = dprime_distance(pot, pot.f.apply_lift(x), pot.f.apply_lift(y), step)?;
    let relative_error = (di.value / d.value - pot.lambda_ref).abs() / pot.lambda_ref;
    Ok(ScalingSample { dprime: d.value, dprime_image: di.value, relative_error })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Holonomy {
    pub dprime_i: f64,
    pub dprime_j: f64,
    pub ratio: f64,
}

/// Slides I = [x, z] on F^c(x) along unstable leaves to F^c(y), y on F^u(x) at arclength `slide`.
pub fn unstable_holonomy_ratio(
    pot: &LivschitzPotential,
    unstable: &dyn LineField,
    x: Vec2,
    len: f64,
    slide: f64,
    step: f64,
) -> Result<Holonomy, LivError> {
    let center = pot.bundle();
    let z = leaf_point(&center, x, len, step)?;
    let orientation = if slide >= 0.0 { 1 } else { -1 };
    let y = *integrate_leaf(unstable, Sigma::Unstable, x, slide.abs(), step, orientation)?.points.last().unwrap();
    let half_u = slide.abs() + len + 0.5;
    let lu = integrate_leaf_both(unstable, Sigma::Unstable, z, half_u, step)?;
    let lc = integrate_leaf_both(&center, Sigma::Center, y, 2.0 * len + 0.5, step)?;
    let w = global_product_intersection(&lu, &lc)?;
    let di = dprime_distance(pot, x, z, step)?;
    let dj = dprime_distance(pot, y, w, step)?;
    Ok(Holonomy { dprime_i: di.value, dprime_j: dj.value, ratio: dj.value / di.value })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterDiagnostics {
    /// Extrapolated lim d_{A^c}(hx, hy) / d_F(x, y) at each probe.
    pub derivative_limits: Vec<f64>,
    pub psi: Vec<f64>,
    /// Fitted constant in limit = e^{psi(x) + c}.
    pub c: f64,
    pub fit_residual: f64,
    /// |h(m) - (h(p) + h(q)) / 2| for the d'-midpoint m of [p, q].
    pub midpoint_deviations: Vec<f64>,
}

/// Derivative of h along center leaves and the midpoint property of h under d'.
pub fn h_center_diagnostics(
    h: &SemiConjugacy,
    pot: &LivschitzPotential,
    probes: &[Vec2],
    scale: f64,
    segment: f64,
    step: f64,
) -> Result<CenterDiagnostics, LivError> {
    let field = pot.bundle();
    let e = pot.f.eigen();
    let mut derivative_limits = Vec::new();
    let mut psi = Vec::new();
    let mut midpoint_deviations = Vec::new();
    for &x in probes {
        let hx = h.eval_h(x);
        let ratio = |d: f64| -> Result<f64, LivError> {
            let y = leaf_point(&field, x, d, step.min(d / 4.0))?;
            Ok(e.eigen_coords(h.eval_h(y) - hx).1.abs() / d)
        };
        // Richardson on r(d) = r0 + a d + b d^2 with d, d/2, d/4
        let (r1, r2, r4) = (ratio(scale)?, ratio(scale / 2.0)?, ratio(scale / 4.0)?);
        let q1 = 2.0 * r2 - r1;
        let q2 = 2.0 * r4 - r2;
        derivative_limits.push((4.0 * q2 - q1) / 3.0);
        psi.push(pot.psi(x)?.value);

        let q = leaf_point(&field, x, segment, step)?;
        let path = path_to_foot(&field, x, q, step)?;
        let density = |z: Vec2| Ok(pot.psi(z)?.value.exp());
        let total = path.integrate(&field, density)?;
        let (mut lo, mut hi) = (0.0, path.length);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if path.integrate_to(&field, &density, mid)? < 0.5 * total {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let m = path.point_at(&field, 0.5 * (lo + hi));
        let target = 0.5 * (hx + h.eval_h(q));
        midpoint_deviations.push((h.eval_h(m) - target).norm());
    }
    let logs: Vec<f64> = derivative_limits.iter().zip(&psi).map(|(r, p)| r.ln() - p).collect();
    let c = logs.iter().sum::<f64>() / logs.len().max(1) as f64;
    let fit_residual = logs.iter().map(|l| (l - c).abs()).fold(0.0, f64::max);
    Ok(CenterDiagnostics { derivative_limits, psi, c, fit_residual, midpoint_deviations })
}
