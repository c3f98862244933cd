//! Cone certification, bundle estimation, specialness, area expansion and the C^2 criterion.

use crate::bundles::{
    center_direction, push_forward, unstable_direction, unstable_direction_graph, DirectionField,
    LineField,
};
use crate::endo::{EndoError, TorusEndomorphism};
use crate::field::node;
use crate::lattice::{line_angle, Vec2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HypError {
    #[error("bundle estimate did not settle: angle change {change:e} > {tol:e}")]
    NoConvergence { change: f64, tol: f64 },
    #[error(transparent)]
    Endo(#[from] EndoError),
}

#[derive(Clone, Debug)]
pub enum ConeAxis {
    Constant(Vec2),
    Field(DirectionField),
}

#[derive(Clone, Debug)]
pub struct ConeField {
    pub axis: ConeAxis,
    pub aperture: f64,
}

impl ConeField {
    pub fn new(axis: Vec2, aperture: f64) -> Self {
        assert!(aperture > 0.0 && aperture < std::f64::consts::FRAC_PI_2, "aperture out of range");
        ConeField { axis: ConeAxis::Constant(axis.normalize()), aperture }
    }

    /// Axis e_u, aperture half the angle between e_u and e_c.
    pub fn default_for(f: &TorusEndomorphism) -> Self {
        let e = f.eigen();
        Self::new(e.e_u, 0.5 * line_angle(e.e_u, e.e_c))
    }

    pub fn axis_at(&self, x: Vec2) -> Vec2 {
        match &self.axis {
            ConeAxis::Constant(v) => *v,
            ConeAxis::Field(d) => d.direction(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub cone_ok: bool,
    pub expansion_margin: f64,
    pub invariance_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaCert {
    pub area_ok: bool,
    pub rho_est: f64,
    pub n_witness: Option<usize>,
    /// m_n = min over the grid of |det Df^n|, n = 1..=n_max.
    pub m: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct C2Report {
    pub c2_inf: f64,
    pub c2_flag: bool,
    pub min_angle: f64,
    pub identity_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityCert {
    pub cone_ok: bool,
    pub expansion_margin: f64,
    pub invariance_margin: f64,
    pub area_ok: bool,
    pub rho_est: f64,
    pub n_witness: Option<usize>,
    pub area_minima: Vec<f64>,
    pub c2_inf: f64,
    pub c2_flag: bool,
    pub min_angle: f64,
    pub identity_residual: f64,
    pub specialness_defect: f64,
    pub specialness_depth: usize,
    pub ec_constant: bool,
    pub ec_max_deviation: f64,
}

impl HyperbolicityCert {
    pub fn assemble(
        cone: ConeReport,
        area: AreaCert,
        c2: C2Report,
        specialness_defect: f64,
        specialness_depth: usize,
        ec_max_deviation: f64,
        angle_tol: f64,
    ) -> Self {
        HyperbolicityCert {
            cone_ok: cone.cone_ok,
            expansion_margin: cone.expansion_margin,
            invariance_margin: cone.invariance_margin,
            area_ok: area.area_ok,
            rho_est: area.rho_est,
            n_witness: area.n_witness,
            area_minima: area.m,
            c2_inf: c2.c2_inf,
            c2_flag: c2.c2_flag,
            min_angle: c2.min_angle,
            identity_residual: c2.identity_residual,
            specialness_defect,
            specialness_depth,
            ec_constant: ec_max_deviation <= angle_tol,
            ec_max_deviation,
        }
    }
}

fn grid_points(n: usize) -> Vec<Vec2> {
    (0..n * n).map(|idx| node(n, idx / n, idx % n)).collect()
}

fn rotate(v: Vec2, a: f64) -> Vec2 {
    let (s, c) = a.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// Checks Df(x) C_x inside int C_{fx} and |Df v| > 1 at n^2 grid points and m cone directions.
pub fn certify_cone_invariance(
    f: &TorusEndomorphism,
    cone: &ConeField,
    n: usize,
    m: usize,
) -> ConeReport {
    let m = m.max(2);
    let per_point: Vec<(f64, f64)> = grid_points(n)
        .into_par_iter()
        .map(|x| {
            let axis = cone.axis_at(x);
            let fx = f.apply(x);
            let axis_img = cone.axis_at(fx);
            let j = f.jacobian(x);
            let mut expansion = f64::INFINITY;
            let mut clearance = f64::INFINITY;
            for s in 0..m {
                let a = -cone.aperture + 2.0 * cone.aperture * s as f64 / (m - 1) as f64;
                let v = rotate(axis, a);
                let w = j * v;
                expansion = expansion.min(w.norm() - 1.0);
                clearance = clearance.min(cone.aperture - line_angle(w, axis_img));
            }
            (expansion, clearance)
        })
        .collect();
    let expansion_margin = per_point.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let invariance_margin = per_point.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    ConeReport {
        cone_ok: expansion_margin > 0.0 && invariance_margin > 0.0,
        expansion_margin,
        invariance_margin,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleMethod {
    Power,
    GraphTransform,
}

/// Grid estimates (E_c, E_u) after `iters` steps; fails when the last step still moves a node by more than `tol`.
pub fn estimate_bundles(
    f: &TorusEndomorphism,
    iters: usize,
    n: usize,
    method: BundleMethod,
    tol: f64,
) -> Result<(DirectionField, DirectionField), HypError> {
    let iters = iters.max(1);
    let e = f.eigen().clone();
    let pts = grid_points(n);
    let unstable = |x: Vec2, k: usize| match method {
        BundleMethod::Power => unstable_direction(f, x, k),
        BundleMethod::GraphTransform => unstable_direction_graph(f, x, k),
    };
    let samples: Vec<(Vec2, Vec2, f64)> = pts
        .into_par_iter()
        .map(|x| {
            let c = center_direction(f, x, iters);
            let c_prev = center_direction(f, x, iters - 1);
            let u = unstable(x, iters);
            let u_prev = if iters > 1 { unstable(x, iters - 1) } else { e.e_u };
            let change = line_angle(c, c_prev).max(line_angle(u, u_prev));
            let change = if change.is_nan() { f64::INFINITY } else { change };
            (c, u, change)
        })
        .collect();
    let change = samples.iter().map(|s| s.2).fold(0.0, f64::max);
    if change > tol {
        return Err(HypError::NoConvergence { change, tol });
    }
    let ec = crate::field::PeriodicField::from_values(n, samples.iter().map(|s| s.0).collect())
        .expect("grid size");
    let eu = crate::field::PeriodicField::from_values(n, samples.iter().map(|s| s.1).collect())
        .expect("grid size");
    Ok((
        DirectionField { values: ec, reference: e.e_c },
        DirectionField { values: eu, reference: e.e_u },
    ))
}

/// Backward branches of depth `depth` at x: exhaustive to depth 3, then one random continuation per prefix.
pub fn backward_branches<R: Rng>(
    f: &TorusEndomorphism,
    x: Vec2,
    depth: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Vec2>>, EndoError> {
    let exhaustive = depth.min(3);
    let mut paths = vec![vec![x]];
    for _ in 0..exhaustive {
        let mut next = Vec::with_capacity(paths.len() * f.degree());
        for p in &paths {
            for y in f.preimages(*p.last().unwrap())? {
                let mut q = p.clone();
                q.push(y);
                next.push(q);
            }
        }
        paths = next;
    }
    for p in paths.iter_mut() {
        for _ in exhaustive..depth {
            let b = rng.random_range(0..f.degree());
            let y = f.preimage_on_branch(*p.last().unwrap(), b)?;
            p.push(y);
        }
    }
    Ok(paths)
}

/// Maximum pairwise angle between e_u pushed forward along different backward branches.
pub fn specialness_defect<R: Rng>(
    f: &TorusEndomorphism,
    depth: usize,
    samples: &[Vec2],
    rng: &mut R,
) -> Result<f64, EndoError> {
    let axis = f.eigen().e_u;
    let mut worst: f64 = 0.0;
    for &x in samples {
        let branches = backward_branches(f, x, depth, rng)?;
        let dirs: Vec<Vec2> = branches.iter().map(|b| push_forward(f, b, axis)).collect();
        for i in 0..dirs.len() {
            for j in i + 1..dirs.len() {
                worst = worst.max(line_angle(dirs[i], dirs[j]));
            }
        }
    }
    Ok(worst)
}

/// m_n = min over the grid of |det Df^n| (accumulated in log space) for n = 1..=n_max.
pub fn certify_area_expanding(f: &TorusEndomorphism, n_max: usize, n: usize) -> AreaCert {
    let logs: Vec<Vec<f64>> = grid_points(n)
        .into_par_iter()
        .map(|x| {
            let mut y = x;
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(n_max);
            for _ in 0..n_max {
                acc += f.jacobian(y).determinant().abs().ln();
                out.push(acc);
                y = f.apply(y);
            }
            out
        })
        .collect();
    let m: Vec<f64> = (0..n_max)
        .map(|k| logs.iter().map(|l| l[k]).fold(f64::INFINITY, f64::min).exp())
        .collect();
    let n_witness = m.iter().position(|&v| v > 1.0).map(|i| i + 1);
    let rho_est = m
        .iter()
        .enumerate()
        .map(|(i, &v)| v.powf(1.0 / (i + 1) as f64))
        .fold(f64::NEG_INFINITY, f64::max);
    AreaCert { area_ok: n_witness.is_some(), rho_est, n_witness, m }
}

/// inf ||Df|E^c|| ||Df|E^u|| over the grid, the minimal bundle angle, and the residual of
/// ||Df^k|E^c|| ||Df^k|E^u|| sin(angle at f^k x) = |det Df^k| sin(angle at x), k = 1..=k_max,
/// with the bundles at f^k x recomputed rather than transported.
pub fn c2_criterion(
    f: &TorusEndomorphism,
    ec: &dyn LineField,
    eu: &dyn LineField,
    n: usize,
    identity_points: &[Vec2],
    k_max: usize,
) -> C2Report {
    let vals: Vec<(f64, f64)> = grid_points(n)
        .into_par_iter()
        .map(|x| {
            let (c, u) = (ec.direction(x), eu.direction(x));
            let j = f.jacobian(x);
            ((j * c).norm() * (j * u).norm(), line_angle(c, u))
        })
        .collect();
    let c2_inf = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let min_angle = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let identity_residual = identity_points
        .par_iter()
        .map(|&x0| {
            let (c0, u0) = (ec.direction(x0), eu.direction(x0));
            let mut x = x0;
            let (mut vc, mut vu) = (c0, u0);
            let mut logdet = 0.0;
            let mut worst: f64 = 0.0;
            for _ in 0..k_max {
                let j = f.jacobian(x);
                logdet += j.determinant().abs().ln();
                vc = j * vc;
                vu = j * vu;
                x = f.apply_lift(x);
                let (c, u) = (ec.direction(x), eu.direction(x));
                let lhs = vc.norm() * vu.norm() * line_angle(c, u).sin();
                let rhs = logdet.exp() * line_angle(c0, u0).sin();
                worst = worst.max((lhs - rhs).abs() / rhs);
            }
            worst
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);
    C2Report { c2_inf, c2_flag: c2_inf > 1.0, min_angle, identity_residual }
}
