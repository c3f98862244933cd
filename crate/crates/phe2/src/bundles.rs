//! Pointwise and gridded estimates of the invariant line fields E^c and E^u.

use crate::endo::TorusEndomorphism;
use crate::field::PeriodicField;
use crate::lattice::{line_angle, Vec2};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sigma {
    #[serde(rename = "c")]
    Center,
    #[serde(rename = "u")]
    Unstable,
}

/// An oriented unit line field on the plane, periodic or not.
pub trait LineField: Sync {
    fn direction(&self, x: Vec2) -> Vec2;
}

pub struct ConstantLine(pub Vec2);

impl LineField for ConstantLine {
    fn direction(&self, _x: Vec2) -> Vec2 {
        self.0
    }
}

impl<F: Fn(Vec2) -> Vec2 + Sync> LineField for F {
    fn direction(&self, x: Vec2) -> Vec2 {
        self(x)
    }
}

pub fn orient_like(v: Vec2, reference: Vec2) -> Vec2 {
    if v.dot(&reference) < 0.0 {
        -v
    } else {
        v
    }
}

/// Grid samples of a unit line field, oriented by a reference vector.
#[derive(Clone, Debug)]
pub struct DirectionField {
    pub values: PeriodicField<Vec2>,
    pub reference: Vec2,
}

impl DirectionField {
    pub fn from_fn<F: Fn(Vec2) -> Vec2 + Sync>(n: usize, reference: Vec2, f: F) -> Self {
        let values = PeriodicField::from_fn(n, |x| orient_like(f(x).normalize(), reference));
        DirectionField { values, reference }
    }

    pub fn constant(n: usize, v: Vec2) -> Self {
        DirectionField { values: PeriodicField::constant(n, v), reference: v }
    }

    /// Largest angle between any node value and v.
    pub fn max_deviation_from(&self, v: Vec2) -> f64 {
        self.values.values().iter().map(|&w| line_angle(w, v)).fold(0.0, f64::max)
    }
}

impl LineField for DirectionField {
    fn direction(&self, x: Vec2) -> Vec2 {
        orient_like(self.values.eval(x).normalize(), self.reference)
    }
}

/// E^c(x): pull e_c back along the forward orbit of x.
pub fn center_direction(f: &TorusEndomorphism, x: Vec2, depth: usize) -> Vec2 {
    let mut orbit = Vec::with_capacity(depth);
    let mut y = x;
    for _ in 0..depth {
        orbit.push(y);
        y = f.apply(y);
    }
    let mut w = f.eigen().e_c;
    for z in orbit.iter().rev() {
        let j = f.jacobian(*z);
        w = match j.try_inverse() {
            Some(ji) => (ji * w).normalize(),
            None => return Vec2::new(f64::NAN, f64::NAN),
        };
    }
    orient_like(w, f.eigen().e_c)
}

/// Lifted backward orbit x, f~^{-1}x, ..., f~^{-n}x.
pub fn backward_orbit(f: &TorusEndomorphism, x: Vec2, n: usize) -> Option<Vec<Vec2>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(x);
    let mut y = x;
    for _ in 0..n {
        y = f.lift_inverse(y).ok()?;
        out.push(y);
    }
    Some(out)
}

/// E^u(x): push e_u forward along the lifted backward branch (power method).
pub fn unstable_direction(f: &TorusEndomorphism, x: Vec2, depth: usize) -> Vec2 {
    let Some(orbit) = backward_orbit(f, x, depth) else {
        return Vec2::new(f64::NAN, f64::NAN);
    };
    push_forward(f, &orbit, f.eigen().e_u)
}

/// Pushes v along a backward branch given as [x, x_{-1}, ..., x_{-n}].
pub fn push_forward(f: &TorusEndomorphism, branch: &[Vec2], v: Vec2) -> Vec2 {
    let mut w = v;
    for z in branch[1..].iter().rev() {
        w = (f.jacobian(*z) * w).normalize();
    }
    orient_like(w, f.eigen().e_u)
}

/// E^u(x) by iterating the graph transform on slopes in eigen-coordinates.
/// A line (1, L) in (u, c) coordinates maps to slope (a_cu + a_cc L) / (a_uu + a_uc L).
pub fn unstable_direction_graph(f: &TorusEndomorphism, x: Vec2, depth: usize) -> Vec2 {
    let Some(orbit) = backward_orbit(f, x, depth) else {
        return Vec2::new(f64::NAN, f64::NAN);
    };
    let e = f.eigen();
    let p = crate::lattice::Mat2::from_columns(&[e.e_u, e.e_c]);
    let p_inv = p.try_inverse().expect("eigenbasis");
    let mut slope = 0.0;
    for z in orbit[1..].iter().rev() {
        let m = p_inv * f.jacobian(*z) * p;
        let (a_uu, a_uc, a_cu, a_cc) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        slope = (a_cu + a_cc * slope) / (a_uu + a_uc * slope);
    }
    orient_like((e.e_u + e.e_c * slope).normalize(), e.e_u)
}

/// Pointwise bundle evaluator, usable wherever a line field is expected.
pub struct PointwiseBundle<'a> {
    pub f: &'a TorusEndomorphism,
    pub sigma: Sigma,
    pub depth: usize,
}

impl<'a> PointwiseBundle<'a> {
    pub fn new(f: &'a TorusEndomorphism, sigma: Sigma, depth: usize) -> Self {
        PointwiseBundle { f, sigma, depth }
    }
}

impl LineField for PointwiseBundle<'_> {
    fn direction(&self, x: Vec2) -> Vec2 {
        match self.sigma {
            Sigma::Center => center_direction(self.f, x, self.depth),
            Sigma::Unstable => unstable_direction(self.f, x, self.depth),
        }
    }
}

/// ||Df(x)|_E|| for the unit direction v at x.
pub fn restricted_norm(f: &TorusEndomorphism, x: Vec2, v: Vec2) -> f64 {
    (f.jacobian(x) * v).norm()
}
