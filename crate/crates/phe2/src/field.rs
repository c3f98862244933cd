//! Uniform periodic grids with bilinear interpolation.

use crate::lattice::Vec2;
use rayon::prelude::*;
use std::ops::{Add, Mul, Sub};

pub trait FieldValue:
    Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl FieldValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl FieldValue for Vec2 {
    fn zero() -> Self {
        Vec2::zeros()
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Samples of a Z^2-periodic function on the nodes (i/N, j/N), row index i along x_1.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicField<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: FieldValue> PeriodicField<T> {
    pub fn constant(n: usize, v: T) -> Self {
        assert!(n > 0, "empty field");
        PeriodicField { n, values: vec![v; n * n] }
    }

    pub fn from_fn<F>(n: usize, f: F) -> Self
    where
        F: Fn(Vec2) -> T + Sync,
    {
        assert!(n > 0, "empty field");
        let values = (0..n * n)
            .into_par_iter()
            .map(|idx| f(node(n, idx / n, idx % n)))
            .collect();
        PeriodicField { n, values }
    }

    pub fn from_values(n: usize, values: Vec<T>) -> Option<Self> {
        (n > 0 && values.len() == n * n).then_some(PeriodicField { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.values[i * self.n + j] = v;
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        node(self.n, i, j)
    }

    pub fn eval(&self, x: Vec2) -> T {
        let n = self.n as i64;
        let u = x.x.rem_euclid(1.0) * self.n as f64;
        let v = x.y.rem_euclid(1.0) * self.n as f64;
        let (fu, fv) = (u.floor(), v.floor());
        let (tu, tv) = (u - fu, v - fv);
        let i0 = (fu as i64).rem_euclid(n) as usize;
        let j0 = (fv as i64).rem_euclid(n) as usize;
        let i1 = (i0 + 1) % self.n;
        let j1 = (j0 + 1) % self.n;
        let a = self.get(i0, j0) * ((1.0 - tu) * (1.0 - tv));
        let b = self.get(i1, j0) * (tu * (1.0 - tv));
        let c = self.get(i0, j1) * ((1.0 - tu) * tv);
        let d = self.get(i1, j1) * (tu * tv);
        a + b + c + d
    }

    pub fn map<U: FieldValue, F: Fn(T) -> U + Sync>(&self, f: F) -> PeriodicField<U> {
        PeriodicField { n: self.n, values: self.values.par_iter().map(|&v| f(v)).collect() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.magnitude()).fold(0.0, f64::max)
    }

    /// Sup-norm distance to a field of the same resolution.
    pub fn max_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n, "resolution mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).magnitude())
            .fold(0.0, f64::max)
    }
}

pub fn node(n: usize, i: usize, j: usize) -> Vec2 {
    Vec2::new(i as f64 / n as f64, j as f64 / n as f64)
}
