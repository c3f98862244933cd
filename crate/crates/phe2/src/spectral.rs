//! Exact check that no eigenvalue of an integer matrix is a power of the other.
//!
//! With mu a root of x^2 - T x + D, mu^k = a_k + b_k mu in Z[mu] where
//! a_{k+1} = -D b_k and b_{k+1} = a_k + T b_k. Since 1 and mu are independent over Q,
//! lambda = T - mu equals mu^k exactly when (a_k, b_k) = (T, -1). Both roots share the
//! recurrence, so one run covers lambda = mu^k and mu = lambda^k.

use crate::lattice::{is_perfect_square, LatticeMatrix};
use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowerWitness {
    pub k: u32,
    pub a: String,
    pub b: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralCondition {
    pub ok: bool,
    pub witness: Option<PowerWitness>,
    pub checked: u32,
}

/// (a_k, b_k) for k = 1..=k_max.
pub fn power_coefficients(trace: i64, det: i64, k_max: u32) -> Vec<(BigInt, BigInt)> {
    let (t, d) = (BigInt::from(trace), BigInt::from(det));
    let mut out = Vec::with_capacity(k_max as usize);
    let (mut a, mut b) = (BigInt::from(0), BigInt::from(1));
    for _ in 0..k_max {
        out.push((a.clone(), b.clone()));
        let na = -&d * &b;
        let nb = &a + &t * &b;
        a = na;
        b = nb;
    }
    out
}

pub fn spectral_condition(m: &LatticeMatrix, k_max: u32) -> SpectralCondition {
    let t = BigInt::from(m.trace());
    let minus_one = BigInt::from(-1);
    for (i, (a, b)) in power_coefficients(m.trace(), m.det(), k_max).into_iter().enumerate() {
        if a == t && b == minus_one {
            return SpectralCondition {
                ok: false,
                witness: Some(PowerWitness { k: i as u32 + 1, a: a.to_string(), b: b.to_string() }),
                checked: i as u32 + 1,
            };
        }
    }
    SpectralCondition { ok: true, witness: None, checked: k_max }
}

/// Real, irrational spectrum with both eigenvalue moduli > 1.
pub fn is_expanding_irrational(m: &LatticeMatrix) -> bool {
    let disc = m.discriminant();
    if disc <= 0 || is_perfect_square(disc) || m.det() == 0 {
        return false;
    }
    let s = (disc as f64).sqrt();
    let t = m.trace() as f64;
    let big = if t >= 0.0 { (t + s) / 2.0 } else { (t - s) / 2.0 };
    let small = m.det() as f64 / big;
    big.abs() > 1.0 && small.abs() > 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tested: usize,
    pub draws: usize,
    pub failures: Vec<LatticeMatrix>,
}

/// Draws matrices with entries in [-r, r] until `count` expanding irrational ones are tested.
pub fn random_sweep(count: usize, range: i64, k_max: u32, seed: u64) -> SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tested = 0;
    let mut draws = 0;
    let mut failures = Vec::new();
    while tested < count {
        draws += 1;
        let mut e = [0i64; 4];
        for v in &mut e {
            *v = rng.random_range(-range..=range);
        }
        let m = LatticeMatrix::new(e[0], e[1], e[2], e[3]);
        if !is_expanding_irrational(&m) {
            continue;
        }
        tested += 1;
        if !spectral_condition(&m, k_max).ok {
            failures.push(m);
        }
    }
    SweepReport { tested, draws, failures }
}
