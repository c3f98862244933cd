//! Map families used by the experiments and tests.

use crate::endo::{DirectionMode, EndoError, Mode, PerturbationSpec, TorusEndomorphism};
use crate::lattice::{eigen_decompose, LatticeMatrix};
use std::f64::consts::PI;

pub const GRID: usize = 256;

pub fn standard_matrix() -> LatticeMatrix {
    LatticeMatrix::new(3, 1, 1, 2)
}

pub fn linear() -> TorusEndomorphism {
    TorusEndomorphism::new(standard_matrix(), PerturbationSpec::zero(), 16).expect("linear map")
}

fn aligned(
    mode: DirectionMode,
    k: [i64; 2],
    cos: f64,
    sin: f64,
    eps: f64,
) -> Result<TorusEndomorphism, EndoError> {
    let m = standard_matrix();
    let e = eigen_decompose(&m)?;
    let dir = match mode {
        DirectionMode::UnstableAligned => e.e_u,
        _ => e.e_c,
    };
    let pert = PerturbationSpec {
        modes: vec![Mode { k, cos: dir * cos, sin: dir * sin }],
        epsilon: eps,
        direction_mode: mode,
    };
    TorusEndomorphism::new(m, pert, GRID)
}

/// g = cos(2 pi x_1) e_c. E^c is the constant e_c; the map is not special.
pub fn center_aligned(eps: f64) -> TorusEndomorphism {
    aligned(DirectionMode::CenterAligned, [1, 0], 1.0, 0.0, eps).expect("center-aligned family")
}

/// g = cos(2 pi x_1) e_u. E^u is the constant e_u, so the map is special.
pub fn unstable_aligned(eps: f64) -> TorusEndomorphism {
    aligned(DirectionMode::UnstableAligned, [1, 0], 1.0, 0.0, eps).expect("unstable-aligned family")
}

/// Center multiplier at the fixed point 0 of the det-deficient family.
pub const DEFICIENT_CENTER_MULTIPLIER: f64 = 0.13;

/// g = -sin(2 pi (x_1 - x_2)) e_c, with eps tuned so that Df(0) contracts e_c by 0.13.
/// det Df(0) < 1, so the map is not area expanding, and h collapses a center arc through 0.
pub fn det_deficient() -> TorusEndomorphism {
    let e = eigen_decompose(&standard_matrix()).unwrap();
    let kc = e.e_c.x - e.e_c.y;
    let eps = (e.lambda_c - DEFICIENT_CENTER_MULTIPLIER) / (2.0 * PI * kc);
    aligned(DirectionMode::CenterAligned, [1, -1], 0.0, -1.0, eps).expect("det-deficient family")
}

/// det Df < 1 on a disk, yet |det Df^3| > 1 everywhere.
pub fn area_witness_three() -> TorusEndomorphism {
    aligned(DirectionMode::UnstableAligned, [1, 1], 1.0, 0.0, 0.35).expect("area witness family")
}
