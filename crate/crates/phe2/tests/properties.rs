use phe2::cohomology::{cohomological_solve_samples, TOL_MEAN};
use phe2::endo::{DirectionMode, Mode, PerturbationSpec, TorusEndomorphism};
use phe2::families;
use phe2::lattice::{eigen_decompose, wrap};
use phe2::{Mat2, Vec2};
use proptest::prelude::*;
use std::f64::consts::PI;

fn general_map(k: [i64; 2], c: [f64; 2], s: [f64; 2], eps: f64) -> Option<TorusEndomorphism> {
    let pert = PerturbationSpec {
        modes: vec![Mode { k, cos: Vec2::new(c[0], c[1]), sin: Vec2::new(s[0], s[1]) }],
        epsilon: eps,
        direction_mode: DirectionMode::General,
    };
    TorusEndomorphism::new(families::standard_matrix(), pert, 64).ok()
}

fn coeff() -> impl Strategy<Value = [f64; 2]> {
    [-1.0..1.0f64, -1.0..1.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lift_is_equivariant(
        k in [-2i64..=2, -2i64..=2], c in coeff(), s in coeff(), eps in 0.0..0.04f64,
        x in [0.0..1.0f64, 0.0..1.0f64], n in [-3i64..=3, -3i64..=3],
    ) {
        let Some(f) = general_map(k, c, s, eps) else { return Ok(()) };
        let x = Vec2::new(x[0], x[1]);
        let m = Vec2::new(n[0] as f64, n[1] as f64);
        let lhs = f.apply_lift(x + m) - f.apply_lift(x);
        prop_assert!((lhs - f.a() * m).norm() < 1e-12);
    }

    #[test]
    fn jacobian_matches_central_differences(
        k in [-2i64..=2, -2i64..=2], c in coeff(), s in coeff(), eps in 0.0..0.04f64,
        x in [0.0..1.0f64, 0.0..1.0f64],
    ) {
        let Some(f) = general_map(k, c, s, eps) else { return Ok(()) };
        let x = Vec2::new(x[0], x[1]);
        let h = 1e-5;
        let mut fd = Mat2::zeros();
        for j in 0..2 {
            let mut dx = Vec2::zeros();
            dx[j] = h;
            fd.set_column(j, &((f.apply_lift(x + dx) - f.apply_lift(x - dx)) / (2.0 * h)));
        }
        prop_assert!((fd - f.jacobian(x)).abs().max() < 1e-6);
    }

    #[test]
    fn preimages_map_back(y in [0.0..1.0f64, 0.0..1.0f64], eps in 0.0..0.05f64) {
        let f = families::center_aligned(eps);
        let y = Vec2::new(y[0], y[1]);
        let pre = f.preimages(y).unwrap();
        prop_assert_eq!(pre.len(), 5);
        for x in pre {
            let back = wrap(f.apply(x)) - wrap(y);
            let d = back.map(|t| t - t.round());
            prop_assert!(d.norm() < 1e-10);
        }
    }

    #[test]
    fn coboundaries_are_recovered(a in -1.0..1.0f64, b in -1.0..1.0f64, phase in 0.0..1.0f64) {
        let theta = eigen_decompose(&families::standard_matrix()).unwrap().theta.rem_euclid(1.0);
        let phi = |x: f64| a * (2.0 * PI * (x + phase)).cos() + b * (4.0 * PI * x).sin();
        let samples: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).map(|x| phi(x) - phi(x + theta)).collect();
        let sol = cohomological_solve_samples(&samples, theta, TOL_MEAN).unwrap();
        let shift = sol.phi.eval(0.0) - phi(0.0);
        for i in 0..50 {
            let x = i as f64 / 50.0;
            prop_assert!((sol.phi.eval(x) - shift - phi(x)).abs() < 1e-10);
        }
    }
}

#[test]
fn unstable_aligned_center_is_linear_in_eigencoordinates() {
    // g parallel to e_u leaves the c-coordinate of f~ equal to that of A
    let f = families::unstable_aligned(0.05);
    let e = f.eigen().clone();
    for i in 0..20 {
        let x = Vec2::new(0.05 * i as f64, 0.37 + 0.01 * i as f64);
        let (_, c_f) = e.eigen_coords(f.apply_lift(x));
        let (_, c_a) = e.eigen_coords(f.a() * x);
        assert!((c_f - c_a).abs() < 1e-12);
    }
}
