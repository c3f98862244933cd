//! Numerical laboratory for partially hyperbolic endomorphisms of the 2-torus homotopic to an
//! expanding integer matrix: cone and area certificates, the semi-conjugacy to the linear model,
//! invariant foliations, periodic data and the rigidity diagnostics built on them.

pub mod bundles;
pub mod cohomology;
pub mod config;
pub mod endo;
pub mod families;
pub mod field;
pub mod foliation;
pub mod hyperbolic;
pub mod lattice;
pub mod livschitz;
pub mod periodic;
pub mod pipeline;
pub mod semiconj;
pub mod spectral;

pub use lattice::{Mat2, Vec2};
