//! Numerical laboratory for the equilibrium manifold of a pure exchange economy.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure numerics:
//!
//! - [`economy`]: closed-form Cobb-Douglas and CES demand, aggregate excess
//!   demand and equilibrium enumeration.
//! - [`manifold`]: price-income equilibria, the wealth/fiber chart of the
//!   equilibrium manifold, fibers and no-trade equilibria.
//! - [`geometry`]: extrinsic geometry of parametrized submanifolds (metric,
//!   normal frame, Gauss map, mean curvature, geodesic residuals, first
//!   variation of volume).
//! - [`entropy`]: Riemannian volume and differential entropy of parameter
//!   boxes, and same-boundary volume comparisons.
//! - [`helicoid`]: generalized helicoids and their hyperplane intersections.
//!
//! IO, configuration and the experiment runner live in the `eqmanifold-lab`
//! crate.
#![no_std]
// `!(x < tol)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dual;
pub mod economy;
pub mod entropy;
pub mod geometry;
pub mod helicoid;
pub mod manifold;
pub mod quadrature;

mod linalg;

pub use dual::{Dual, HyperDual, Scalar};
pub use linalg::Matrix;
pub use economy::{
    aggregate_excess, count_equilibria, demand, find_equilibria, DemandSpec, Economy,
    EconomyError, Endowment, EquilibriumSet, PriceVector, ScanConfig,
};
pub use geometry::{Chart, CurvatureReport, DiffSteps, GeometryError, GridSpec, ParamBox};
