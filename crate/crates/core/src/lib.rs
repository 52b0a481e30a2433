//! Numerical laboratory for the stable norm of Finsler and Riemannian metrics on
//! the 2-torus.
//!
//! The crate computes shortest closed curves per homotopy class by descent on
//! discretized loops, extends the resulting marked length spectrum to a norm on
//! the plane with certified inner/outer bounds, and measures the convexity defect
//! of that norm near a direction. Quadratic pinching of the defect signals an
//! invariant torus in the geodesic flow; exponential flatness signals hyperbolic
//! minimizers. Floquet analysis of closed geodesics and an exact quadrature
//! oracle for rotationally symmetric metrics serve as independent cross-checks.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod geodesic_flow;
pub mod linalg;
pub mod loop_minimizer;
pub mod metrics;
pub mod quadrature;
pub mod rational_approx;
pub mod rotational_oracle;
pub mod stable_norm;

pub use error::{Error, Result};
pub use metrics::{FourierSeries, MetricSpec, TangentSample, Vec2};

/// Schema tag written into every JSON document produced by the crate.
pub const SCHEMA: &str = "snlab/1";
