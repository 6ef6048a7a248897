//! Numerical realization of the linear skew-product semiflow generated by
//! a nonautonomous divergence-form parabolic equation
//!
//! ```text
//! u_t = div(a(x) grad u) + a0(t, x) u     in Ω,
//! ∂u/∂ν + c(x) u = 0                      on ∂Ω,
//! ```
//!
//! together with its principal Floquet bundle, exponential-separation
//! constants and the uniqueness (up to a positive factor) of globally
//! positive solutions.
//!
//! Layout:
//! - [`mesh`], [`banded`], [`operator`], [`spectrum`]: spatial discretization.
//! - [`hull`]: almost-periodic coefficient families and their torus hulls.
//! - [`propagation`]: positivity-preserving propagator, time-1 cocycle, adjoint.
//! - [`hilbert`], [`bundle`], [`separation`]: principal bundle and separation.
//! - [`positivity`]: globally positive solutions, uniqueness and membership.
//! - [`par`]: data-parallel map with a sequential fallback.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the stencils.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod bundle;
mod error;
pub mod hilbert;
pub mod hull;
pub mod mesh;
pub mod operator;
pub mod par;
pub mod positivity;
pub mod propagation;
pub mod separation;
pub mod spectrum;

pub use error::{Error, Result};

pub use bundle::{OrbitFibers, PrincipalFiber};
pub use hull::{CoefficientField, FieldKind, HullPoint, Profile, SampleMode};
pub use mesh::SpatialMesh;
pub use operator::EllipticOperator;
pub use par::Execution;
pub use propagation::{Propagator, PropagatorConfig, Scheme, Trajectory};
pub use separation::SeparationEstimate;
